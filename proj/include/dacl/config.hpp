#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace dacl {

enum class SclPooling { Cls, Mean };

/// Architecture, objective and training hyperparameters.
///
/// Defaults describe the desk-scale toy model. bert_base_config() returns the
/// BERT-base-shaped configuration (d=768, 12 heads, 12 layers with the first 6
/// frozen, regulator width 64, projection 256, AdamW at 3e-5).
struct ModelConfig {
    // architecture
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 4;
    std::size_t regulator_hidden = 32;
    std::size_t projection_dim = 32;
    std::size_t projection_hidden = 0;  // 0 -> d_model
    std::size_t vocab_size = 0;         // taken from the vocabulary when 0
    std::size_t max_len = 128;
    double dropout = 0.1;
    std::size_t freeze_layers = 0;
    bool dynamic_attention = true;  // false: fixed uniform head weights, no regulator
    bool contrastive = true;        // false: no projection head, SCL term dropped
    SclPooling scl_pooling = SclPooling::Cls;

    // objective
    double temperature = 0.07;
    double scl_weight = 0.3;

    // optimizer and schedule
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double warmup_ratio = 0.1;
    double grad_clip = 1.0;  // global-norm clip; 0 disables
    std::size_t epochs = 12;
    std::size_t batch_size = 32;
    std::size_t patience = 3;

    // data
    std::size_t min_freq = 1;
    std::size_t max_vocab = 20000;
    double val_fraction = 0.1;
    double test_fraction = 0.2;

    std::uint64_t seed = 7;

    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t ffn_dim() const { return 4 * d_model; }
    std::size_t proj_hidden() const { return projection_hidden == 0 ? d_model : projection_hidden; }
    bool uses_scl() const { return contrastive && scl_weight > 0.0; }

    /// Throws ConfigError naming the offending key.
    void validate() const;

    /// Sets one key from its textual value. Throws ConfigError on an unknown key or
    /// an unparsable value.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Documented configuration keys, in display order, with one-line descriptions.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Prefix for environment overrides: DACL_<KEY> with the key upper-cased.
inline constexpr const char* kEnvPrefix = "DACL_";

ModelConfig bert_base_config();

/// Applies a flat `key = value` document (# comments, blank lines allowed).
void apply_config_text(ModelConfig& config, const std::string& text, const std::string& source);
void apply_config_file(ModelConfig& config, const std::filesystem::path& path);
/// Applies DACL_* variables from the environment for every known key.
void apply_env_overrides(ModelConfig& config);

}  // namespace dacl
