#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dacl/config.hpp"
#include "dacl/contrastive.hpp"
#include "dacl/encoder.hpp"
#include "dacl/tensor.hpp"
#include "dacl/text.hpp"

namespace dacl {

inline constexpr std::size_t kNumClasses = 2;
inline constexpr double kInitStddev = 0.02;

struct Classifier {
    Tensor weight;  // [d, 2]
    Tensor bias;    // [2]
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// The full classifier: embeddings, gated encoder stack, mean-pooled linear head,
/// and (when contrastive learning is on) the projection head.
struct Model {
    ModelConfig config;
    EmbeddingTables embeddings;
    std::vector<EncoderLayer> layers;
    Classifier classifier;
    std::optional<ProjectionHead> projection;

    /// Every parameter in a fixed order with a stable dotted name.
    std::vector<NamedTensor> parameters() const;
    std::size_t parameter_count() const;
    std::size_t projection_parameter_count() const;
};

/// Closed-form parameter count of the model a config describes.
std::size_t expected_parameter_count(const ModelConfig& config);

/// Weights ~ N(0, 0.02), biases 0, layer-norm gain 1 / bias 0. Each parameter draws
/// from its own stream keyed by (config.seed, name), so variants that share a
/// parameter name share its initial value. config.vocab_size must be set.
Model init_model(const ModelConfig& config);

/// With frozen_layers > 0, clears requires_grad on the embedding tables and the
/// first `frozen_layers` layers; 0 leaves everything trainable. Throws ConfigError
/// when frozen_layers > n_layers.
void freeze(Model& model, std::size_t frozen_layers);

/// Seeds a generator from the master seed and a stream label.
std::mt19937_64 derive_rng(std::uint64_t seed, const std::string& stream);

struct ForwardOutput {
    EncoderOutput encoded;
    Tensor sentence;  // mean-pooled last layer, [B, d]
    Tensor logits;    // [B, 2]
};

ForwardOutput forward(const Model& model, const Batch& batch, ForwardContext& ctx);

/// The representation the projection head consumes ([CLS] state or mean pool).
Tensor contrastive_input(const Model& model, const ForwardOutput& out);

std::vector<int> predict(const Model& model, const Batch& batch);

/// Projects a dataset in evaluation mode (no dropout). Requires a projection head.
ProjectedBatch project_dataset(const Model& model, std::span<const Example> examples, const Vocab& vocab,
                               std::size_t batch_size);

}  // namespace dacl
