#include "dacl/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dacl/errors.hpp"

namespace dacl {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct KeyInfo {
    std::string name;
    std::string help;
    std::function<void(ModelConfig&, const std::string&)> set;
    std::function<std::string(const ModelConfig&)> get;
    std::function<nlohmann::json(const ModelConfig&)> json;
};

#define DACL_SIZE_KEY(field, help)                                                                   \
    KeyInfo {                                                                                       \
        #field, help, [](ModelConfig& c, const std::string& v) { c.field = parse_size(#field, v); }, \
            [](const ModelConfig& c) { return std::to_string(c.field); },                           \
            [](const ModelConfig& c) { return nlohmann::json(c.field); }                            \
    }
#define DACL_DOUBLE_KEY(field, help)                                                                   \
    KeyInfo {                                                                                         \
        #field, help, [](ModelConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
            [](const ModelConfig& c) { return fmt_double(c.field); },                                 \
            [](const ModelConfig& c) { return nlohmann::json(c.field); }                              \
    }
#define DACL_BOOL_KEY(field, help)                                                                   \
    KeyInfo {                                                                                       \
        #field, help, [](ModelConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }, \
            [](const ModelConfig& c) { return std::string(c.field ? "true" : "false"); },           \
            [](const ModelConfig& c) { return nlohmann::json(c.field); }                            \
    }

const std::vector<KeyInfo>& key_table() {
    static const std::vector<KeyInfo> table = {
        DACL_SIZE_KEY(d_model, "hidden width of the encoder"),
        DACL_SIZE_KEY(n_heads, "attention heads per layer (must divide d_model)"),
        DACL_SIZE_KEY(n_layers, "encoder layers"),
        DACL_SIZE_KEY(regulator_hidden, "hidden width of the head-weight regulator MLP"),
        DACL_SIZE_KEY(projection_dim, "output width of the contrastive projection head"),
        DACL_SIZE_KEY(projection_hidden, "hidden width of the projection head (0 = d_model)"),
        DACL_SIZE_KEY(vocab_size, "embedding rows (0 = size of the vocabulary)"),
        DACL_SIZE_KEY(max_len, "maximum tokens per example including [CLS]/[SEP]"),
        DACL_DOUBLE_KEY(dropout, "dropout probability (attention/FFN outputs, projection head)"),
        DACL_SIZE_KEY(freeze_layers, "number of leading encoder layers frozen with the embeddings"),
        DACL_BOOL_KEY(dynamic_attention, "gate heads with the regulator (false = uniform 1/h)"),
        DACL_BOOL_KEY(contrastive, "build the projection head and the contrastive loss"),
        KeyInfo{"scl_pooling", "sentence vector fed to the projection head: cls or mean",
                [](ModelConfig& c, const std::string& v) {
                    if (v == "cls") {
                        c.scl_pooling = SclPooling::Cls;
                    } else if (v == "mean") {
                        c.scl_pooling = SclPooling::Mean;
                    } else {
                        throw ConfigError("config key 'scl_pooling' expects cls or mean, got '" + v + "'");
                    }
                },
                [](const ModelConfig& c) { return std::string(c.scl_pooling == SclPooling::Cls ? "cls" : "mean"); },
                [](const ModelConfig& c) { return nlohmann::json(c.scl_pooling == SclPooling::Cls ? "cls" : "mean"); }},
        DACL_DOUBLE_KEY(temperature, "contrastive temperature tau"),
        DACL_DOUBLE_KEY(scl_weight, "weight lambda of the contrastive term in the total loss"),
        DACL_DOUBLE_KEY(lr, "peak AdamW learning rate"),
        DACL_DOUBLE_KEY(weight_decay, "decoupled AdamW weight decay"),
        DACL_DOUBLE_KEY(beta1, "AdamW first-moment decay"),
        DACL_DOUBLE_KEY(beta2, "AdamW second-moment decay"),
        DACL_DOUBLE_KEY(adam_eps, "AdamW denominator epsilon"),
        DACL_DOUBLE_KEY(warmup_ratio, "fraction of total steps used for linear warmup"),
        DACL_DOUBLE_KEY(grad_clip, "global gradient-norm clip (0 disables)"),
        DACL_SIZE_KEY(epochs, "maximum training epochs"),
        DACL_SIZE_KEY(batch_size, "examples per batch"),
        DACL_SIZE_KEY(patience, "epochs without validation improvement before stopping"),
        DACL_SIZE_KEY(min_freq, "minimum token frequency for the vocabulary"),
        DACL_SIZE_KEY(max_vocab, "vocabulary size cap including specials (0 = none)"),
        DACL_DOUBLE_KEY(val_fraction, "validation share used by prepare"),
        DACL_DOUBLE_KEY(test_fraction, "test share used by prepare"),
        KeyInfo{"seed", "master seed (init, data order and dropout streams derive from it)",
                [](ModelConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                [](const ModelConfig& c) { return std::to_string(c.seed); },
                [](const ModelConfig& c) { return nlohmann::json(c.seed); }},
    };
    return table;
}

#undef DACL_SIZE_KEY
#undef DACL_DOUBLE_KEY
#undef DACL_BOOL_KEY

const KeyInfo& find_key(const std::string& key) {
    for (const auto& k : key_table()) {
        if (k.name == key) return k;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (d_model == 0) fail("d_model must be positive");
    if (n_heads == 0 || d_model % n_heads != 0) {
        fail("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
    }
    if (freeze_layers > n_layers) fail("freeze_layers must be between 0 and n_layers");
    if (!(temperature > 0.0)) fail("temperature must be positive");
    if (!(scl_weight >= 0.0)) fail("scl_weight must be non-negative");
    if (dynamic_attention && regulator_hidden == 0) fail("regulator_hidden must be positive");
    if (contrastive && projection_dim == 0) fail("projection_dim must be positive");
    if (max_len < 2) fail("max_len must be at least 2");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
    if (lr < 0.0) fail("lr must be non-negative");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail("beta1/beta2 must be in [0, 1)");
    if (adam_eps <= 0.0) fail("adam_eps must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0) fail("warmup_ratio must be in [0, 1]");
    if (grad_clip < 0.0) fail("grad_clip must be non-negative");
    if (epochs == 0) fail("epochs must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
        fail("val_fraction + test_fraction must be in [0, 1)");
    }
}

void ModelConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, trim(value)); }

std::string ModelConfig::get(const std::string& key) const { return find_key(key).get(*this); }

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : key_table()) j[k.name] = k.json(*this);
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) {
            c.set(key, value.get<std::string>());
        } else if (value.is_boolean()) {
            c.set(key, value.get<bool>() ? "true" : "false");
        } else if (value.is_number_unsigned() || value.is_number_integer()) {
            c.set(key, std::to_string(value.get<std::uint64_t>()));
        } else if (value.is_number_float()) {
            c.set(key, fmt_double(value.get<double>()));
        } else {
            throw ConfigError("config key '" + key + "' has an unsupported JSON type");
        }
    }
    return c;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
    static const auto keys = [] {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& k : key_table()) out.emplace_back(k.name, k.help);
        return out;
    }();
    return keys;
}

ModelConfig bert_base_config() {
    ModelConfig c;
    c.d_model = 768;
    c.n_heads = 12;
    c.n_layers = 12;
    c.freeze_layers = 6;
    c.regulator_hidden = 64;
    c.projection_dim = 256;
    c.projection_hidden = 0;
    c.max_len = 256;
    c.lr = 3e-5;
    return c;
}

void apply_config_text(ModelConfig& config, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_config_file(ModelConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(config, ss.str(), path.string());
}

void apply_env_overrides(ModelConfig& config) {
    for (const auto& k : key_table()) {
        std::string var = kEnvPrefix;
        for (char c : k.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(var.c_str())) {
            try {
                k.set(config, trim(v));
            } catch (const ConfigError& e) {
                throw ConfigError("environment " + var + ": " + e.what());
            }
        }
    }
}

}  // namespace dacl
