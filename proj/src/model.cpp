#include "dacl/model.hpp"

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

class Initializer {
   public:
    explicit Initializer(std::uint64_t seed) : seed_(seed) {}

    Tensor weight(const std::string& name, Shape shape) const {
        auto rng = derive_rng(seed_, "init:" + name);
        return Tensor::randn(std::move(shape), kInitStddev, rng, true);
    }
    static Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
    static Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

   private:
    std::uint64_t seed_;
};

}  // namespace

std::mt19937_64 derive_rng(std::uint64_t seed, const std::string& stream) {
    const auto h = fnv1a(stream);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

std::vector<NamedTensor> Model::parameters() const {
    std::vector<NamedTensor> out;
    out.push_back({"embeddings.token", embeddings.token});
    out.push_back({"embeddings.position", embeddings.position});
    out.push_back({"embeddings.segment", embeddings.segment});
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        for (std::size_t h = 0; h < layer.attention.wq.size(); ++h) {
            const std::string hs = "." + std::to_string(h);
            out.push_back({p + "attention.wq" + hs, layer.attention.wq[h]});
            out.push_back({p + "attention.wk" + hs, layer.attention.wk[h]});
            out.push_back({p + "attention.wv" + hs, layer.attention.wv[h]});
        }
        out.push_back({p + "attention.wo", layer.attention.wo});
        out.push_back({p + "attention.bo", layer.attention.bo});
        if (layer.regulator) {
            out.push_back({p + "regulator.w1", layer.regulator->w1});
            out.push_back({p + "regulator.b1", layer.regulator->b1});
            out.push_back({p + "regulator.w2", layer.regulator->w2});
            out.push_back({p + "regulator.b2", layer.regulator->b2});
        }
        out.push_back({p + "ln1.gain", layer.ln1_gain});
        out.push_back({p + "ln1.bias", layer.ln1_bias});
        out.push_back({p + "ffn.w1", layer.ffn_w1});
        out.push_back({p + "ffn.b1", layer.ffn_b1});
        out.push_back({p + "ffn.w2", layer.ffn_w2});
        out.push_back({p + "ffn.b2", layer.ffn_b2});
        out.push_back({p + "ln2.gain", layer.ln2_gain});
        out.push_back({p + "ln2.bias", layer.ln2_bias});
    }
    out.push_back({"classifier.weight", classifier.weight});
    out.push_back({"classifier.bias", classifier.bias});
    if (projection) {
        out.push_back({"projection.w1", projection->w1});
        out.push_back({"projection.b1", projection->b1});
        out.push_back({"projection.w2", projection->w2});
        out.push_back({"projection.b2", projection->b2});
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

std::size_t Model::projection_parameter_count() const {
    if (!projection) return 0;
    return projection->w1.numel() + projection->b1.numel() + projection->w2.numel() + projection->b2.numel();
}

std::size_t expected_parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model, f = c.ffn_dim(), r = c.regulator_hidden, h = c.n_heads;
    const std::size_t embeddings = c.vocab_size * d + c.max_len * d + 2 * d;
    std::size_t layer = 3 * d * d            // per-head query/key/value maps: h * d * d/h each
                        + d * d + d          // output projection
                        + 2 * d + 2 * d      // two layer norms
                        + d * f + f + f * d + d;  // feed-forward
    if (c.dynamic_attention) layer += d * r + r + r * h + h;
    std::size_t total = embeddings + c.n_layers * layer + d * kNumClasses + kNumClasses;
    if (c.contrastive) {
        const std::size_t ph = c.proj_hidden(), p = c.projection_dim;
        total += d * ph + ph + ph * p + p;
    }
    return total;
}

Model init_model(const ModelConfig& config) {
    config.validate();
    if (config.vocab_size <= kNumSpecials) throw ConfigError("vocab_size must exceed the 4 special tokens");
    const std::size_t d = config.d_model, dh = config.head_dim(), f = config.ffn_dim();
    Initializer init(config.seed);
    Model m;
    m.config = config;
    m.embeddings.token = init.weight("embeddings.token", {config.vocab_size, d});
    m.embeddings.position = init.weight("embeddings.position", {config.max_len, d});
    m.embeddings.segment = init.weight("embeddings.segment", {2, d});
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        EncoderLayer layer;
        for (std::size_t h = 0; h < config.n_heads; ++h) {
            const std::string hs = "." + std::to_string(h);
            layer.attention.wq.push_back(init.weight(p + "attention.wq" + hs, {d, dh}));
            layer.attention.wk.push_back(init.weight(p + "attention.wk" + hs, {d, dh}));
            layer.attention.wv.push_back(init.weight(p + "attention.wv" + hs, {d, dh}));
        }
        layer.attention.wo = init.weight(p + "attention.wo", {d, d});
        layer.attention.bo = Initializer::zeros({d});
        if (config.dynamic_attention) {
            layer.regulator = Regulator{init.weight(p + "regulator.w1", {d, config.regulator_hidden}),
                                        Initializer::zeros({config.regulator_hidden}),
                                        init.weight(p + "regulator.w2", {config.regulator_hidden, config.n_heads}),
                                        Initializer::zeros({config.n_heads})};
        }
        layer.ln1_gain = Initializer::ones({d});
        layer.ln1_bias = Initializer::zeros({d});
        layer.ffn_w1 = init.weight(p + "ffn.w1", {d, f});
        layer.ffn_b1 = Initializer::zeros({f});
        layer.ffn_w2 = init.weight(p + "ffn.w2", {f, d});
        layer.ffn_b2 = Initializer::zeros({d});
        layer.ln2_gain = Initializer::ones({d});
        layer.ln2_bias = Initializer::zeros({d});
        m.layers.push_back(std::move(layer));
    }
    m.classifier.weight = init.weight("classifier.weight", {d, kNumClasses});
    m.classifier.bias = Initializer::zeros({kNumClasses});
    if (config.contrastive) {
        const std::size_t ph = config.proj_hidden();
        m.projection = ProjectionHead{init.weight("projection.w1", {d, ph}), Initializer::zeros({ph}),
                                      init.weight("projection.w2", {ph, config.projection_dim}),
                                      Initializer::zeros({config.projection_dim})};
    }
    freeze(m, config.freeze_layers);
    return m;
}

void freeze(Model& model, std::size_t frozen_layers) {
    if (frozen_layers > model.layers.size()) {
        throw ConfigError("freeze_layers=" + std::to_string(frozen_layers) + " exceeds the " +
                          std::to_string(model.layers.size()) + " encoder layers");
    }
    for (auto& p : model.parameters()) {
        bool frozen = frozen_layers > 0 && p.name.rfind("embeddings.", 0) == 0;
        if (p.name.rfind("layers.", 0) == 0) {
            const auto index = std::stoul(p.name.substr(7));
            frozen = index < frozen_layers;
        }
        p.tensor.set_requires_grad(!frozen);
    }
    model.config.freeze_layers = frozen_layers;
}

ForwardOutput forward(const Model& model, const Batch& batch, ForwardContext& ctx) {
    ForwardOutput out;
    out.encoded = encode(batch, model.embeddings, model.layers, ctx);
    out.sentence = pool_mean(out.encoded.hidden, out.encoded.mask);
    out.logits = add(matmul(out.sentence, model.classifier.weight), model.classifier.bias);
    return out;
}

Tensor contrastive_input(const Model& model, const ForwardOutput& out) {
    return model.config.scl_pooling == SclPooling::Cls ? pool_cls(out.encoded.hidden) : out.sentence;
}

std::vector<int> predict(const Model& model, const Batch& batch) {
    NoGradGuard guard;
    ForwardContext ctx;
    auto out = forward(model, batch, ctx);
    std::vector<int> labels(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const double l0 = out.logits.data()[b * kNumClasses], l1 = out.logits.data()[b * kNumClasses + 1];
        labels[b] = l1 > l0 ? 1 : 0;
    }
    return labels;
}

ProjectedBatch project_dataset(const Model& model, std::span<const Example> examples, const Vocab& vocab,
                               std::size_t batch_size) {
    if (!model.projection) throw ContractError("model has no projection head");
    NoGradGuard guard;
    std::vector<double> rows;
    std::vector<int> labels;
    std::size_t width = model.config.projection_dim;
    for (const auto& batch : make_batches(examples, vocab, model.config.max_len, batch_size, std::nullopt)) {
        ForwardContext ctx;
        auto out = forward(model, batch, ctx);
        auto z = project(contrastive_input(model, out), *model.projection, batch.labels, false, 0.0, nullptr);
        rows.insert(rows.end(), z.z.data().begin(), z.z.data().end());
        labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    }
    return ProjectedBatch{Tensor::from({labels.size(), width}, std::move(rows)), std::move(labels)};
}

}  // namespace dacl
