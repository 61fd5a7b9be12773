#include "dacl/model_check.hpp"

#include <string>
#include <vector>

#include "dacl/errors.hpp"
#include "dacl/model.hpp"
#include "dacl/trainer.hpp"

namespace dacl {

ModelConfig micro_config() {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.regulator_hidden = 4;
    c.projection_dim = 4;
    c.max_len = 6;
    c.dropout = 0.0;
    return c;
}

GradCheckResult check_model_gradients(const MicroCheckOptions& options) {
    if (options.batch_size < 2) throw ConfigError("micro gradient check needs a batch of at least 2");
    const char* words[] = {"good", "bad", "plot", "film", "great", "dull", "cast", "score"};
    std::vector<Example> examples;
    auto rng = derive_rng(options.seed, "micro:data");
    for (std::size_t b = 0; b < options.batch_size; ++b) {
        // 4 body words fill all 6 positions for even rows; odd rows leave one pad.
        const std::size_t len = b % 2 == 0 ? 4 : 3;
        std::string text;
        for (std::size_t w = 0; w < len; ++w) text += std::string(words[rng() % 8]) + " ";
        examples.push_back(make_example(text, b < options.batch_size / 2 ? 0 : 1));
    }
    Vocab vocab;
    for (const char* w : words) vocab.append(w);

    ModelConfig config = micro_config();
    config.seed = options.seed;
    config.vocab_size = vocab.size();
    Model model = init_model(config);
    std::vector<Tensor> inputs;
    for (auto& p : model.parameters()) {
        if (p.name.find("gain") == std::string::npos) {
            auto prng = derive_rng(options.seed, "micro:" + p.name);
            std::normal_distribution<double> dist(0.0, options.init_stddev);
            for (auto& v : p.tensor.mutable_data()) v = dist(prng);
        }
        inputs.push_back(p.tensor);
    }

    const Batch batch = make_batch(examples, vocab, config.max_len);
    auto loss_fn = [&]() {
        ForwardContext ctx{true, 0.0, nullptr};
        auto out = forward(model, batch, ctx);
        auto z = project(contrastive_input(model, out), *model.projection, batch.labels, true, 0.0, nullptr);
        return total_loss(cross_entropy(out.logits, batch.labels), scl_loss(z, config.temperature).loss,
                          config.scl_weight);
    };
    return check_gradients("model(B=" + std::to_string(options.batch_size) + ")", loss_fn, inputs, 1e-5,
                           options.tolerance);
}

}  // namespace dacl
