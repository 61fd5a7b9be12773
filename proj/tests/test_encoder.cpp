#include <gtest/gtest.h>

#include <cmath>

#include "dacl/errors.hpp"
#include "dacl/model.hpp"
#include "dacl/model_check.hpp"
#include "dacl/ops.hpp"
#include "dacl/trainer.hpp"

using namespace dacl;

namespace {

Vocab small_vocab() {
    Vocab v;
    for (const char* w : {"good", "bad", "film", "plot", "great", "dull"}) v.append(w);
    return v;
}

ModelConfig small_config(const Vocab& vocab) {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.regulator_hidden = 4;
    c.projection_dim = 4;
    c.max_len = 8;
    c.dropout = 0.0;
    c.vocab_size = vocab.size();
    return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Embed, ZeroTablesGiveZeros) {
    auto vocab = small_vocab();
    std::vector<Example> ex{make_example("good film", 1)};
    auto batch = make_batch(ex, vocab, 8);
    EmbeddingTables t{Tensor::zeros({vocab.size(), 3}), Tensor::zeros({8, 3}), Tensor::zeros({2, 3})};
    auto e = embed(batch, t);
    for (double v : e.data()) EXPECT_EQ(v, 0.0);
}

TEST(Embed, SumsTokenPositionAndSegmentRows) {
    auto vocab = small_vocab();
    std::vector<Example> ex{make_example("bad", 0)};
    auto batch = make_batch(ex, vocab, 8);  // [CLS] bad [SEP]
    std::vector<double> tok(vocab.size() * 2), pos(8 * 2);
    for (std::size_t i = 0; i < tok.size(); ++i) tok[i] = static_cast<double>(i);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = 100.0 * static_cast<double>(i);
    EmbeddingTables t{Tensor::from({vocab.size(), 2}, tok), Tensor::from({8, 2}, pos),
                      Tensor::from({2, 2}, {0.5, 0.25, -9, -9})};
    auto e = embed(batch, t);
    ASSERT_EQ(e.shape(), (Shape{1, 3, 2}));
    const int bad = vocab.id("bad");
    EXPECT_EQ(e.at({0, 1, 0}), tok[2 * bad] + pos[2] + 0.5);
    EXPECT_EQ(e.at({0, 1, 1}), tok[2 * bad + 1] + pos[3] + 0.25);
    EXPECT_EQ(e.at({0, 2, 0}), tok[2 * kSepId] + pos[4] + 0.5);
}

TEST(Encode, NoLayersReturnsEmbeddings) {
    auto vocab = small_vocab();
    auto config = small_config(vocab);
    config.n_layers = 0;
    auto model = init_model(config);
    std::vector<Example> ex{make_example("good plot", 1), make_example("dull", 0)};
    auto batch = make_batch(ex, vocab, config.max_len);
    ForwardContext ctx;
    auto out = encode(batch, model.embeddings, model.layers, ctx);
    EXPECT_EQ(values(out.hidden), values(embed(batch, model.embeddings)));
    EXPECT_TRUE(out.gates.empty());
}

TEST(Encode, PaddingContentDoesNotLeakIntoLivePositions) {
    auto vocab = small_vocab();
    auto config = small_config(vocab);
    auto model = init_model(config);
    std::vector<Example> ex{make_example("good film great plot", 1), make_example("bad", 0)};
    auto batch = make_batch(ex, vocab, config.max_len);
    ForwardContext ctx;
    auto base = encode(batch, model.embeddings, model.layers, ctx);

    auto perturbed = batch;
    for (std::size_t i = 0; i < batch.seq_len; ++i) {
        auto idx = batch.seq_len + i;
        if (batch.attention_mask[idx] == 0) perturbed.token_ids[idx] = vocab.id("great");
    }
    ASSERT_NE(perturbed.token_ids, batch.token_ids);
    auto other = encode(perturbed, model.embeddings, model.layers, ctx);
    const std::size_t d = config.d_model;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < batch.seq_len; ++i) {
            if (batch.attention_mask[b * batch.seq_len + i] == 0) continue;
            for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(base.hidden.at({b, i, k}), other.hidden.at({b, i, k}));
        }
}

TEST(Pooling, MeanIgnoresHugePads) {
    auto hidden = Tensor::from({1, 3, 2}, {1, 2, 3, 4, 1e6, -1e6});
    auto mask = Tensor::from({1, 3}, {1, 1, 0});
    EXPECT_EQ(values(pool_mean(hidden, mask)), (std::vector<double>{2, 3}));
    EXPECT_THROW(pool_mean(hidden, Tensor::zeros({1, 3})), ContractError);
}

TEST(Pooling, ClsGradientOnlyReachesPositionZero) {
    auto hidden = Tensor::from({2, 3, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, true);
    auto cls = pool_cls(hidden);
    EXPECT_EQ(values(cls), (std::vector<double>{1, 2, 7, 8}));
    backward(sum(cls));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t k = 0; k < 2; ++k)
                EXPECT_EQ(hidden.grad()[(b * 3 + i) * 2 + k], i == 0 ? 1.0 : 0.0);
}

TEST(EncoderLayer, ZeroSublayersLeaveNormalizedResidual) {
    // With attention and FFN output weights zero, each sublayer adds nothing and the
    // layer reduces to two layer norms of its input.
    auto vocab = small_vocab();
    auto config = small_config(vocab);
    auto model = init_model(config);
    auto& layer = model.layers[0];
    for (auto& v : layer.attention.wo.mutable_data()) v = 0.0;
    for (auto& v : layer.ffn_w2.mutable_data()) v = 0.0;
    std::vector<Example> ex{make_example("good film", 1)};
    auto batch = make_batch(ex, vocab, config.max_len);
    auto x = embed(batch, model.embeddings);
    auto mask = mask_tensor(batch.attention_mask, batch.size, batch.seq_len);
    ForwardContext ctx;
    auto out = encoder_layer(x, layer, mask, attention_bias(mask), ctx);
    auto once = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    auto twice = layer_norm(once, layer.ln2_gain, layer.ln2_bias);
    auto a = values(out), b = values(twice);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Freeze, ZeroLeavesEverythingTrainable) {
    auto vocab = small_vocab();
    auto model = init_model(small_config(vocab));
    for (const auto& p : model.parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
}

TEST(Freeze, AllLayersKeepsOnlyHeadsTrainable) {
    auto vocab = small_vocab();
    auto config = small_config(vocab);
    config.freeze_layers = config.n_layers;
    auto model = init_model(config);
    std::vector<std::vector<double>> before;
    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) {
        const bool head = p.name.rfind("classifier.", 0) == 0 || p.name.rfind("projection.", 0) == 0;
        EXPECT_EQ(p.tensor.requires_grad(), head) << p.name;
        before.push_back(values(p.tensor));
        params.push_back(p.tensor);
    }
    std::vector<Example> ex{make_example("good film", 1), make_example("great plot", 1),
                            make_example("bad plot", 0), make_example("dull film", 0)};
    auto batch = make_batch(ex, vocab, config.max_len);
    ForwardContext ctx;
    auto out = forward(model, batch, ctx);
    auto z = project(contrastive_input(model, out), *model.projection, batch.labels, false, 0.0, nullptr);
    backward(total_loss(cross_entropy(out.logits, batch.labels), scl_loss(z, config.temperature).loss, 0.3));
    AdamW opt(params, {});
    opt.step(0.1);
    auto named = model.parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].tensor.requires_grad()) continue;
        EXPECT_EQ(values(named[i].tensor), before[i]) << named[i].name;
    }
    EXPECT_NE(values(model.classifier.weight), before[before.size() - 6]);
}

TEST(Freeze, RejectsMoreLayersThanExist) {
    auto vocab = small_vocab();
    auto model = init_model(small_config(vocab));
    EXPECT_THROW(freeze(model, 3), ConfigError);
}

TEST(Freeze, LargeConfigFreezesSixLayers) {
    auto c = bert_base_config();
    EXPECT_EQ(c.freeze_layers, 6u);
    EXPECT_EQ(c.n_layers, 12u);
    EXPECT_EQ(c.d_model, 768u);
    EXPECT_EQ(c.n_heads, 12u);
    EXPECT_NO_THROW(c.validate());
}

TEST(ParameterCount, MatchesClosedFormAcrossVariants) {
    auto vocab = small_vocab();
    for (bool daa : {true, false})
        for (bool scl : {true, false}) {
            auto c = small_config(vocab);
            c.dynamic_attention = daa;
            c.contrastive = scl;
            auto model = init_model(c);
            EXPECT_EQ(model.parameter_count(), expected_parameter_count(c));
        }
    // Independent tally for the full small model: d=8, h=2, L=2, r=4, p=4, V=10, n=8.
    const std::size_t d = 8, f = 32, r = 4, h = 2, p = 4, V = 10, n = 8;
    const std::size_t layer = h * 3 * d * (d / h) + d * d + d + 4 * d + d * f + f + f * d + d + d * r + r + r * h + h;
    const std::size_t total = V * d + n * d + 2 * d + 2 * layer + d * 2 + 2 + d * d + d + d * p + p;
    EXPECT_EQ(init_model(small_config(vocab)).parameter_count(), total);
}

TEST(Forward, ShapesAndOneGatePerLayer) {
    auto vocab = small_vocab();
    auto config = small_config(vocab);
    auto model = init_model(config);
    std::vector<Example> ex{make_example("good film", 1), make_example("bad plot dull", 0),
                            make_example("great", 1)};
    auto batch = make_batch(ex, vocab, config.max_len);
    ForwardContext ctx;
    auto out = forward(model, batch, ctx);
    EXPECT_EQ(out.logits.shape(), (Shape{3, 2}));
    EXPECT_EQ(out.sentence.shape(), (Shape{3, 8}));
    ASSERT_EQ(out.encoded.gates.size(), 2u);
    for (const auto& g : out.encoded.gates) EXPECT_EQ(g.alpha.shape(), (Shape{3, 2}));
}

TEST(ModelGradients, MicroModelMatchesFiniteDifferences) {
    for (std::size_t b : {2u, 4u}) {
        MicroCheckOptions opt;
        opt.batch_size = b;
        auto r = check_model_gradients(opt);
        EXPECT_TRUE(r.passed()) << r.name << " " << r.max_rel_error;
        EXPECT_EQ(r.entries, expected_parameter_count([] {
                      auto c = micro_config();
                      c.vocab_size = 12;
                      return c;
                  }()));
    }
}
