#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dacl/errors.hpp"
#include "dacl/eval.hpp"
#include "dacl/model.hpp"
#include "dacl/trainer.hpp"

using namespace dacl;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ModelConfig tiny_config() {
    ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_layers = 1;
    c.regulator_hidden = 8;
    c.projection_dim = 8;
    c.max_len = 24;
    c.batch_size = 8;
    c.epochs = 2;
    return c;
}

struct Toy {
    DataSplits splits;
    Vocab vocab;
};

Toy toy() {
    Toy t;
    t.splits = split_dataset(synthesize_corpus(60, 4), 0.2, 0.2, 4);
    t.vocab = build_vocab(t.splits.train, 1, 0);
    return t;
}

EvalReport report_with_accuracy(double acc) {
    // 100 examples, all labelled 1, `acc * 100` predicted correctly.
    std::vector<Example> ex(100, make_example("x", 1));
    std::vector<int> pred(100, 0);
    for (int i = 0; i < static_cast<int>(std::lround(acc * 100)); ++i) pred[i] = 1;
    return evaluate_predictions(pred, ex);
}

}  // namespace

TEST(Metrics, FormulaExample) {
    ConfusionMatrix cm{2, 1, 0, 2};
    auto m = metrics(cm);
    EXPECT_NEAR(m.accuracy, 0.8, 1e-15);
    EXPECT_NEAR(m.precision, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.recall, 1.0, 1e-15);
    EXPECT_NEAR(m.f1, 0.8, 1e-15);
    EXPECT_FALSE(m.zero_division);
}

TEST(Metrics, PerfectPredictions) {
    auto m = metrics(ConfusionMatrix{5, 0, 0, 7});
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, ZeroDivisionIsFlagged) {
    auto m = metrics(ConfusionMatrix{0, 0, 3, 4});
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.f1, 0.0);
    EXPECT_TRUE(m.zero_division);
    EXPECT_THROW(metrics(ConfusionMatrix{}), ContractError);
}

TEST(Confusion, AddCountsPositiveClassOne) {
    ConfusionMatrix cm;
    cm.add(1, 1);
    cm.add(1, 0);
    cm.add(0, 1);
    cm.add(0, 0);
    cm.add(0, 0);
    EXPECT_EQ(cm, (ConfusionMatrix{1, 1, 1, 2}));
    EXPECT_EQ(cm.total(), 5u);
}

TEST(EvaluatePredictions, AllShortOmitsOtherGroups) {
    std::vector<Example> ex{make_example("fine film", 1), make_example("poor", 0), make_example("ok then", 1)};
    std::vector<int> pred{1, 1, 1};
    auto r = evaluate_predictions(pred, ex);
    ASSERT_EQ(r.groups.size(), 1u);
    EXPECT_EQ(r.groups[0].group, LengthGroup::Short);
    EXPECT_EQ(r.group(LengthGroup::Medium), nullptr);
    EXPECT_EQ(r.group(LengthGroup::Short)->confusion.total(), 3u);
    EXPECT_FALSE(r.to_json()["groups"].contains("Medium"));
}

TEST(EvaluatePredictions, GroupCountsSumToOverall) {
    auto data = synthesize_corpus(120, 3);
    std::vector<int> pred(data.size());
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = static_cast<int>(i % 3 == 0);
    auto r = evaluate_predictions(pred, data);
    std::size_t sum = 0;
    for (const auto& g : r.groups) sum += g.confusion.total();
    EXPECT_EQ(sum, r.n_examples());
    EXPECT_EQ(r.n_examples(), data.size());
}

TEST(EvaluatePredictions, DuplicationAndPermutationInvariance) {
    auto data = synthesize_corpus(50, 6);
    std::vector<int> pred(data.size());
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = static_cast<int>((i * 7) % 5 < 2);
    auto base = evaluate_predictions(pred, data);

    auto doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());
    auto pred2 = pred;
    pred2.insert(pred2.end(), pred.begin(), pred.end());
    auto twice = evaluate_predictions(pred2, doubled);
    EXPECT_DOUBLE_EQ(twice.overall.accuracy, base.overall.accuracy);
    EXPECT_DOUBLE_EQ(twice.overall.f1, base.overall.f1);

    std::vector<Example> reversed(data.rbegin(), data.rend());
    std::vector<int> pred_rev(pred.rbegin(), pred.rend());
    EXPECT_EQ(evaluate_predictions(pred_rev, reversed).confusion, base.confusion);
    EXPECT_THROW(evaluate_predictions(std::vector<int>{1}, data), ContractError);
}

TEST(Evaluate, MajorityStubScoresItsClassShare) {
    std::vector<Example> ex;
    for (int i = 0; i < 60; ++i) ex.push_back(make_example("good", 1));
    for (int i = 0; i < 40; ++i) ex.push_back(make_example("bad", 0));
    Vocab vocab;
    Predictor stub = [](const Batch& b) { return std::vector<int>(b.size, 1); };
    auto r = evaluate(stub, ex, vocab, 16, 32);
    EXPECT_NEAR(r.overall.accuracy, 0.6, 1e-15);
    EXPECT_NEAR(r.overall.recall, 1.0, 1e-15);
}

TEST(Evaluate, ModelIsDeterministicAndThreadCountIndependent) {
    auto t = toy();
    auto model = init_model(with_vocab(tiny_config(), t.vocab));
    auto a = evaluate(model, t.splits.test, t.vocab, 1);
    auto b = evaluate(model, t.splits.test, t.vocab, 4);
    EXPECT_EQ(a.confusion, b.confusion);
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Aggregate, HandStd) {
    std::vector<double> v{92, 94};
    auto ms = mean_std(v);
    EXPECT_DOUBLE_EQ(ms.mean, 93.0);
    EXPECT_NEAR(ms.std, std::sqrt(2.0), 1e-15);
    std::vector<double> one{1.0};
    EXPECT_THROW(mean_std(one), ContractError);
}

TEST(Aggregate, AveragesMetricValuesOverSeeds) {
    std::vector<EvalReport> reports{report_with_accuracy(0.92), report_with_accuracy(0.94)};
    auto agg = aggregate_seeds(reports);
    EXPECT_EQ(agg.seeds, 2u);
    EXPECT_NEAR(agg.accuracy.mean, 0.93, 1e-12);
    EXPECT_NEAR(agg.accuracy.std, std::sqrt(2.0) / 100, 1e-12);
    std::vector<EvalReport> same{report_with_accuracy(0.5), report_with_accuracy(0.5)};
    EXPECT_EQ(aggregate_seeds(same).f1.std, 0.0);
    EXPECT_THROW(aggregate_seeds(std::span<const EvalReport>(reports.data(), 1)), ContractError);
}

TEST(Variants, ParameterCounts) {
    auto t = toy();
    auto base = with_vocab(tiny_config(), t.vocab);
    auto full = init_model(variant_config(base, Variant::Full));
    auto no_daa = init_model(variant_config(base, Variant::NoDAA));
    auto no_scl = init_model(variant_config(base, Variant::NoSCL));
    auto no_both = init_model(variant_config(base, Variant::NoBoth));
    EXPECT_LT(no_daa.parameter_count(), full.parameter_count());
    EXPECT_LT(no_both.parameter_count(), full.parameter_count());
    EXPECT_EQ(no_scl.parameter_count(), full.parameter_count() - full.projection_parameter_count());
    EXPECT_FALSE(no_scl.projection.has_value());
    EXPECT_EQ(variant_config(base, Variant::NoSCL).scl_weight, 0.0);
    EXPECT_FALSE(no_daa.layers[0].regulator.has_value());
}

TEST(Variants, FullAndNoSclShareFirstBatchLogits) {
    auto t = toy();
    auto base = with_vocab(tiny_config(), t.vocab);
    auto full_cfg = variant_config(base, Variant::Full);
    auto scl_cfg = variant_config(base, Variant::NoSCL);
    auto full = init_model(full_cfg);
    auto no_scl = init_model(scl_cfg);
    auto batch = epoch_batches(t.splits.train, t.vocab, full_cfg, 1).front();
    ASSERT_EQ(batch.token_ids, epoch_batches(t.splits.train, t.vocab, scl_cfg, 1).front().token_ids);
    auto rng_a = encoder_dropout_rng(full_cfg);
    auto rng_b = encoder_dropout_rng(scl_cfg);
    ForwardContext ca{true, base.dropout, &rng_a}, cb{true, base.dropout, &rng_b};
    EXPECT_EQ(values(forward(full, batch, ca).logits), values(forward(no_scl, batch, cb).logits));
}

TEST(Ablation, SingleSeedRunsEveryVariantOnce) {
    auto t = toy();
    auto base = with_vocab(tiny_config(), t.vocab);
    base.epochs = 1;
    std::vector<std::uint64_t> seeds{7};
    std::vector<std::string> cells;
    ExperimentOptions opt;
    opt.on_run = [&](const std::string& cell, std::uint64_t, const SeedRun&) { cells.push_back(cell); };
    auto results = run_ablation(base, seeds, t.splits, t.vocab, opt);
    ASSERT_EQ(results.size(), 4u);
    EXPECT_EQ(cells.size(), 4u);
    for (const auto& r : results) {
        EXPECT_EQ(r.runs.size(), 1u);
        EXPECT_FALSE(r.aggregate.has_value());
        EXPECT_EQ(r.parameter_count, expected_parameter_count(variant_config(base, r.variant)));
    }
    EXPECT_NE(ablation_csv(results).find("NoBoth"), std::string::npos);
}

TEST(Sweep, DefaultGridCoversTableConfigurations) {
    auto grid = default_sweep_grid();
    ASSERT_EQ(grid.size(), 4u);
    EXPECT_EQ(grid[0].label(), "LR=3e-05, Batch=32, Heads=12");
    std::set<double> lrs;
    std::set<std::size_t> batches, heads;
    for (const auto& p : grid) {
        lrs.insert(p.lr);
        batches.insert(p.batch_size);
        heads.insert(p.n_heads);
    }
    EXPECT_EQ(lrs, (std::set<double>{1e-5, 3e-5, 5e-5}));
    EXPECT_EQ(batches, (std::set<std::size_t>{16, 32, 64}));
    EXPECT_EQ(heads, (std::set<std::size_t>{8, 12, 16}));
}

TEST(Sweep, ParsesGridText) {
    auto grid = parse_sweep_grid("3e-5:32:12, 1e-3:8:2");
    ASSERT_EQ(grid.size(), 2u);
    EXPECT_EQ(grid[1].lr, 1e-3);
    EXPECT_EQ(grid[1].batch_size, 8u);
    EXPECT_EQ(grid[1].n_heads, 2u);
    EXPECT_THROW(parse_sweep_grid("3e-5:32"), ConfigError);
    EXPECT_THROW(parse_sweep_grid("fast:32:2"), ConfigError);
}

TEST(Sweep, InvalidEntryFailsBeforeAnyTraining) {
    auto t = toy();
    auto base = with_vocab(tiny_config(), t.vocab);
    std::vector<SweepPoint> grid{{1e-3, 8, 2}, {1e-3, 8, 3}};
    std::vector<std::uint64_t> seeds{1};
    int runs = 0;
    ExperimentOptions opt;
    opt.on_run = [&](const std::string&, std::uint64_t, const SeedRun&) { ++runs; };
    try {
        run_sweep(base, grid, seeds, t.splits, t.vocab, opt);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("Heads=3"), std::string::npos) << e.what();
    }
    EXPECT_EQ(runs, 0);
}

TEST(Sweep, ConvergenceEpoch) {
    std::vector<EpochRecord> h{{1, 0.7, 0.5, 0}, {2, 0.6, 0.8, 0}, {3, 0.5, 0.897, 0}, {4, 0.4, 0.9, 0}};
    EXPECT_EQ(convergence_epoch(h), 3u);
    EXPECT_EQ(convergence_epoch({}), 0u);
    std::vector<EpochRecord> flat{{1, 0.7, 0.6, 0}, {2, 0.7, 0.6, 0}};
    EXPECT_EQ(convergence_epoch(flat), 1u);
}

TEST(Sweep, ZeroLearningRateGridOfOne) {
    auto t = toy();
    auto base = with_vocab(tiny_config(), t.vocab);
    base.epochs = 3;
    std::vector<SweepPoint> grid{{0.0, 8, 2}};
    std::vector<std::uint64_t> seeds{3};
    auto rows = run_sweep(base, grid, seeds, t.splits, t.vocab);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].convergence_epoch, 1.0);
    EXPECT_EQ(rows[0].runs.size(), 1u);
    EXPECT_TRUE(rows[0].short_texts.accuracy.has_value());
    EXPECT_TRUE(rows[0].short_texts.drop.has_value());
    EXPECT_EQ(*rows[0].short_texts.drop, 0.0);
    auto csv = sweep_csv(rows);
    EXPECT_EQ(csv.rfind("lr,batch_size,n_heads,", 0), 0u) << csv;
    EXPECT_NE(csv.find("\n0,8,2,"), std::string::npos) << csv;
    EXPECT_EQ(sweep_to_json(rows).size(), 1u);
}

TEST(ParallelFor, VisitsEverySlotAndRethrows) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(5, 3,
                              [](std::size_t i) {
                                  if (i == 2) throw DataError("boom");
                              }),
                 DataError);
}
