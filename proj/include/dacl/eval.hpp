#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dacl/config.hpp"
#include "dacl/model.hpp"
#include "dacl/text.hpp"
#include "dacl/trainer.hpp"
#include "json.hpp"

namespace dacl {

/// Binary confusion counts with label 1 as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    void add(int predicted, int label);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false;  // some ratio had a zero denominator and was set to 0
};

/// Throws ContractError on an empty matrix.
Metrics metrics(const ConfusionMatrix& cm);

struct GroupReport {
    LengthGroup group = LengthGroup::Short;
    ConfusionMatrix confusion;
    Metrics metrics;
};

struct EvalReport {
    ConfusionMatrix confusion;
    Metrics overall;
    std::vector<GroupReport> groups;  // non-empty groups only, in Short/Medium/Long order

    std::size_t n_examples() const { return confusion.total(); }
    const GroupReport* group(LengthGroup g) const;
    nlohmann::json to_json() const;
};

/// Scores predictions[i] against examples[i].label. Throws ContractError when the
/// sizes differ or the set is empty.
EvalReport evaluate_predictions(std::span<const int> predictions, std::span<const Example> examples);

using Predictor = std::function<std::vector<int>(const Batch&)>;

EvalReport evaluate(const Predictor& predictor, std::span<const Example> examples, const Vocab& vocab,
                    std::size_t max_len, std::size_t batch_size);

/// Dropout off, batches in input order. With jobs > 1 batches are spread over
/// threads that only read the model; results are merged in batch order.
EvalReport evaluate(const Model& model, std::span<const Example> examples, const Vocab& vocab,
                    std::size_t jobs = 1);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

/// Throws ContractError for fewer than 2 values.
MeanStd mean_std(std::span<const double> values);

/// Per-metric mean and sample std over seeds. Averages metric values; confusion
/// matrices are not pooled.
struct AggregateReport {
    std::size_t seeds = 0;
    MeanStd accuracy, precision, recall, f1;

    nlohmann::json to_json() const;
};

/// Throws ContractError for fewer than 2 reports.
AggregateReport aggregate_seeds(std::span<const EvalReport> reports);

/// Runs fn(0..count-1) on up to `jobs` threads; fn must write only its own slot.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Copies the vocabulary size into the config when it is unset.
ModelConfig with_vocab(ModelConfig config, const Vocab& vocab);

/// One training run scored on the test split.
struct SeedRun {
    std::uint64_t seed = 0;
    EvalReport test;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    double train_seconds = 0.0;
};

/// `on_model`, when set, sees the best-validation model before it is discarded.
SeedRun train_and_evaluate(const ModelConfig& config, const DataSplits& data, const Vocab& vocab,
                           const std::function<void(const Model&)>& on_model = {});

enum class Variant { Full, NoDAA, NoSCL, NoBoth };
inline constexpr Variant kVariants[] = {Variant::Full, Variant::NoDAA, Variant::NoSCL, Variant::NoBoth};

std::string_view to_string(Variant v);

/// NoDAA: uniform head weights and no regulator. NoSCL: no projection head and a
/// zero contrastive weight. NoBoth: both.
ModelConfig variant_config(ModelConfig base, Variant v);

struct AblationResult {
    Variant variant = Variant::Full;
    std::vector<SeedRun> runs;
    std::optional<AggregateReport> aggregate;  // present with 2 or more seeds
    std::size_t parameter_count = 0;
    double mean_train_seconds = 0.0;
};

struct ExperimentOptions {
    std::size_t jobs = 1;
    std::function<void(const std::string& cell, std::uint64_t seed, const SeedRun&)> on_run;
    std::function<void(const std::string& cell, std::uint64_t seed, const Model&)> on_model;
};

/// Trains every variant for every seed. Parameters shared between variants start
/// from the same values because initialization streams are keyed by name.
std::vector<AblationResult> run_ablation(const ModelConfig& base, std::span<const std::uint64_t> seeds,
                                         const DataSplits& data, const Vocab& vocab,
                                         const ExperimentOptions& options = {});

nlohmann::json ablation_to_json(const std::vector<AblationResult>& results);
std::string ablation_csv(const std::vector<AblationResult>& results);

struct SweepPoint {
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::size_t n_heads = 0;

    std::string label() const;
};

/// The four learning-rate / batch / head configurations of the sensitivity table,
/// reference row first.
std::vector<SweepPoint> default_sweep_grid();

/// Parses "lr:batch:heads" entries separated by commas.
std::vector<SweepPoint> parse_sweep_grid(const std::string& text);

struct GroupColumns {
    std::optional<double> accuracy, f1;
    std::optional<double> drop;  // percentage points below the reference row's short-text accuracy
};

struct SweepRow {
    SweepPoint point;
    std::vector<SeedRun> runs;
    double accuracy = 0.0;  // seed means
    double f1 = 0.0;
    double convergence_epoch = 0.0;
    GroupColumns short_texts, medium_texts, long_texts;
};

/// First epoch whose val accuracy is within 0.005 of the last epoch's. 0 for an
/// empty history.
std::size_t convergence_epoch(const std::vector<EpochRecord>& history);

/// Validates every grid entry before training anything (ConfigError otherwise).
/// Drops are measured against the first row's short-text accuracy.
std::vector<SweepRow> run_sweep(const ModelConfig& base, std::span<const SweepPoint> grid,
                                std::span<const std::uint64_t> seeds, const DataSplits& data, const Vocab& vocab,
                                const ExperimentOptions& options = {});

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Per-epoch curves, one line per (cell, seed, epoch).
struct CurveSet {
    std::string cell;
    std::uint64_t seed = 0;
    const std::vector<EpochRecord>* history = nullptr;
};
std::string plot_data_csv(std::span<const CurveSet> curves);

}  // namespace dacl
