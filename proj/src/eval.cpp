#include "dacl/eval.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "dacl/errors.hpp"

namespace dacl {

void ConfusionMatrix::add(int predicted, int label) {
    if (label == 1) {
        ++(predicted == 1 ? tp : fn);
    } else {
        ++(predicted == 1 ? fp : tn);
    }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ContractError("metrics of an empty evaluation");
    Metrics m;
    auto ratio = [&m](double num, double den) {
        if (den == 0.0) {
            m.zero_division = true;
            return 0.0;
        }
        return num / den;
    };
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    m.precision = ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp));
    m.recall = ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

const GroupReport* EvalReport::group(LengthGroup g) const {
    for (const auto& r : groups) {
        if (r.group == g) return &r;
    }
    return nullptr;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"zero_division", m.zero_division}};
}

nlohmann::json confusion_json(const ConfusionMatrix& cm) {
    return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

nlohmann::json mean_std_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}}; }

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string csv_value(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

std::string csv_value(double v) { return csv_value(std::optional<double>(v)); }

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per_group = nlohmann::json::object();
    for (const auto& g : groups) {
        per_group[std::string(to_string(g.group))] = {{"n_examples", g.confusion.total()},
                                                      {"confusion", confusion_json(g.confusion)},
                                                      {"metrics", metrics_json(g.metrics)}};
    }
    return {{"n_examples", n_examples()},
            {"confusion", confusion_json(confusion)},
            {"overall", metrics_json(overall)},
            {"per_group", per_group}};
}

EvalReport evaluate_predictions(std::span<const int> predictions, std::span<const Example> examples) {
    if (predictions.size() != examples.size()) {
        throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(examples.size()) + " examples");
    }
    if (examples.empty()) throw ContractError("evaluate: empty dataset");
    ConfusionMatrix per_group[3];
    EvalReport report;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        report.confusion.add(predictions[i], examples[i].label);
        per_group[static_cast<int>(length_group(examples[i].word_count))].add(predictions[i], examples[i].label);
    }
    report.overall = metrics(report.confusion);
    for (auto g : kLengthGroups) {
        const auto& cm = per_group[static_cast<int>(g)];
        if (cm.total() > 0) report.groups.push_back({g, cm, metrics(cm)});
    }
    return report;
}

EvalReport evaluate(const Predictor& predictor, std::span<const Example> examples, const Vocab& vocab,
                    std::size_t max_len, std::size_t batch_size) {
    std::vector<int> predictions;
    predictions.reserve(examples.size());
    for (const auto& batch : make_batches(examples, vocab, max_len, batch_size, std::nullopt)) {
        auto p = predictor(batch);
        if (p.size() != batch.size) throw ContractError("predictor returned the wrong number of labels");
        predictions.insert(predictions.end(), p.begin(), p.end());
    }
    return evaluate_predictions(predictions, examples);
}

EvalReport evaluate(const Model& model, std::span<const Example> examples, const Vocab& vocab, std::size_t jobs) {
    const auto batches = make_batches(examples, vocab, model.config.max_len, model.config.batch_size, std::nullopt);
    std::vector<std::vector<int>> per_batch(batches.size());
    parallel_for(batches.size(), jobs, [&](std::size_t i) { per_batch[i] = predict(model, batches[i]); });
    std::vector<int> predictions;
    predictions.reserve(examples.size());
    for (const auto& p : per_batch) predictions.insert(predictions.end(), p.begin(), p.end());
    return evaluate_predictions(predictions, examples);
}

MeanStd mean_std(std::span<const double> values) {
    if (values.size() < 2) throw ContractError("mean/std needs at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

nlohmann::json AggregateReport::to_json() const {
    return {{"seeds", seeds},
            {"accuracy", mean_std_json(accuracy)},
            {"precision", mean_std_json(precision)},
            {"recall", mean_std_json(recall)},
            {"f1", mean_std_json(f1)}};
}

AggregateReport aggregate_seeds(std::span<const EvalReport> reports) {
    if (reports.size() < 2) throw ContractError("aggregate_seeds needs at least 2 reports");
    auto column = [&](double Metrics::*field) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(r.overall.*field);
        return mean_std(v);
    };
    return {reports.size(), column(&Metrics::accuracy), column(&Metrics::precision), column(&Metrics::recall),
            column(&Metrics::f1)};
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

ModelConfig with_vocab(ModelConfig config, const Vocab& vocab) {
    if (config.vocab_size == 0) config.vocab_size = vocab.size();
    return config;
}

SeedRun train_and_evaluate(const ModelConfig& config, const DataSplits& data, const Vocab& vocab,
                           const std::function<void(const Model&)>& on_model) {
    auto result = train(init_model(with_vocab(config, vocab)), data.train, data.val, vocab);
    if (on_model) on_model(result.model);
    SeedRun run;
    run.seed = config.seed;
    run.test = evaluate(result.model, data.test, vocab);
    run.history = std::move(result.history);
    run.best_epoch = result.best_epoch;
    run.stopped_early = result.stopped_early;
    run.train_seconds = result.seconds;
    return run;
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "Full";
        case Variant::NoDAA: return "NoDAA";
        case Variant::NoSCL: return "NoSCL";
        case Variant::NoBoth: return "NoBoth";
    }
    return "?";
}

ModelConfig variant_config(ModelConfig base, Variant v) {
    if (v == Variant::NoDAA || v == Variant::NoBoth) base.dynamic_attention = false;
    if (v == Variant::NoSCL || v == Variant::NoBoth) {
        base.contrastive = false;
        base.scl_weight = 0.0;
    }
    return base;
}

namespace {

struct Cell {
    ModelConfig config;
    std::string name;
};

std::vector<SeedRun> run_cells(const std::vector<Cell>& cells, std::span<const std::uint64_t> seeds,
                               const DataSplits& data, const Vocab& vocab, const ExperimentOptions& options) {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    std::vector<SeedRun> runs(cells.size() * seeds.size());
    std::mutex callback_mutex;
    parallel_for(runs.size(), options.jobs, [&](std::size_t i) {
        const auto& cell = cells[i / seeds.size()];
        ModelConfig config = cell.config;
        config.seed = seeds[i % seeds.size()];
        std::function<void(const Model&)> on_model;
        if (options.on_model) {
            on_model = [&](const Model& m) {
                std::lock_guard lock(callback_mutex);
                options.on_model(cell.name, config.seed, m);
            };
        }
        runs[i] = train_and_evaluate(config, data, vocab, on_model);
        if (options.on_run) {
            std::lock_guard lock(callback_mutex);
            options.on_run(cell.name, config.seed, runs[i]);
        }
    });
    return runs;
}

std::vector<EvalReport> test_reports(const std::vector<SeedRun>& runs) {
    std::vector<EvalReport> out;
    for (const auto& r : runs) out.push_back(r.test);
    return out;
}

nlohmann::json runs_json(const std::vector<SeedRun>& runs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : runs) {
        out.push_back({{"seed", r.seed},
                       {"test", r.test.to_json()},
                       {"best_epoch", r.best_epoch},
                       {"stopped_early", r.stopped_early},
                       {"train_seconds", r.train_seconds},
                       {"history", history_to_json(r.history)}});
    }
    return out;
}

}  // namespace

std::vector<AblationResult> run_ablation(const ModelConfig& base, std::span<const std::uint64_t> seeds,
                                         const DataSplits& data, const Vocab& vocab,
                                         const ExperimentOptions& options) {
    std::vector<Cell> cells;
    for (auto v : kVariants) {
        auto config = with_vocab(variant_config(base, v), vocab);
        config.validate();
        cells.push_back({config, std::string(to_string(v))});
    }
    auto runs = run_cells(cells, seeds, data, vocab, options);

    std::vector<AblationResult> results;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        AblationResult r;
        r.variant = kVariants[c];
        r.runs.assign(runs.begin() + static_cast<std::ptrdiff_t>(c * seeds.size()),
                      runs.begin() + static_cast<std::ptrdiff_t>((c + 1) * seeds.size()));
        if (r.runs.size() >= 2) r.aggregate = aggregate_seeds(test_reports(r.runs));
        r.parameter_count = expected_parameter_count(cells[c].config);
        for (const auto& run : r.runs) r.mean_train_seconds += run.train_seconds;
        r.mean_train_seconds /= static_cast<double>(r.runs.size());
        results.push_back(std::move(r));
    }
    return results;
}

nlohmann::json ablation_to_json(const std::vector<AblationResult>& results) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : results) {
        out.push_back({{"variant", std::string(to_string(r.variant))},
                       {"parameter_count", r.parameter_count},
                       {"mean_train_seconds", r.mean_train_seconds},
                       {"aggregate", r.aggregate ? r.aggregate->to_json() : nlohmann::json()},
                       {"runs", runs_json(r.runs)}});
    }
    return out;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
    std::ostringstream os;
    os << "variant,seeds,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,f1_mean,"
          "f1_std,parameter_count,mean_train_seconds\n";
    for (const auto& r : results) {
        os << to_string(r.variant) << ',' << r.runs.size();
        if (r.aggregate) {
            for (const auto* s : {&r.aggregate->accuracy, &r.aggregate->precision, &r.aggregate->recall,
                                  &r.aggregate->f1}) {
                os << ',' << csv_value(s->mean) << ',' << csv_value(s->std);
            }
        } else {
            const auto& m = r.runs.front().test.overall;
            for (double v : {m.accuracy, m.precision, m.recall, m.f1}) os << ',' << csv_value(v) << ',';
        }
        os << ',' << r.parameter_count << ',' << csv_value(r.mean_train_seconds) << '\n';
    }
    return os.str();
}

std::string SweepPoint::label() const {
    std::ostringstream os;
    os << "LR=" << lr << ", Batch=" << batch_size << ", Heads=" << n_heads;
    return os.str();
}

std::vector<SweepPoint> default_sweep_grid() { return {{3e-5, 32, 12}, {5e-5, 32, 12}, {3e-5, 64, 8}, {1e-5, 16, 16}}; }

std::vector<SweepPoint> parse_sweep_grid(const std::string& text) {
    std::vector<SweepPoint> grid;
    std::stringstream entries(text);
    std::string entry;
    while (std::getline(entries, entry, ',')) {
        std::stringstream fields(entry);
        std::string lr, batch, heads, extra;
        if (!std::getline(fields, lr, ':') || !std::getline(fields, batch, ':') || !std::getline(fields, heads, ':') ||
            std::getline(fields, extra, ':')) {
            throw ConfigError("sweep entry '" + entry + "' is not lr:batch:heads");
        }
        try {
            std::size_t used = 0;
            SweepPoint p;
            p.lr = std::stod(lr, &used);
            if (used != lr.size()) throw std::invalid_argument(lr);
            p.batch_size = std::stoul(batch, &used);
            if (used != batch.size()) throw std::invalid_argument(batch);
            p.n_heads = std::stoul(heads, &used);
            if (used != heads.size()) throw std::invalid_argument(heads);
            grid.push_back(p);
        } catch (const std::logic_error&) {
            throw ConfigError("sweep entry '" + entry + "' has a non-numeric field");
        }
    }
    if (grid.empty()) throw ConfigError("sweep grid is empty");
    return grid;
}

std::size_t convergence_epoch(const std::vector<EpochRecord>& history) {
    if (history.empty()) return 0;
    const double final_acc = history.back().val_accuracy;
    for (const auto& r : history) {
        if (std::abs(r.val_accuracy - final_acc) <= 0.005 + 1e-12) return r.epoch;
    }
    return history.back().epoch;
}

std::vector<SweepRow> run_sweep(const ModelConfig& base, std::span<const SweepPoint> grid,
                                std::span<const std::uint64_t> seeds, const DataSplits& data, const Vocab& vocab,
                                const ExperimentOptions& options) {
    if (grid.empty()) throw ConfigError("sweep grid is empty");
    std::vector<Cell> cells;
    for (const auto& p : grid) {
        ModelConfig config = with_vocab(base, vocab);
        config.lr = p.lr;
        config.batch_size = p.batch_size;
        config.n_heads = p.n_heads;
        try {
            config.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("sweep entry '" + p.label() + "': " + e.what());
        }
        cells.push_back({config, p.label()});
    }
    auto runs = run_cells(cells, seeds, data, vocab, options);

    auto seed_mean = [](const std::vector<SeedRun>& rs, auto&& get) -> std::optional<double> {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& r : rs) {
            if (auto v = get(r)) {
                total += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return total / static_cast<double>(n);
    };
    auto group_column = [&](const std::vector<SeedRun>& rs, LengthGroup g) {
        GroupColumns cols;
        cols.accuracy = seed_mean(rs, [g](const SeedRun& r) -> std::optional<double> {
            if (const auto* gr = r.test.group(g)) return gr->metrics.accuracy;
            return std::nullopt;
        });
        cols.f1 = seed_mean(rs, [g](const SeedRun& r) -> std::optional<double> {
            if (const auto* gr = r.test.group(g)) return gr->metrics.f1;
            return std::nullopt;
        });
        return cols;
    };

    std::vector<SweepRow> rows;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        SweepRow row;
        row.point = grid[c];
        row.runs.assign(runs.begin() + static_cast<std::ptrdiff_t>(c * seeds.size()),
                        runs.begin() + static_cast<std::ptrdiff_t>((c + 1) * seeds.size()));
        row.accuracy = *seed_mean(row.runs, [](const SeedRun& r) -> std::optional<double> {
            return r.test.overall.accuracy;
        });
        row.f1 = *seed_mean(row.runs, [](const SeedRun& r) -> std::optional<double> { return r.test.overall.f1; });
        row.convergence_epoch = *seed_mean(row.runs, [](const SeedRun& r) -> std::optional<double> {
            return static_cast<double>(convergence_epoch(r.history));
        });
        row.short_texts = group_column(row.runs, LengthGroup::Short);
        row.medium_texts = group_column(row.runs, LengthGroup::Medium);
        row.long_texts = group_column(row.runs, LengthGroup::Long);
        rows.push_back(std::move(row));
    }
    if (const auto reference = rows.front().short_texts.accuracy) {
        for (auto& row : rows) {
            for (auto* cols : {&row.short_texts, &row.medium_texts, &row.long_texts}) {
                if (cols->accuracy) cols->drop = 100.0 * (*reference - *cols->accuracy);
            }
        }
    }
    return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
    auto group = [](const GroupColumns& g) {
        return nlohmann::json{{"accuracy", optional_json(g.accuracy)},
                              {"f1", optional_json(g.f1)},
                              {"drop_pct", optional_json(g.drop)}};
    };
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"configuration", r.point.label()},
                       {"lr", r.point.lr},
                       {"batch_size", r.point.batch_size},
                       {"n_heads", r.point.n_heads},
                       {"accuracy", r.accuracy},
                       {"f1", r.f1},
                       {"convergence_epoch", r.convergence_epoch},
                       {"short", group(r.short_texts)},
                       {"medium", group(r.medium_texts)},
                       {"long", group(r.long_texts)},
                       {"runs", runs_json(r.runs)}});
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "lr,batch_size,n_heads,accuracy,f1,convergence_epoch,short_accuracy,short_f1,short_drop_pct,"
          "medium_accuracy,medium_f1,medium_drop_pct,long_accuracy,long_f1,long_drop_pct\n";
    for (const auto& r : rows) {
        os << r.point.lr << ',' << r.point.batch_size << ',' << r.point.n_heads << ',' << csv_value(r.accuracy)
           << ',' << csv_value(r.f1) << ',' << csv_value(r.convergence_epoch);
        for (const auto* g : {&r.short_texts, &r.medium_texts, &r.long_texts}) {
            os << ',' << csv_value(g->accuracy) << ',' << csv_value(g->f1) << ',' << csv_value(g->drop);
        }
        os << '\n';
    }
    return os.str();
}

std::string plot_data_csv(std::span<const CurveSet> curves) {
    std::ostringstream os;
    os << "cell,seed,epoch,train_loss,val_accuracy,lr\n";
    for (const auto& c : curves) {
        if (!c.history) continue;
        for (const auto& r : *c.history) {
            os << '"' << c.cell << "\"," << c.seed << ',' << r.epoch << ',' << csv_value(r.train_loss) << ','
               << csv_value(r.val_accuracy) << ',' << csv_value(r.lr) << '\n';
        }
    }
    return os.str();
}

}  // namespace dacl
