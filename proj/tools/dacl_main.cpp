// Command-line front end: data preparation, training, evaluation, ablation,
// sweeps, gradient checks, gate inspection and embedding export.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 training divergence, 4 a gradient check exceeded its tolerance.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dacl/checkpoint.hpp"
#include "dacl/errors.hpp"
#include "dacl/eval.hpp"
#include "dacl/gradcheck.hpp"
#include "dacl/model_check.hpp"
#include "dacl/runtime.hpp"
#include "dacl/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCheckFailed = 4;

void log_event(const std::string& event, json fields = json::object()) {
    fields["event"] = event;
    std::cerr << fields.dump() << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dacl::DataError("cannot write " + path.string());
    out << text;
}

// Writes to --out when given, otherwise to stdout.
void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_text(out_path, text);
    }
}

// Config flags shared by every command: one per documented key plus --config.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "Flat key = value config file")->check(CLI::ExistingFile);
        for (const auto& [key, help] : dacl::config_keys()) {
            cmd.add_option_function<std::string>(
                "--" + key, [this, key = key](const std::string& v) { values[key] = v; }, help);
        }
    }

    // Defaults, then the config file, then DACL_* variables, then flags.
    dacl::ModelConfig resolve() const {
        dacl::ModelConfig config;
        if (!config_file.empty()) dacl::apply_config_file(config, config_file);
        dacl::apply_env_overrides(config);
        for (const auto& [key, value] : values) {
            try {
                config.set(key, value);
            } catch (const dacl::ConfigError& e) {
                throw dacl::ConfigError("--" + key + ": " + e.what());
            }
        }
        config.validate();
        return config;
    }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw dacl::ConfigError("--seeds: '" + item + "' is not an unsigned integer");
        }
    }
    if (seeds.empty()) throw dacl::ConfigError("--seeds: at least one seed is required");
    return seeds;
}

struct Dataset {
    dacl::DataSplits splits;
    dacl::Vocab vocab;
};

// Either a corpus to split, or a directory written by `prepare`.
Dataset load_dataset(const std::string& data, const std::string& prepared, const dacl::ModelConfig& config) {
    Dataset ds;
    if (!prepared.empty()) {
        const fs::path dir(prepared);
        ds.splits.train = dacl::load_jsonl(dir / "train.jsonl");
        ds.splits.val = dacl::load_jsonl(dir / "val.jsonl");
        ds.splits.test = dacl::load_jsonl(dir / "test.jsonl");
        ds.vocab = dacl::Vocab::load(dir / "vocab.txt");
        return ds;
    }
    if (data.empty()) throw dacl::ConfigError("one of --data or --prepared is required");
    const auto corpus = dacl::load_jsonl(data);
    ds.splits = dacl::split_dataset(corpus, config.val_fraction, config.test_fraction, config.seed);
    if (ds.splits.train.empty() || ds.splits.val.empty() || ds.splits.test.empty()) {
        throw dacl::DataError(data + ": too few examples for train/val/test splits");
    }
    ds.vocab = dacl::build_vocab(ds.splits.train, config.min_freq, config.max_vocab);
    return ds;
}

void log_config(const std::string& command, const dacl::ModelConfig& config) {
    log_event("config", {{"command", command}, {"seed", config.seed}, {"config", config.to_json()}});
}

dacl::Vocab vocab_for_checkpoint(const std::string& vocab_path, const fs::path& checkpoint) {
    return dacl::Vocab::load(vocab_path.empty() ? checkpoint.parent_path() / "vocab.txt" : fs::path(vocab_path));
}

std::string format_table_row(const std::string& name, std::size_t entries, double err, double tol) {
    std::ostringstream os;
    os << std::left << std::setw(22) << name << std::right << std::setw(8) << entries << std::setw(14)
       << std::scientific << std::setprecision(3) << err << std::setw(11) << tol << "  "
       << (err < tol ? "ok" : "FAIL") << '\n';
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    dacl::tune_allocator();
    CLI::App app{"Sentiment classifier with adaptive head gating and a supervised contrastive objective"};
    app.require_subcommand(1);
    std::ostringstream footer;
    footer << "\nConfiguration keys (flags on every command, config-file keys, or " << dacl::kEnvPrefix
           << "<KEY> environment variables):\n";
    for (const auto& [key, help] : dacl::config_keys()) footer << "  --" << std::left << std::setw(20) << key << help << '\n';
    app.footer(footer.str());

    std::string out, csv_out, plot_out, data, prepared, checkpoint, vocab_path, seeds_text = "1,2,3,4,5", grid_text;
    std::size_t count = 500, jobs = 1, limit = 0, trials = 100;
    std::uint64_t synth_seed = 7;
    bool micro = false;

    auto* synth = app.add_subcommand("synth-data", "Write a seeded synthetic sentiment corpus as JSONL");
    synth->add_option("--count", count, "Number of examples")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--out", out, "Output JSONL path")->required();

    ConfigFlags prepare_flags, train_flags, ablate_flags, sweep_flags;

    auto* prepare = app.add_subcommand("prepare", "Split a corpus and build the vocabulary");
    prepare->add_option("--data", data, "Corpus JSONL")->required();
    prepare->add_option("--out-dir", out, "Directory for train/val/test JSONL and vocab.txt")->required();
    prepare_flags.attach(*prepare);

    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    train_cmd->add_option("--data", data, "Corpus JSONL, split by val_fraction/test_fraction");
    train_cmd->add_option("--prepared", prepared, "Directory written by prepare");
    train_cmd->add_option("--out-dir", out, "Directory for model.bin/json, vocab.txt, history.json, metrics.json")
        ->required();
    train_cmd->add_option("--emit-plot-data", plot_out, "Per-epoch curve CSV");
    train_flags.attach(*train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL file");
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint blob (.bin)")->required();
    eval_cmd->add_option("--data", data, "JSONL to evaluate")->required();
    eval_cmd->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)");
    eval_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--out", out, "Report JSON path (default: stdout)");

    auto* ablate = app.add_subcommand("ablate", "Train Full/NoDAA/NoSCL/NoBoth over several seeds");
    ablate->add_option("--data", data, "Corpus JSONL");
    ablate->add_option("--prepared", prepared, "Directory written by prepare");
    ablate->add_option("--seeds", seeds_text, "Comma-separated seeds");
    ablate->add_option("--jobs", jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);
    ablate->add_option("--out", out, "Report JSON path (default: stdout)");
    ablate->add_option("--csv", csv_out, "Summary CSV path");
    ablate->add_option("--emit-plot-data", plot_out, "Per-epoch curve CSV");
    ablate_flags.attach(*ablate);

    auto* sweep = app.add_subcommand("sweep", "Train a learning-rate / batch / heads grid");
    sweep->add_option("--data", data, "Corpus JSONL");
    sweep->add_option("--prepared", prepared, "Directory written by prepare");
    sweep->add_option("--grid", grid_text, "lr:batch:heads entries separated by commas (default: 4-row table)");
    sweep->add_option("--seeds", seeds_text, "Comma-separated seeds");
    sweep->add_option("--jobs", jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out, "Report JSON path (default: stdout)");
    sweep->add_option("--csv", csv_out, "Table CSV path");
    sweep->add_option("--emit-plot-data", plot_out, "Per-epoch curve CSV");
    sweep_flags.attach(*sweep);

    auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient checks");
    grad->add_flag("--micro", micro, "Also check the full loss of a micro model (B=2 and B=4)");
    grad->add_option("--trials", trials, "Random cases per op")->check(CLI::PositiveNumber);
    grad->add_option("--seed", synth_seed, "Seed for the random cases");

    auto* gates = app.add_subcommand("inspect-gates", "Emit per-layer head weights per example as JSON");
    gates->add_option("--checkpoint", checkpoint, "Checkpoint blob (.bin)")->required();
    gates->add_option("--data", data, "JSONL to inspect")->required();
    gates->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)");
    gates->add_option("--limit", limit, "Inspect at most this many examples (0 = all)");
    gates->add_option("--out", out, "JSON path (default: stdout)");

    auto* emb = app.add_subcommand("export-embeddings", "Write contrastive projections and labels as CSV");
    emb->add_option("--checkpoint", checkpoint, "Checkpoint blob (.bin)")->required();
    emb->add_option("--data", data, "JSONL to project")->required();
    emb->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)");
    emb->add_option("--out", out, "CSV path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            log_event("config", {{"command", "synth-data"}, {"seed", synth_seed}, {"count", count}});
            auto corpus = dacl::synthesize_corpus(count, synth_seed);
            if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
            dacl::save_jsonl(out, corpus);
            log_event("wrote", {{"path", out}, {"examples", corpus.size()}});
        } else if (prepare->parsed()) {
            auto config = prepare_flags.resolve();
            log_config("prepare", config);
            auto ds = load_dataset(data, "", config);
            fs::create_directories(out);
            dacl::save_jsonl(fs::path(out) / "train.jsonl", ds.splits.train);
            dacl::save_jsonl(fs::path(out) / "val.jsonl", ds.splits.val);
            dacl::save_jsonl(fs::path(out) / "test.jsonl", ds.splits.test);
            ds.vocab.save(fs::path(out) / "vocab.txt");
            log_event("wrote", {{"dir", out},
                                {"train", ds.splits.train.size()},
                                {"val", ds.splits.val.size()},
                                {"test", ds.splits.test.size()},
                                {"vocab", ds.vocab.size()}});
        } else if (train_cmd->parsed()) {
            auto config = train_flags.resolve();
            log_config("train", config);
            auto ds = load_dataset(data, prepared, config);
            config = dacl::with_vocab(config, ds.vocab);
            dacl::TrainOptions options;
            options.on_epoch = [](const dacl::EpochRecord& r) {
                log_event("epoch", {{"epoch", r.epoch}, {"train_loss", r.train_loss},
                                    {"val_accuracy", r.val_accuracy}, {"lr", r.lr}});
            };
            auto result = dacl::train(dacl::init_model(config), ds.splits.train, ds.splits.val, ds.vocab, options);
            auto report = dacl::evaluate(result.model, ds.splits.test, ds.vocab);
            const fs::path dir(out);
            fs::create_directories(dir);
            dacl::save_checkpoint(result.model, dir / "model.bin");
            ds.vocab.save(dir / "vocab.txt");
            const auto history = dacl::history_to_json(result.history);
            write_text(dir / "history.json", history.dump(2) + "\n");
            json metrics = {{"seed", config.seed},
                            {"best_epoch", result.best_epoch},
                            {"stopped_early", result.stopped_early},
                            {"test", report.to_json()},
                            {"history", history}};
            write_text(dir / "metrics.json", metrics.dump(2) + "\n");
            if (!plot_out.empty()) {
                dacl::CurveSet curve{"train", config.seed, &result.history};
                write_text(plot_out, dacl::plot_data_csv(std::span(&curve, 1)));
            }
            log_event("done", {{"seconds", result.seconds}, {"test_accuracy", report.overall.accuracy}});
            std::cout << metrics.dump(2) << '\n';
        } else if (eval_cmd->parsed()) {
            auto model = dacl::load_checkpoint(checkpoint);
            log_config("eval", model.config);
            auto vocab = vocab_for_checkpoint(vocab_path, checkpoint);
            auto examples = dacl::load_jsonl(data);
            auto report = dacl::evaluate(model, examples, vocab, jobs);
            emit(out, report.to_json().dump(2) + "\n");
        } else if (ablate->parsed() || sweep->parsed()) {
            const bool is_ablation = ablate->parsed();
            auto config = (is_ablation ? ablate_flags : sweep_flags).resolve();
            log_config(is_ablation ? "ablate" : "sweep", config);
            const auto seeds = parse_seeds(seeds_text);
            const auto grid = grid_text.empty() ? dacl::default_sweep_grid() : dacl::parse_sweep_grid(grid_text);
            auto ds = load_dataset(data, prepared, config);
            dacl::ExperimentOptions options;
            options.jobs = jobs;
            options.on_run = [](const std::string& cell, std::uint64_t seed, const dacl::SeedRun& run) {
                log_event("run", {{"cell", cell}, {"seed", seed}, {"test_f1", run.test.overall.f1},
                                  {"test_accuracy", run.test.overall.accuracy}, {"seconds", run.train_seconds}});
            };
            std::vector<dacl::CurveSet> curves;
            std::string report, table;
            if (is_ablation) {
                auto results = dacl::run_ablation(config, seeds, ds.splits, ds.vocab, options);
                report = dacl::ablation_to_json(results).dump(2) + "\n";
                table = dacl::ablation_csv(results);
                if (!plot_out.empty()) {
                    for (const auto& r : results) {
                        for (const auto& run : r.runs) curves.push_back({std::string(dacl::to_string(r.variant)), run.seed, &run.history});
                    }
                    write_text(plot_out, dacl::plot_data_csv(curves));
                }
            } else {
                auto rows = dacl::run_sweep(config, grid, seeds, ds.splits, ds.vocab, options);
                report = dacl::sweep_to_json(rows).dump(2) + "\n";
                table = dacl::sweep_csv(rows);
                if (!plot_out.empty()) {
                    for (const auto& r : rows) {
                        for (const auto& run : r.runs) curves.push_back({r.point.label(), run.seed, &run.history});
                    }
                    write_text(plot_out, dacl::plot_data_csv(curves));
                }
            }
            if (!csv_out.empty()) write_text(csv_out, table);
            emit(out, report);
        } else if (grad->parsed()) {
            log_event("config", {{"command", "grad-check"}, {"seed", synth_seed}, {"trials", trials}, {"micro", micro}});
            bool ok = true;
            std::ostringstream table;
            table << std::left << std::setw(22) << "check" << std::right << std::setw(8) << "entries" << std::setw(14)
                  << "max_rel_err" << std::setw(11) << "tol" << '\n';
            for (const auto& r : dacl::check_all_ops(synth_seed, static_cast<int>(trials))) {
                table << format_table_row(r.name, r.entries, r.max_rel_error, r.tolerance);
                ok = ok && r.passed();
            }
            if (micro) {
                for (std::size_t b : {2, 4}) {
                    dacl::MicroCheckOptions opts;
                    opts.batch_size = b;
                    opts.seed = synth_seed;
                    auto r = dacl::check_model_gradients(opts);
                    table << format_table_row(r.name, r.entries, r.max_rel_error, r.tolerance);
                    ok = ok && r.passed();
                }
            }
            std::cout << table.str();
            if (!ok) {
                log_event("grad_check_failed");
                return kExitCheckFailed;
            }
        } else if (gates->parsed()) {
            auto model = dacl::load_checkpoint(checkpoint);
            log_config("inspect-gates", model.config);
            auto vocab = vocab_for_checkpoint(vocab_path, checkpoint);
            auto examples = dacl::load_jsonl(data);
            if (limit > 0 && examples.size() > limit) examples.resize(limit);
            json rows = json::array();
            dacl::NoGradGuard guard;
            std::size_t index = 0;
            for (const auto& batch : dacl::make_batches(examples, vocab, model.config.max_len, model.config.batch_size,
                                                        std::nullopt)) {
                dacl::ForwardContext ctx;
                auto enc = dacl::encode(batch, model.embeddings, model.layers, ctx);
                for (std::size_t b = 0; b < batch.size; ++b, ++index) {
                    json layers = json::array();
                    for (const auto& gate : enc.gates) {
                        const std::size_t h = gate.alpha.dim(1);
                        std::vector<double> alpha(gate.alpha.data().begin() + static_cast<std::ptrdiff_t>(b * h),
                                                  gate.alpha.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * h));
                        layers.push_back({{"alpha", alpha}, {"entropy", dacl::attention_entropy(gate)[b]}});
                    }
                    rows.push_back({{"index", index},
                                    {"label", batch.labels[b]},
                                    {"word_count", batch.word_counts[b]},
                                    {"layers", layers}});
                }
            }
            emit(out, rows.dump(2) + "\n");
        } else if (emb->parsed()) {
            auto model = dacl::load_checkpoint(checkpoint);
            log_config("export-embeddings", model.config);
            auto vocab = vocab_for_checkpoint(vocab_path, checkpoint);
            auto examples = dacl::load_jsonl(data);
            auto projected = dacl::project_dataset(model, examples, vocab, model.config.batch_size);
            std::ostringstream csv;
            const std::size_t p = projected.z.dim(1);
            csv << "label";
            for (std::size_t j = 0; j < p; ++j) csv << ",z" << j;
            csv << '\n' << std::setprecision(17);
            for (std::size_t i = 0; i < projected.labels.size(); ++i) {
                csv << projected.labels[i];
                for (std::size_t j = 0; j < p; ++j) csv << ',' << projected.z.data()[i * p + j];
                csv << '\n';
            }
            emit(out, csv.str());
        }
    } catch (const dacl::ConfigError& e) {
        log_event("error", {{"kind", "config"}, {"message", e.what()}});
        return kExitUsage;
    } catch (const dacl::DataError& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        return kExitData;
    } catch (const std::out_of_range& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        return kExitData;
    } catch (const dacl::DivergenceError& e) {
        log_event("error", {{"kind", "divergence"}, {"message", e.what()}});
        return kExitDivergence;
    } catch (const std::exception& e) {
        log_event("error", {{"kind", "internal"}, {"message", e.what()}});
        return kExitUsage;
    }
    return kExitOk;
}
