#include "dacl/trainer.hpp"

#include <chrono>
#include <cmath>

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t batch = labels.size(), classes = logits.dim(1);
    std::vector<double> onehot(batch * classes, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
            throw ContractError("label " + std::to_string(labels[b]) + " outside the class range");
        }
        onehot[b * classes + static_cast<std::size_t>(labels[b])] = 1.0;
    }
    auto picked = sum(mul(logits, Tensor::from({batch, classes}, std::move(onehot))), 1);
    return scale(sum(sub(logsumexp(logits, 1), picked)), 1.0 / static_cast<double>(batch));
}

Tensor total_loss(const Tensor& ce, const Tensor& scl, double weight) {
    if (weight < 0.0) throw ConfigError("contrastive weight must be non-negative");
    if (weight == 0.0) return ce;
    return add(ce, scale(scl, weight));
}

std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio) {
    // The small offset keeps products like 0.1 * 30 = 3.0000000000000004 at 3.
    return static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr) {
    if (step > total_steps) throw ContractError("lr_at: step beyond total_steps");
    const std::size_t warmup = warmup_steps(total_steps, warmup_ratio);
    if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (total_steps == warmup) return base_lr;
    return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::step(double lr) {
    if (lr < 0.0) throw ContractError("learning rate must be non-negative");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].requires_grad() && !params_[i].has_grad()) {
            throw ContractError("trainable parameter " + std::to_string(i) + " has no gradient");
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const double step_size = lr / bc1;
    const double sqrt_bc2 = std::sqrt(bc2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.requires_grad()) continue;
        auto values = p.mutable_data();
        auto grads = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grads[k];
            values[k] -= lr * options_.weight_decay * values[k];
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
            const double denom = std::sqrt(v[k]) / sqrt_bc2 + options_.eps;
            values[k] -= step_size * m[k] / denom;
        }
    }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.requires_grad() || !p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / (norm + 1e-6);
        for (auto& p : params) {
            if (!p.requires_grad() || !p.has_grad()) continue;
            for (auto& g : p.mutable_grad()) g *= factor;
        }
    }
    return norm;
}

nlohmann::json history_to_json(const std::vector<EpochRecord>& history) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : history) {
        out.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_accuracy", r.val_accuracy}, {"lr", r.lr}});
    }
    return out;
}

std::vector<Batch> epoch_batches(std::span<const Example> train_set, const Vocab& vocab, const ModelConfig& config,
                                 std::size_t epoch) {
    auto rng = derive_rng(config.seed, "shuffle:" + std::to_string(epoch));
    return make_batches(train_set, vocab, config.max_len, config.batch_size, rng());
}

std::mt19937_64 encoder_dropout_rng(const ModelConfig& config) { return derive_rng(config.seed, "dropout:encoder"); }

double accuracy(const Model& model, std::span<const Example> examples, const Vocab& vocab) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(examples, vocab, model.config.max_len, model.config.batch_size, std::nullopt)) {
        auto pred = predict(model, batch);
        for (std::size_t b = 0; b < batch.size; ++b) correct += pred[b] == batch.labels[b];
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

namespace {

std::vector<std::vector<double>> snapshot(const Model& model) {
    std::vector<std::vector<double>> out;
    for (const auto& p : model.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

void restore(Model& model, const std::vector<std::vector<double>>& saved) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_data();
        std::copy(saved[i].begin(), saved[i].end(), dst.begin());
    }
}

}  // namespace

TrainResult train(Model model, std::span<const Example> train_set, std::span<const Example> val_set,
                  const Vocab& vocab, const TrainOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig& config = model.config;
    config.validate();
    if (train_set.empty() || val_set.empty()) throw ContractError("training needs non-empty train and val splits");

    const bool use_scl = config.uses_scl() && model.projection.has_value();
    if (model.projection && !use_scl) {
        // Unused head: keep it out of the optimizer instead of leaving it gradient-less.
        for (auto* t : {&model.projection->w1, &model.projection->b1, &model.projection->w2, &model.projection->b2}) {
            t->set_requires_grad(false);
        }
    }

    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    AdamW optimizer(params, AdamWOptions{config.beta1, config.beta2, config.adam_eps, config.weight_decay});

    const std::size_t batches_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * batches_per_epoch;
    auto encoder_rng = encoder_dropout_rng(config);
    auto projection_rng = derive_rng(config.seed, "dropout:projection");

    TrainResult result;
    result.state.rng_seed = config.seed;
    auto best = snapshot(model);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        result.state.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        double lr = 0.0;
        for (const auto& batch : epoch_batches(train_set, vocab, config, epoch)) {
            const std::size_t step = result.state.global_step + 1;
            optimizer.zero_grad();
            Tensor loss;
            try {
                ForwardContext ctx{true, config.dropout, &encoder_rng};
                auto out = forward(model, batch, ctx);
                auto ce = cross_entropy(out.logits, batch.labels);
                if (use_scl && batch.size >= 2) {
                    auto z = project(contrastive_input(model, out), *model.projection, batch.labels, true,
                                     config.dropout, &projection_rng);
                    loss = total_loss(ce, scl_loss(z, config.temperature).loss, config.scl_weight);
                } else {
                    loss = ce;
                }
                if (!std::isfinite(loss.item())) throw std::domain_error("non-finite loss");
                backward(loss);
            } catch (const std::domain_error& e) {
                throw DivergenceError("training diverged at step " + std::to_string(step) + " (epoch " +
                                      std::to_string(epoch) + "): " + e.what());
            }
            // A batch without a contrastive term (one row, or no same-label pair)
            // leaves the projection head out of the graph; it gets a zero gradient.
            for (auto& p : params) {
                if (p.requires_grad() && !p.has_grad()) p.mutable_grad();
            }
            if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
            lr = lr_at(step, total_steps, config.warmup_ratio, config.lr);
            optimizer.step(lr);
            result.state.global_step = step;
            loss_sum += loss.item();
            ++loss_count;
        }
        optimizer.zero_grad();

        double val_accuracy = 0.0;
        try {
            val_accuracy = accuracy(model, val_set, vocab);
        } catch (const std::domain_error& e) {
            throw DivergenceError("model diverged after step " + std::to_string(result.state.global_step) +
                                  " (epoch " + std::to_string(epoch) + " validation): " + e.what());
        }
        EpochRecord record{epoch, loss_sum / static_cast<double>(loss_count), val_accuracy, lr};
        result.history.push_back(record);
        if (options.on_epoch) options.on_epoch(record);

        if (record.val_accuracy > result.state.best_val_accuracy) {
            result.state.best_val_accuracy = record.val_accuracy;
            result.state.epochs_since_improvement = 0;
            result.best_epoch = epoch;
            best = snapshot(model);
        } else if (++result.state.epochs_since_improvement >= config.patience && epoch < config.epochs) {
            result.stopped_early = true;
            break;
        }
    }
    restore(model, best);
    result.model = std::move(model);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace dacl
