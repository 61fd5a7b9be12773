#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dacl/model.hpp"
#include "dacl/tensor.hpp"
#include "dacl/text.hpp"
#include "json.hpp"

namespace dacl {

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// ce + weight * scl; returns `ce` itself when weight is 0.
Tensor total_loss(const Tensor& ce, const Tensor& scl, double weight);

std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio);

/// Linear 0 -> base_lr over the warmup steps, then linear base_lr -> 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr);

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with bias correction and decoupled weight decay. Parameters whose
/// requires_grad is false are skipped.
class AdamW {
   public:
    AdamW(std::vector<Tensor> params, AdamWOptions options);

    /// p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    /// Throws ContractError if a trainable parameter has no gradient.
    void step(double lr);
    void zero_grad();

    std::size_t steps() const { return t_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

   private:
    std::vector<Tensor> params_;
    AdamWOptions options_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

/// Scales trainable gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double lr = 0.0;
};

nlohmann::json history_to_json(const std::vector<EpochRecord>& history);

struct TrainState {
    std::size_t epoch = 0;
    std::size_t global_step = 0;
    double best_val_accuracy = -1.0;
    std::size_t epochs_since_improvement = 0;
    std::uint64_t rng_seed = 0;
};

struct TrainResult {
    Model model;  // best-validation weights
    std::vector<EpochRecord> history;
    TrainState state;
    bool stopped_early = false;
    std::size_t best_epoch = 0;
    double seconds = 0.0;
};

struct TrainOptions {
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Batches for one epoch: shuffled with a stream derived from the seed and epoch.
std::vector<Batch> epoch_batches(std::span<const Example> train_set, const Vocab& vocab, const ModelConfig& config,
                                 std::size_t epoch);

/// Dropout stream for encoder forward passes during training.
std::mt19937_64 encoder_dropout_rng(const ModelConfig& config);

/// Accuracy of argmax predictions; 0 for an empty set.
double accuracy(const Model& model, std::span<const Example> examples, const Vocab& vocab);

/// Epoch/batch loop with AdamW, warmup/decay schedule, optional contrastive term,
/// per-epoch validation, early stopping and best-weight restoration.
/// Throws DivergenceError naming the step if the loss becomes non-finite.
TrainResult train(Model model, std::span<const Example> train_set, std::span<const Example> val_set,
                  const Vocab& vocab, const TrainOptions& options = {});

}  // namespace dacl
