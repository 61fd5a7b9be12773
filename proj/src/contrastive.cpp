#include "dacl/contrastive.hpp"

#include <atomic>
#include <cmath>

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

namespace {

std::atomic<std::size_t> g_projection_calls{0};

// Keeps the self-similarity out of the denominator: exp underflows to exactly 0.
constexpr double kSelfScore = -1e9;

double cosine(const double* a, const double* b, std::size_t d) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        dot += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0.0 || bb == 0.0) throw ContractError("cosine similarity of a zero vector");
    return dot / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

ProjectedBatch project(const Tensor& pooled, const ProjectionHead& head, const std::vector<int>& labels,
                       bool train, double dropout_p, std::mt19937_64* rng) {
    ++g_projection_calls;
    if (pooled.rank() != 2 || pooled.dim(0) != labels.size()) {
        throw ShapeError("project: pooled " + shape_str(pooled.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
    }
    auto hidden = relu(add(matmul(pooled, head.w1), head.b1));
    if (train && dropout_p > 0.0) {
        if (!rng) throw ContractError("training projection needs a dropout generator");
        hidden = dropout(hidden, dropout_p, true, *rng);
    }
    return ProjectedBatch{add(matmul(hidden, head.w2), head.b2), labels};
}

std::size_t projection_call_count() { return g_projection_calls.load(); }

SclLoss scl_loss(const ProjectedBatch& batch, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
    const std::size_t n = batch.labels.size();
    if (n < 2) throw ContractError("supervised contrastive loss needs a batch of at least 2");
    if (batch.z.rank() != 2 || batch.z.dim(0) != n) {
        throw ShapeError("scl_loss: z " + shape_str(batch.z.shape()) + " vs " + std::to_string(n) + " labels");
    }

    // Positive-pair weights: 1/|P(i)| per positive, then 1/anchors for the mean.
    std::vector<double> weights(n * n, 0.0);
    std::vector<double> anchor_weight(n, 0.0);
    std::size_t anchors = 0;
    std::vector<std::size_t> positives(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && batch.labels[j] == batch.labels[i]) ++positives[i];
        }
        if (positives[i] > 0) ++anchors;
    }
    SclLoss out;
    out.anchors = anchors;
    if (anchors == 0) {
        out.loss = Tensor::scalar(0.0);
        out.no_positive_pairs = true;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (positives[i] == 0) continue;
        const double w = 1.0 / (static_cast<double>(positives[i]) * static_cast<double>(anchors));
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && batch.labels[j] == batch.labels[i]) weights[i * n + j] = w;
        }
        anchor_weight[i] = w * static_cast<double>(positives[i]);
    }
    std::vector<double> self_mask(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) self_mask[i * n + i] = kSelfScore;

    auto unit = l2_normalize(batch.z);
    auto sims = scale(matmul(unit, transpose(unit)), 1.0 / temperature);
    auto log_denominator = logsumexp(add(sims, Tensor::from({n, n}, std::move(self_mask))), 1);
    auto denominator_term = sum(mul(log_denominator, Tensor::from({n}, std::move(anchor_weight))));
    auto positive_term = sum(mul(sims, Tensor::from({n, n}, std::move(weights))));
    out.loss = sub(denominator_term, positive_term);
    return out;
}

EmbeddingDiagnostics embedding_diagnostics(const ProjectedBatch& batch) {
    const std::size_t n = batch.labels.size();
    if (batch.z.rank() != 2 || batch.z.dim(0) != n) throw ShapeError("embedding_diagnostics: z/labels mismatch");
    const std::size_t d = batch.z.dim(1);
    const double* z = batch.z.data().data();
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = cosine(z + i * d, z + j * d, d);
            if (batch.labels[i] == batch.labels[j]) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    if (n_inter == 0) throw ContractError("embedding diagnostics need both classes in the batch");
    EmbeddingDiagnostics out;
    // A class with a single member contributes no intra pairs; treat it as compact.
    out.intra_class_mean_cosine = n_intra ? intra / static_cast<double>(n_intra) : 1.0;
    out.inter_class_mean_cosine = inter / static_cast<double>(n_inter);
    const double spread = 1.0 - out.intra_class_mean_cosine;
    if (std::abs(spread) < 1e-12) {
        out.ratio_defined = false;
        out.separation_ratio = 0.0;
    } else {
        out.separation_ratio = (1.0 - out.inter_class_mean_cosine) / spread;
    }
    return out;
}

}  // namespace dacl
