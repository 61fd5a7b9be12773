#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "dacl/tensor.hpp"

namespace dacl {

/// d -> hidden -> projection_dim MLP with relu and dropout after the relu.
struct ProjectionHead {
    Tensor w1;  // [d, hidden]
    Tensor b1;  // [hidden]
    Tensor w2;  // [hidden, p]
    Tensor b2;  // [p]
};

struct ProjectedBatch {
    Tensor z;  // [B, p], not normalized
    std::vector<int> labels;
};

ProjectedBatch project(const Tensor& pooled, const ProjectionHead& head, const std::vector<int>& labels,
                       bool train, double dropout_p, std::mt19937_64* rng);

/// Number of project() calls made so far in this process.
std::size_t projection_call_count();

struct SclLoss {
    Tensor loss;                     // scalar
    std::size_t anchors = 0;         // anchors with at least one positive
    bool no_positive_pairs = false;  // every anchor was skipped; loss is 0
};

/// Supervised contrastive loss over one batch. For each anchor i with positives
/// P(i) = {j != i : y_j = y_i}:
///   -1/|P(i)| * sum_{j in P(i)} log( exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau) )
/// with s the cosine similarity, averaged over anchors that have positives.
SclLoss scl_loss(const ProjectedBatch& batch, double temperature);

struct EmbeddingDiagnostics {
    double intra_class_mean_cosine = 0.0;
    double inter_class_mean_cosine = 0.0;
    double separation_ratio = 0.0;  // (1 - inter) / (1 - intra)
    bool ratio_defined = true;      // false when 1 - intra is ~0
};

/// Pairwise cosine statistics of the projections; throws ContractError unless both
/// classes are present.
EmbeddingDiagnostics embedding_diagnostics(const ProjectedBatch& batch);

}  // namespace dacl
