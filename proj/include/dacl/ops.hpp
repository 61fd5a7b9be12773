#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "dacl/tensor.hpp"

namespace dacl {

// Differentiable tensor operations. Every op records a backward rule when grad
// mode is on and one of its inputs requires grad.

/// Matrix product over the last two dims. Accepts [m,k]x[k,n], [...,m,k]x[k,n]
/// (shared right operand) and [...,m,k]x[...,k,n] with equal leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with `b` broadcast onto `a`: b's shape, left-padded with 1s to a's
// rank, must equal a's shape except for dims of size 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);  // -> [1]
Tensor sum(const Tensor& a, std::size_t axis);  // removes axis (rank-1 input -> [1])
Tensor mean(const Tensor& a, std::size_t axis);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);
/// log(sum(exp(a))) along `axis`, max-subtracted; removes the axis.
Tensor logsumexp(const Tensor& a, std::size_t axis);

/// Swaps the last two dims.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// Row gather: output shape is ids_shape + [table.dim(1)]. Throws std::out_of_range
/// on an id outside the table.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, const Shape& ids_shape);

/// Inverted dropout: kept activations are divided by (1 - p). Identity when
/// `train` is false or p == 0.
Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last dim, then applies gain and bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

/// a.b / (|a||b|) over the last dim; the result drops that dim.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// x / |x| over the last dim.
Tensor l2_normalize(const Tensor& a);

}  // namespace dacl
