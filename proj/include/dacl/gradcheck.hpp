#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dacl/tensor.hpp"

namespace dacl {

struct GradCheckResult {
    std::string name;
    std::size_t entries = 0;       // scalar inputs compared
    double max_rel_error = 0.0;    // max |analytic - numeric| / max(1, |numeric|)
    double tolerance = 0.0;
    bool passed() const { return max_rel_error < tolerance; }
};

double relative_error(double analytic, double numeric);

/// Compares backward() of `loss_fn` against central differences on every entry of
/// `inputs`. `loss_fn` must rebuild the graph from the current input values and be
/// deterministic.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, double step = 1e-5, double tolerance = 1e-4);

/// Randomized finite-difference checks of every differentiable op in ops.hpp;
/// one result per op with the worst error over `trials` random small tensors.
std::vector<GradCheckResult> check_all_ops(std::uint64_t seed, int trials, double tolerance = 1e-4);

}  // namespace dacl
