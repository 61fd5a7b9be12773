#pragma once

#include <cstddef>
#include <cstdint>

#include "dacl/config.hpp"
#include "dacl/gradcheck.hpp"

namespace dacl {

/// d=8, 2 heads, 2 layers, sequences of 6 tokens, no dropout, both modules on.
ModelConfig micro_config();

struct MicroCheckOptions {
    std::size_t batch_size = 2;
    std::uint64_t seed = 7;
    double init_stddev = 0.3;  // larger than the training init so every path carries signal
    double tolerance = 1e-3;
};

/// Finite-difference check of cross-entropy + weighted contrastive loss with respect
/// to every model parameter of the micro configuration. Half the batch is labelled 0
/// and half 1, so batches of 4 or more exercise the contrastive term.
GradCheckResult check_model_gradients(const MicroCheckOptions& options = {});

}  // namespace dacl
