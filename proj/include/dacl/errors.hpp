#pragma once

#include <stdexcept>
#include <string>

namespace dacl {

// Shape or dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (non-scalar loss, all-masked row, ...).
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

// Invalid hyperparameters or configuration values.
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Malformed, missing or invalid input data (corpus rows, vocab files, checkpoints).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace dacl
