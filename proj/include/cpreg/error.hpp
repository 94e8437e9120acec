#pragma once

#include <stdexcept>
#include <string>

namespace cpreg {

// Exception taxonomy. The CLI maps each family to a distinct exit code.

/// Bad arguments or violated preconditions (exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable, malformed or otherwise unusable input data (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The request is well formed but cannot be satisfied by the data,
/// e.g. a Mondrian bin with too few calibration members (exit code 4).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cpreg
