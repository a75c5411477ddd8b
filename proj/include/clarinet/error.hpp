#pragma once

#include <stdexcept>
#include <string>

namespace clarinet {

/// Violated precondition or API misuse (wrong shape, out-of-range class, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file (bad magic, truncated payload, length mismatch).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced during a forward pass or a training step.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clarinet
