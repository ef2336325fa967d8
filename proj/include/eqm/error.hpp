#pragma once

#include <stdexcept>
#include <string>

namespace eqm {

/// Invalid input, configuration, or contract violation. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes for an operation.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A NaN/Inf surfaced during computation. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eqm
