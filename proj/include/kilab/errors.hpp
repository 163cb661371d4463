#pragma once

#include <stdexcept>
#include <string>

namespace kilab {

/// Invalid user input: malformed config, out-of-range parameter, unsupported
/// domain/kernel combination. The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point outside the domain a kernel is defined on.
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Base for failures of the numerics themselves. Exit code 2 in the CLI.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two or more training inputs coincide, so K(X,X) cannot be invertible.
class DuplicatePointsError : public NumericalError {
 public:
  DuplicatePointsError(std::size_t first, std::size_t second);
  std::size_t first() const { return first_; }
  std::size_t second() const { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

/// The kernel matrix is numerically singular at lambda = 0.
class InterpolationInfeasible : public NumericalError {
 public:
  explicit InterpolationInfeasible(double min_eigenvalue);
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::size_t last_stable_step, double loss);
  std::size_t last_stable_step() const { return last_stable_step_; }

 private:
  std::size_t last_stable_step_;
};

class QuadratureNonConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An invariant that holds in exact arithmetic failed by more than the
/// allowed slack; points at a bug rather than bad input.
class ConsistencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace kilab
