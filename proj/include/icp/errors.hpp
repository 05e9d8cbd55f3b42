#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icp {

/// Non-finite or malformed numeric input.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point handed to an oracle lies outside the oracle's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent run or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed unit-commitment instance.
class InstanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The master solver exhausted its sweep budget before certifying optimality.
class MasterFailure : public std::runtime_error {
 public:
  MasterFailure(double best_residual, double tolerance, std::size_t sweeps)
      : std::runtime_error("master problem not certified: residual " +
                           std::to_string(best_residual) + " > tolerance " +
                           std::to_string(tolerance) + " after " +
                           std::to_string(sweeps) + " sweeps"),
        best_residual_(best_residual),
        tolerance_(tolerance),
        sweeps_(sweeps) {}

  double best_residual() const noexcept { return best_residual_; }
  double tolerance() const noexcept { return tolerance_; }
  std::size_t sweeps() const noexcept { return sweeps_; }

 private:
  double best_residual_;
  double tolerance_;
  std::size_t sweeps_;
};

}  // namespace icp
