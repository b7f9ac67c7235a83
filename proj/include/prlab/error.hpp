#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace prlab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is outside its documented domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// An operation was called on an object that does not satisfy its contract,
/// e.g. a stochastic estimator handed to a Lipschitz probe.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Bayes' rule on a measurement column with zero marginal mass.
class UndefinedPosterior : public Error {
 public:
  using Error::Error;
};

/// An exhaustive enumeration would exceed its guard.
class TooLarge : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition (e.g. non-invertibility) does not hold.
class PreconditionFailed : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

  [[nodiscard]] std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// The exhaustive theorem check found a map violating the bound.
class VerificationFailure : public Error {
 public:
  VerificationFailure(const std::string& what, std::vector<std::size_t> counterexample)
      : Error(what), counterexample_(std::move(counterexample)) {}

  /// x-index chosen for every y-index by the offending map.
  [[nodiscard]] const std::vector<std::size_t>& counterexample() const noexcept {
    return counterexample_;
  }

 private:
  std::vector<std::size_t> counterexample_;
};

}  // namespace prlab
