#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

/// Caller supplied data or configuration that violates a precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A byte stream or document does not follow the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is not defined for the given input (e.g. AUROC with one class).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The dual solver hit its update budget before reaching the KKT tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double violation)
      : std::runtime_error(what), violation_(violation) {}

  /// Maximal KKT violation at the last iterate.
  double violation() const noexcept { return violation_; }

 private:
  double violation_;
};

}  // namespace ctxprobe
