#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tdt {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric argument lies outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A precondition or structural contract between arguments was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A document (JSON/CSV) does not match its schema. `path()` names the
/// offending field, e.g. "patient.k_p_l" or "volumes[2]".
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// ODE integration could not proceed past `time()` hours.
class IntegrationError : public Error {
 public:
  IntegrationError(double time_h, const std::string& what)
      : Error(what + " at t=" + std::to_string(time_h) + " h"), time_(time_h) {}
  double time() const noexcept { return time_; }

  /// Same failure with `context` prepended to the message.
  IntegrationError with_context(const std::string& context) const {
    return IntegrationError(time_, context + ": " + what(), Preformatted{});
  }

 private:
  struct Preformatted {};
  IntegrationError(double time_h, const std::string& what, Preformatted)
      : Error(what), time_(time_h) {}
  double time_;
};

/// The terminal segment of a time-activity curve does not decay.
class TailExtrapolationError : public Error {
 public:
  TailExtrapolationError(std::size_t compartment, const std::string& what)
      : Error(what), compartment_(compartment) {}
  std::size_t compartment() const noexcept { return compartment_; }

 private:
  std::size_t compartment_;
};

/// Reverse-mode gradient requested at a point where the loss is not finite.
class GradientError : public Error {
 public:
  using Error::Error;
};

/// Surrogate training diverged at `iteration()` (1-based).
class TrainingError : public Error {
 public:
  TrainingError(std::size_t iteration, const std::string& what)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace tdt
