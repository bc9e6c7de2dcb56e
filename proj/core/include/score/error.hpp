#pragma once

#include <stdexcept>
#include <string>

namespace score {

enum class ErrorKind {
  kInvalidInput,
  kConvergenceFailure,
  kDivergentKl,
  kSingularInformation,
  kTrainingDivergence,
  kMissingReference,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by pessimistic value iteration when max_iterations is exhausted.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double residual)
      : Error(ErrorKind::kConvergenceFailure, message), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Raised when training produces a non-finite loss or a Q-value beyond the guard.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, long step)
      : Error(ErrorKind::kTrainingDivergence, message), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::kInvalidInput, message);
}

}  // namespace score
