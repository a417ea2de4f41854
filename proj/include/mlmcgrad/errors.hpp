#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mlmcgrad {

enum class ErrorKind {
  invalid_input,
  level_overflow,
  budget_overflow,
  inapplicable_estimator,
  divergence,
  unstable_regime,
  degenerate_denominator,
  bracket_failure,
  insufficient_data,
  unsupported,
  contract,
  numeric,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::level_overflow: return "level overflow";
    case ErrorKind::budget_overflow: return "budget overflow";
    case ErrorKind::inapplicable_estimator: return "inapplicable estimator";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::unstable_regime: return "unstable regime";
    case ErrorKind::degenerate_denominator: return "degenerate denominator";
    case ErrorKind::bracket_failure: return "bracket failure";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::contract: return "contract violation";
    case ErrorKind::numeric: return "numeric error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Thrown when an iterate becomes non-finite or leaves the 1e8 ball.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t iteration, Eigen::VectorXd last_finite)
      : Error(ErrorKind::divergence, "iterate diverged at t=" + std::to_string(iteration)),
        iteration_(iteration),
        last_finite_(std::move(last_finite)) {}

  std::size_t iteration() const noexcept { return iteration_; }
  const Eigen::VectorXd& last_finite() const noexcept { return last_finite_; }

 private:
  std::size_t iteration_;
  Eigen::VectorXd last_finite_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace mlmcgrad
