#pragma once

#include <stdexcept>
#include <string>

namespace treebo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A point was handed to an evaluator outside its declared box.
struct DomainViolation : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

/// Objective evaluation failed (child process death, bad reply, timeout, ...).
struct EvaluationError : Error {
  EvaluationError(const std::string& what, std::string raw = {})
      : Error(what), raw_response(std::move(raw)) {}
  std::string raw_response;
};

/// Linear algebra gave up (factorization failed after the full jitter ladder).
struct NumericalError : Error {
  using Error::Error;
};

/// Every multi-start of a model fit failed.
struct FitError : Error {
  using Error::Error;
};

/// Clustering could not produce two clusters (all rows identical).
struct DegenerateClusterError : Error {
  using Error::Error;
};

/// Classifier training received a single class.
struct ClassImbalanceError : Error {
  using Error::Error;
};

// Invariant check that survives NDEBUG builds.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error("internal invariant violated: " + msg);
}

}  // namespace treebo
