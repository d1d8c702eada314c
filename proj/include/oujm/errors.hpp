#pragma once
#include <stdexcept>
#include <string>

namespace oujm {

struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct OrderingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Parameter point outside the feasible set (e.g. sigma*sigma^T not PSD).
struct ConstraintViolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Singular Kronecker-sum system / non-mean-reverting theta.
struct DegenerateProcessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Latent path does not cover a required evaluation point.
struct IncompletePathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Discretized hazard too large for cell-wise Poisson generation.
struct InstabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataInconsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace oujm
