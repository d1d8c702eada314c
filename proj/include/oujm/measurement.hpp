#pragma once
#include <utility>
#include <vector>

#include "oujm/ou.hpp"
#include "oujm/rng.hpp"

namespace oujm {

// Structural-zero pattern of the k x p loadings matrix plus the values of
// the non-zero cells (all positive).
struct LoadingsSpec {
  int k = 0;
  int p = 0;
  std::vector<std::pair<int, int>> cells;  // (row, col) of non-zeros, row-major
  VectorXd values;                         // one per cell

  MatrixXd matrix() const;
  void validate_shape() const;  // cells in range, every row/col has a non-zero
  void validate() const;        // shape plus values > 0
};

struct NoiseSpec {
  VectorXd sigma_u2;    // random-intercept variances, length k
  VectorXd sigma_eps2;  // measurement-error variances, length k
};

// Log-density of y | eta with the random intercepts integrated out:
// independent Gaussians with mean (Lambda eta)_k and variance
// sigma_u2_k + sigma_eps2_k. NaN entries of y are missing and contribute 0.
double obs_loglik(const MatrixXd& lambda, const NoiseSpec& noise,
                  const VectorXd& eta, const VectorXd& y);

// Lambda eta + u + eps with fresh eps ~ N(0, diag(sigma_eps2)).
VectorXd simulate_observation(const MatrixXd& lambda, const NoiseSpec& noise,
                              const VectorXd& eta, const VectorXd& u, Rng& rng);

}  // namespace oujm
