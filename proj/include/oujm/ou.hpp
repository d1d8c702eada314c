#pragma once
#include <Eigen/Dense>

#include "oujm/errors.hpp"

namespace oujm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Gaussian {
  VectorXd mean;
  MatrixXd cov;
};

// Mean-reversion matrix theta plus the off-diagonal entries of the
// stationary correlation matrix V (unit diagonal). The volatility sigma is
// always derived from (theta, rho), never stored.
struct OuParams {
  MatrixXd theta;
  VectorXd rho_offdiag;  // length p(p-1)/2, row-major upper triangle

  int p() const { return static_cast<int>(theta.rows()); }
  MatrixXd stationary_corr() const;  // V
  // Eigenvalues of theta all have strictly positive real part and V is PD.
  bool feasible() const;
};

struct LatentState {
  double time = 0.0;
  VectorXd value;
};

// e^A. Closed form for 2x2, scaling-and-squaring Pade otherwise.
MatrixXd matrix_exp(const MatrixXd& a);

// Solves theta V + V theta^T = sigma sigma^T via the Kronecker-sum system.
MatrixXd stationary_cov(const MatrixXd& theta, const MatrixXd& sigma);

// Inverse map: symmetric matrix square root of theta V + V theta^T.
MatrixXd derive_sigma(const OuParams& params);

MatrixXd transition_matrix(const OuParams& params, double dt);  // e^{-theta dt}
// V - e^{-theta dt} V e^{-theta^T dt}; exact zero at dt == 0.
MatrixXd conditional_cov(const OuParams& params, double dt);

Gaussian cond_dist_additive(const OuParams& params, const LatentState& from,
                            double to_time, const VectorXd& mu_from,
                            const VectorXd& mu_to);

Gaussian cond_dist_drift(const OuParams& params, const LatentState& from,
                         double to_time, const VectorXd& drift_integral);

}  // namespace oujm
