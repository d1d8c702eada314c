#include "oujm/ou.hpp"

#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace oujm {

namespace {

// Analytic 2x2 exponential. With m = tr(A)/2 and B = A - mI (traceless),
// e^A = e^m (c0 I + c1 B) where c0/c1 depend on q^2 = -det(B).
Eigen::Matrix2d exp_2x2(const Eigen::Matrix2d& a) {
  const double m = 0.5 * (a(0, 0) + a(1, 1));
  Eigen::Matrix2d b = a;
  b(0, 0) -= m;
  b(1, 1) -= m;
  const double q2 = b(0, 0) * b(0, 0) + b(0, 1) * b(1, 0);
  double c0, c1;
  if (std::abs(q2) < 1e-8) {
    // series in q^2, accurate well past double precision here
    c0 = 1.0 + q2 / 2.0 + q2 * q2 / 24.0;
    c1 = 1.0 + q2 / 6.0 + q2 * q2 / 120.0;
  } else if (q2 > 0.0) {
    const double q = std::sqrt(q2);
    c0 = std::cosh(q);
    c1 = std::sinh(q) / q;
  } else {
    const double q = std::sqrt(-q2);
    c0 = std::cos(q);
    c1 = std::sin(q) / q;
  }
  const double em = std::exp(m);
  Eigen::Matrix2d out = em * c1 * b;
  out(0, 0) += em * c0;
  out(1, 1) += em * c0;
  return out;
}

}  // namespace

MatrixXd matrix_exp(const MatrixXd& a) {
  if (!a.allFinite()) throw InvalidInputError("matrix_exp: non-finite entries");
  if (a.rows() != a.cols()) throw InvalidInputError("matrix_exp: non-square");
  if (a.rows() == 2) return exp_2x2(a);
  return a.exp();
}

MatrixXd OuParams::stationary_corr() const {
  const int n = p();
  MatrixXd v = MatrixXd::Identity(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      v(i, j) = v(j, i) = rho_offdiag(idx++);
    }
  return v;
}

bool OuParams::feasible() const {
  if (!theta.allFinite() || !rho_offdiag.allFinite()) return false;
  for (int i = 0; i < rho_offdiag.size(); ++i)
    if (std::abs(rho_offdiag(i)) >= 1.0) return false;
  Eigen::EigenSolver<MatrixXd> es(theta, /*computeEigenvectors=*/false);
  if ((es.eigenvalues().real().array() <= 0.0).any()) return false;
  if (p() > 2) {
    Eigen::LLT<MatrixXd> llt(stationary_corr());
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

MatrixXd stationary_cov(const MatrixXd& theta, const MatrixXd& sigma) {
  const int n = static_cast<int>(theta.rows());
  const MatrixXd id = MatrixXd::Identity(n, n);
  const MatrixXd ksum =
      Eigen::kroneckerProduct(id, theta) + Eigen::kroneckerProduct(theta, id);
  const MatrixXd ssT = sigma * sigma.transpose();
  Eigen::FullPivLU<MatrixXd> lu(ksum);
  if (!lu.isInvertible())
    throw DegenerateProcessError("stationary_cov: singular Kronecker-sum system");
  const VectorXd v = lu.solve(VectorXd(Eigen::Map<const VectorXd>(ssT.data(), n * n)));
  MatrixXd out = Eigen::Map<const MatrixXd>(v.data(), n, n);
  return 0.5 * (out + out.transpose());
}

MatrixXd derive_sigma(const OuParams& params) {
  if (!params.feasible())
    throw ConstraintViolationError("derive_sigma: infeasible (theta, rho)");
  const MatrixXd v = params.stationary_corr();
  MatrixXd ssT = params.theta * v + v * params.theta.transpose();
  ssT = 0.5 * (ssT + ssT.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(ssT);
  const VectorXd ev = es.eigenvalues();
  if ((ev.array() < -1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff())).any())
    throw ConstraintViolationError("derive_sigma: sigma*sigma^T not PSD");
  const VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd transition_matrix(const OuParams& params, double dt) {
  return matrix_exp(MatrixXd(-params.theta * dt));
}

MatrixXd conditional_cov(const OuParams& params, double dt) {
  const int n = params.p();
  if (dt == 0.0) return MatrixXd::Zero(n, n);
  const MatrixXd v = params.stationary_corr();
  const MatrixXd a = transition_matrix(params, dt);
  MatrixXd q = v - a * v * a.transpose();
  return 0.5 * (q + q.transpose());
}

Gaussian cond_dist_additive(const OuParams& params, const LatentState& from,
                            double to_time, const VectorXd& mu_from,
                            const VectorXd& mu_to) {
  if (to_time < from.time)
    throw OrderingError("cond_dist_additive: to_time < from.time");
  const double dt = to_time - from.time;
  const MatrixXd a = transition_matrix(params, dt);
  Gaussian g;
  g.mean = mu_to + a * (from.value - mu_from);
  g.cov = conditional_cov(params, dt);
  return g;
}

Gaussian cond_dist_drift(const OuParams& params, const LatentState& from,
                         double to_time, const VectorXd& drift_integral) {
  if (to_time < from.time)
    throw OrderingError("cond_dist_drift: to_time < from.time");
  const double dt = to_time - from.time;
  const MatrixXd a = transition_matrix(params, dt);
  Gaussian g;
  g.mean = a * from.value + drift_integral;
  g.cov = conditional_cov(params, dt);
  return g;
}

}  // namespace oujm
