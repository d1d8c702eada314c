#include "oujm/measurement.hpp"

#include <cmath>

namespace oujm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

MatrixXd LoadingsSpec::matrix() const {
  MatrixXd out = MatrixXd::Zero(k, p);
  for (std::size_t i = 0; i < cells.size(); ++i)
    out(cells[i].first, cells[i].second) = values(static_cast<int>(i));
  return out;
}

void LoadingsSpec::validate_shape() const {
  if (k <= 0 || p <= 0) throw InvalidInputError("LoadingsSpec: k and p must be positive");
  std::vector<int> row_hits(k, 0), col_hits(p, 0);
  for (const auto& [r, c] : cells) {
    if (r < 0 || r >= k || c < 0 || c >= p)
      throw InvalidInputError("LoadingsSpec: cell out of range");
    ++row_hits[r];
    ++col_hits[c];
  }
  for (int r = 0; r < k; ++r)
    if (row_hits[r] == 0) throw InvalidInputError("LoadingsSpec: empty row");
  for (int c = 0; c < p; ++c)
    if (col_hits[c] == 0) throw InvalidInputError("LoadingsSpec: empty column");
}

void LoadingsSpec::validate() const {
  validate_shape();
  if (static_cast<int>(cells.size()) != values.size())
    throw InvalidInputError("LoadingsSpec: cells/values size mismatch");
  for (int i = 0; i < values.size(); ++i)
    if (!(values(i) > 0.0))
      throw ConstraintViolationError("LoadingsSpec: loadings must be positive");
}

double obs_loglik(const MatrixXd& lambda, const NoiseSpec& noise,
                  const VectorXd& eta, const VectorXd& y) {
  const int k = static_cast<int>(lambda.rows());
  double ll = 0.0;
  for (int j = 0; j < k; ++j) {
    if (std::isnan(y(j))) continue;
    const double var = noise.sigma_u2(j) + noise.sigma_eps2(j);
    if (!(var > 0.0))
      throw InvalidInputError("obs_loglik: non-positive total variance");
    const double r = y(j) - lambda.row(j).dot(eta);
    ll += -0.5 * (kLog2Pi + std::log(var) + r * r / var);
  }
  return ll;
}

VectorXd simulate_observation(const MatrixXd& lambda, const NoiseSpec& noise,
                              const VectorXd& eta, const VectorXd& u, Rng& rng) {
  const int k = static_cast<int>(lambda.rows());
  VectorXd y = lambda * eta + u;
  for (int j = 0; j < k; ++j) y(j) += rng.normal(0.0, std::sqrt(noise.sigma_eps2(j)));
  return y;
}

}  // namespace oujm
