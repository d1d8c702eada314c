#include "oujm/treatment.hpp"

#include <algorithm>
#include <cmath>

namespace oujm {

double tent_sum(const std::vector<double>& times, double delta, double t) {
  double s = 0.0;
  for (double ta : times) {
    if (ta > t) break;  // times sorted
    const double h = 1.0 - (t - ta) / delta;
    if (h > 0.0) s += h;
  }
  return s;
}

VectorXd mu_latent(const TreatmentSchedule& schedule, const VectorXd& tau, double t) {
  return tau * tent_sum(schedule.times, schedule.delta_a, t);
}

double mu_hazard(const TreatmentSchedule& schedule, const TreatmentAmplitudes& amps,
                 double t) {
  const double s = tent_sum(schedule.times, schedule.delta_b, t);
  if (!amps.quit_time) return amps.tau_tilde_pre * s;
  return (t < *amps.quit_time ? amps.tau_tilde_pre : amps.tau_tilde_post) * s;
}

VectorXd analytic_drift_integral(const OuParams& params,
                                 const TreatmentSchedule& schedule,
                                 const VectorXd& tau, double s, double t) {
  if (t < s) throw OrderingError("analytic_drift_integral: t < s");
  const int p = params.p();
  Eigen::FullPivLU<MatrixXd> lu(params.theta);
  if (!lu.isInvertible())
    throw InvalidInputError("analytic_drift_integral: singular theta");
  const MatrixXd theta_inv = lu.inverse();
  const MatrixXd theta_inv2 = theta_inv * theta_inv;
  const double delta = schedule.delta_a;

  VectorXd out = VectorXd::Zero(p);
  for (double ta : schedule.times) {
    if (ta >= t) break;
    if (ta + delta <= s) continue;  // effect fully decayed before interval
    const double lo = std::max(ta, s);
    const double hi = std::min(t, ta + delta);
    if (hi <= lo) continue;
    auto antideriv = [&](double u) -> VectorXd {
      const MatrixXd e = matrix_exp(MatrixXd(-params.theta * (t - u)));
      return e * (theta_inv * (1.0 - (u - ta) / delta) + theta_inv2 / delta) * tau;
    };
    out += antideriv(hi) - antideriv(lo);
  }
  return out;
}

}  // namespace oujm
