#pragma once
#include <optional>
#include <vector>

#include "oujm/ou.hpp"

namespace oujm {

struct TreatmentSchedule {
  std::vector<double> times;  // strictly increasing
  double delta_a = 0.5;       // latent-process effect duration
  double delta_b = 0.5;       // hazard effect duration
};

struct TreatmentAmplitudes {
  VectorXd tau;               // latent-process amplitude, length p
  double tau_tilde_pre = 0.0;
  double tau_tilde_post = 0.0;
  std::optional<double> quit_time;  // absent => single tau_tilde
};

// Sum of tent heights max(0, 1 - (t - t_a)/delta) over treatments active at t.
double tent_sum(const std::vector<double>& times, double delta, double t);

// tau * tent_sum with duration delta_a.
VectorXd mu_latent(const TreatmentSchedule& schedule, const VectorXd& tau, double t);

// Scalar hazard term; when quit_time is set, tau_tilde_pre applies for
// evaluation times t < quit_time and tau_tilde_post for t >= quit_time.
double mu_hazard(const TreatmentSchedule& schedule, const TreatmentAmplitudes& amps,
                 double t);

// Closed-form integral of e^{-theta (t-u)} mu(u) du over [s, t] for the tent
// mu, clipping each treatment's active window to the interval. Integration by
// parts of the linear term gives per-treatment antiderivative
//   e^{-theta (t-u)} [ theta^{-1} (1 - (u - t_a)/delta_a)
//                      + theta^{-2} / delta_a ] tau
// evaluated between u = max(t_a, s) and u = min(t, t_a + delta_a).
VectorXd analytic_drift_integral(const OuParams& params,
                                 const TreatmentSchedule& schedule,
                                 const VectorXd& tau, double s, double t);

}  // namespace oujm
