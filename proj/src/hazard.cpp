#include "oujm/hazard.hpp"

#include <algorithm>
#include <cmath>

namespace oujm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kGapClamp = 1e-8;  // avoids the t' -> 0 log-normal singularity

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double log_normal_hazard(double gap, double mu0, double sigma0) {
  const double tp = std::max(gap, kGapClamp);
  const double lt = std::log(tp);
  const double z = (lt - mu0) / sigma0;
  const double log_pdf = -0.5 * (kLog2Pi + z * z) - std::log(sigma0);
  const double surv = norm_cdf((mu0 - lt) / sigma0);
  return log_pdf - lt - std::log(std::max(surv, 1e-300));
}

}  // namespace

double g_logistic(GVariant variant, double x) {
  const double kappa = variant == GVariant::k4 ? 4.0 : 1.5;
  return 1.0 / (1.0 + std::exp(kappa * (x - 2.0)));
}

const VectorXd& EtaPath::at(double t, double slack) const {
  if (times.empty()) throw IncompletePathError("EtaPath: empty path");
  if (t < times.front() - slack || t > times.back() + slack)
    throw IncompletePathError("EtaPath: time outside covered range");
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  std::size_t idx;
  if (it == times.begin()) {
    idx = 0;
  } else if (it == times.end()) {
    idx = times.size() - 1;
  } else {
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    idx = (t - times[hi - 1] <= times[hi] - t) ? hi - 1 : hi;
  }
  return values[idx];
}

double log_hazard(const HazardSpec& spec, double t, double gap_time,
                  const VectorXd& eta_t, double trt_term,
                  std::optional<double> time_since_prev_event,
                  const VectorXd* x) {
  if (gap_time < 0.0) throw OrderingError("log_hazard: negative gap time");
  double lh;
  if (const auto* cb = std::get_if<ConstantBaseline>(&spec.baseline)) {
    lh = cb->beta0;
  } else {
    const auto& ln = std::get<LogNormalPrePost>(spec.baseline);
    lh = t < ln.quit_time ? log_normal_hazard(gap_time, ln.mu0_pre, ln.sigma0_pre)
                          : log_normal_hazard(gap_time, ln.mu0_post, ln.sigma0_post);
  }
  lh += spec.beta_latent.dot(eta_t);
  if (spec.event_history && time_since_prev_event)
    lh += spec.event_history->beta3 *
          g_logistic(spec.event_history->g, *time_since_prev_event);
  lh += trt_term;
  if (x && spec.gamma.size() > 0) lh += spec.gamma.dot(*x);
  return lh;
}

double cumulative_hazard_midpoint(const HazardSpec& spec, double t_start,
                                  double t_end, double clock_origin,
                                  std::optional<double> prev_event_time,
                                  double grid_width, const EtaPath& eta_path,
                                  const TreatmentSchedule& schedule,
                                  const TreatmentAmplitudes& amps,
                                  const VectorXd* x) {
  if (t_end < t_start)
    throw OrderingError("cumulative_hazard_midpoint: t_end < t_start");
  if (!(grid_width > 0.0))
    throw InvalidInputError("cumulative_hazard_midpoint: grid_width <= 0");
  double total = 0.0;
  double lo = t_start;
  while (lo < t_end - 1e-14) {
    const double hi = std::min(lo + grid_width, t_end);
    const double mid = 0.5 * (lo + hi);
    const double trt = mu_hazard(schedule, amps, mid);
    std::optional<double> tsp;
    if (prev_event_time) tsp = mid - *prev_event_time;
    const double lh = log_hazard(spec, mid, mid - clock_origin,
                                 eta_path.at(mid, grid_width), trt, tsp, x);
    total += std::exp(lh) * (hi - lo);
    lo = hi;
  }
  return total;
}

double event_loglik(const HazardSpec& spec, const EventHistory& history,
                    const EtaPath& eta_path, const TreatmentSchedule& schedule,
                    const TreatmentAmplitudes& amps, double grid_width,
                    const VectorXd* x) {
  double ll = 0.0;
  double prev = history.at_risk_from;
  std::optional<double> prev_event;
  for (double te : history.event_times) {
    std::optional<double> tsp;
    if (prev_event) tsp = te - *prev_event;
    const double trt = mu_hazard(schedule, amps, te);
    ll += log_hazard(spec, te, te - prev, eta_path.at(te, grid_width), trt, tsp, x);
    ll -= cumulative_hazard_midpoint(spec, prev, te, prev, prev_event, grid_width,
                                     eta_path, schedule, amps, x);
    prev = te;
    prev_event = te;
  }
  ll -= cumulative_hazard_midpoint(spec, prev, history.censor_time, prev,
                                   prev_event, grid_width, eta_path, schedule,
                                   amps, x);
  return ll;
}

}  // namespace oujm
