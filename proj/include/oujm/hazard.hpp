#pragma once
#include <optional>
#include <variant>
#include <vector>

#include "oujm/ou.hpp"
#include "oujm/treatment.hpp"

namespace oujm {

enum class GVariant { k4, k1_5 };

// 1 / (1 + exp(kappa (x - 2))), kappa = 4 or 1.5.
double g_logistic(GVariant variant, double x);

struct ConstantBaseline {
  double beta0 = 0.0;  // log h0
};

// Log-normal hazard phi(log t' | mu0, sigma0) / (t' Phi((mu0 - log t')/sigma0))
// on the clock-reset gap time t', with pre/post parameters selected by
// study time vs quit_time.
struct LogNormalPrePost {
  double mu0_pre = 0.0, sigma0_pre = 1.0;
  double mu0_post = 0.0, sigma0_post = 1.0;
  double quit_time = 4.0;
};

struct HazardSpec {
  std::variant<ConstantBaseline, LogNormalPrePost> baseline;
  VectorXd beta_latent;  // length p
  struct EventHistoryTerm {
    double beta3 = 0.0;
    GVariant g = GVariant::k4;
  };
  std::optional<EventHistoryTerm> event_history;
  VectorXd gamma;  // baseline-covariate coefficients, empty by default
};

struct EventHistory {
  std::vector<double> event_times;  // strictly increasing, all <= censor_time
  double censor_time = 0.0;
  double at_risk_from = 0.0;
};

// Latent path on a time grid; lookups use the nearest grid value.
struct EtaPath {
  std::vector<double> times;  // sorted
  std::vector<VectorXd> values;

  // Nearest grid value; throws IncompletePathError if t is outside the
  // covered range by more than slack.
  const VectorXd& at(double t, double slack) const;
};

// log h0(gap_time) + beta^T eta + beta3 g(time_since_prev_event) + trt_term
// + gamma^T x. gap_time is the clock-reset time since the previous event;
// t is study time (selects pre/post baseline). With no prior event,
// time_since_prev_event is absent and the g term is dropped.
double log_hazard(const HazardSpec& spec, double t, double gap_time,
                  const VectorXd& eta_t, double trt_term,
                  std::optional<double> time_since_prev_event,
                  const VectorXd* x = nullptr);

// Midpoint-rule cumulative hazard over [t_start, t_end]. clock_origin is the
// time the baseline clock was last reset (previous event or at-risk start);
// prev_event_time, when present, feeds the g term.
double cumulative_hazard_midpoint(const HazardSpec& spec, double t_start,
                                  double t_end, double clock_origin,
                                  std::optional<double> prev_event_time,
                                  double grid_width, const EtaPath& eta_path,
                                  const TreatmentSchedule& schedule,
                                  const TreatmentAmplitudes& amps,
                                  const VectorXd* x = nullptr);

// Sum over inter-event gaps (clock reset) of delta * log h(T_r) - H(gap),
// including the final censored gap.
double event_loglik(const HazardSpec& spec, const EventHistory& history,
                    const EtaPath& eta_path, const TreatmentSchedule& schedule,
                    const TreatmentAmplitudes& amps, double grid_width,
                    const VectorXd* x = nullptr);

}  // namespace oujm
