#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "oujm/mcmc.hpp"

namespace oujm {

struct PpcConfig {
  std::vector<double> window_starts{0.0, 2.0, 5.0, 7.0};
  int max_samples = 200;  // posterior draws with stored latent paths used
  std::uint64_t seed = 1;
  int threads = 1;
};

// Step function: expected cumulative events per at-risk subject.
struct McfCurve {
  std::vector<double> times;   // jump times, increasing
  std::vector<double> values;  // value from times[i] onward
  double at(double t) const;   // 0 before the first jump
};

// Nelson-Aalen-style estimator over pooled event lists; at_risk[i] gives the
// subject's (start, stop) at-risk interval.
McfCurve mcf(const std::vector<std::vector<double>>& event_lists,
             const std::vector<std::pair<double, double>>& at_risk);

// Cell-wise sequential Poisson prediction of events in [t_start, censor],
// conditioning on the subject's observed events before t_start (clock reset
// and the event-history term use observed pre-window plus predicted
// in-window events). The latent path is the archived draw, looked up at
// cell midpoints.
std::vector<double> predict_events(const ParameterVector& params,
                                   const ModelConfig& config,
                                   const SubjectData& subject, double delta_b,
                                   const std::vector<double>& grid_times,
                                   const MatrixXd& eta, double t_start, Rng& rng);

struct PpcWindowSummary {
  double window_start = 0.0;
  std::vector<double> times;  // 3-decimal rounded, increasing
  std::vector<double> observed, median, lo, hi;  // lo/hi = 5th/95th percentile
};

std::vector<PpcWindowSummary> run_ppc(const PosteriorArchive& archive,
                                      const Dataset& data, const PpcConfig& config);

void write_ppc_summary(const std::vector<PpcWindowSummary>& summaries,
                       const std::string& path);

}  // namespace oujm
