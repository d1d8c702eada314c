#include "oujm/ppc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oujm/hazard.hpp"
#include "oujm/parallel.hpp"
#include "oujm/treatment.hpp"

namespace oujm {
namespace {

double round3(double t) { return std::round(t * 1000.0) / 1000.0; }

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double pos = q * (v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace

double McfCurve::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[it - times.begin() - 1];
}

McfCurve mcf(const std::vector<std::vector<double>>& event_lists,
             const std::vector<std::pair<double, double>>& at_risk) {
  if (event_lists.size() != at_risk.size())
    throw InvalidInputError("event lists and at-risk intervals must align");
  std::vector<double> all;
  for (const auto& ev : event_lists) all.insert(all.end(), ev.begin(), ev.end());
  std::sort(all.begin(), all.end());
  McfCurve curve;
  double cum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    double t = all[i];
    std::size_t j = i;
    while (j < all.size() && all[j] == t) ++j;
    int risk = 0;
    for (const auto& [start, stop] : at_risk)
      if (start < t && t <= stop) ++risk;
    if (risk == 0)
      throw DataInconsistencyError("event time with no subject at risk");
    cum += static_cast<double>(j - i) / risk;
    curve.times.push_back(t);
    curve.values.push_back(cum);
    i = j;
  }
  return curve;
}

std::vector<double> predict_events(const ParameterVector& params,
                                   const ModelConfig& config,
                                   const SubjectData& subject, double delta_b,
                                   const std::vector<double>& grid_times,
                                   const MatrixXd& eta, double t_start, Rng& rng) {
  if (config.longitudinal_only)
    throw InvalidInputError("no event submodel to predict from");
  double censor = subject.censor_time;
  std::vector<double> out;
  if (t_start >= censor) return out;

  HazardSpec spec = make_hazard_spec(params, config);
  TreatmentAmplitudes amps = make_amplitudes(params, config);
  TreatmentSchedule sched{subject.treatment_times, delta_b, delta_b};

  EtaPath path;
  path.times = grid_times;
  path.values.reserve(grid_times.size());
  for (long j = 0; j < eta.cols(); ++j) path.values.push_back(eta.col(j));

  double clock_origin = 0.0;
  bool has_prev = false;
  for (double e : subject.event_times)
    if (e < t_start) {
      clock_origin = e;
      has_prev = true;
    }

  double lo = t_start;
  while (lo < censor - 1e-12) {
    double hi = std::min(censor, lo + config.grid_width);
    double mid = 0.5 * (lo + hi);
    double trt = mu_hazard(sched, amps, mid);
    std::optional<double> tsp;
    if (has_prev) tsp = mid - clock_origin;
    double lh = log_hazard(spec, mid, mid - clock_origin, path.at(mid, config.grid_width),
                           trt, tsp);
    double rate = std::exp(lh) * (hi - lo);
    if (rate > 50.0)
      throw InstabilityError("discretized hazard too large for Poisson prediction");
    long count = rng.poisson(rate);
    if (count > 0) {
      std::vector<double> ts(count);
      for (long c = 0; c < count; ++c) ts[c] = rng.uniform(lo, hi);
      std::sort(ts.begin(), ts.end());
      out.insert(out.end(), ts.begin(), ts.end());
      clock_origin = ts.back();
      has_prev = true;
    }
    lo = hi;
  }
  return out;
}

std::vector<PpcWindowSummary> run_ppc(const PosteriorArchive& archive,
                                      const Dataset& data, const PpcConfig& config) {
  if (config.window_starts.empty()) throw InvalidInputError("no PPC windows given");
  const ModelConfig& cf = archive.config;
  std::size_t ns = data.subjects.size();

  // (chain, latent draw) pairs, thinned evenly across chains
  struct DrawRef {
    int chain, idx;
  };
  std::vector<DrawRef> all_draws;
  for (std::size_t c = 0; c < archive.chains.size(); ++c)
    for (std::size_t d = 0; d < archive.chains[c].latent.size(); ++d)
      all_draws.push_back({static_cast<int>(c), static_cast<int>(d)});
  if (all_draws.size() < 20)
    throw InvalidInputError("at least 20 posterior latent draws required");
  std::size_t step = std::max<std::size_t>(1, all_draws.size() / config.max_samples);
  std::vector<DrawRef> draws;
  for (std::size_t i = step - 1; i < all_draws.size(); i += step)
    draws.push_back(all_draws[i]);

  double t_max = 0.0;
  for (const SubjectData& sub : data.subjects) t_max = std::max(t_max, sub.censor_time);

  std::vector<PpcWindowSummary> result;
  for (std::size_t wi = 0; wi < config.window_starts.size(); ++wi) {
    double w = config.window_starts[wi];
    PpcWindowSummary sum;
    sum.window_start = w;

    std::vector<std::vector<double>> obs_events(ns);
    std::vector<std::pair<double, double>> at_risk(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      const SubjectData& sub = data.subjects[i];
      at_risk[i] = {w, std::max(w, sub.censor_time)};
      // rounding must not push an event outside the at-risk interval
      for (double e : sub.event_times) {
        double r = std::min(round3(e), at_risk[i].second);
        if (e > w && r > w) obs_events[i].push_back(r);
      }
    }
    McfCurve observed = mcf(obs_events, at_risk);

    // common evaluation grid: 0.1-day ticks plus observed jump times
    std::vector<double> grid;
    for (double t = w; t < t_max + 0.05; t += 0.1) grid.push_back(round3(t));
    grid.insert(grid.end(), observed.times.begin(), observed.times.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    MatrixXd curves(draws.size(), grid.size());
    parallel_for(draws.size(), config.threads, [&](std::size_t di) {
      const DrawRef& dr = draws[di];
      const ChainResult& ch = archive.chains[dr.chain];
      ParameterVector params = unflatten_params(
          ch.samples.row(ch.latent_iters[dr.idx]).transpose(), cf);
      std::vector<std::vector<double>> pred(ns);
      for (std::size_t i = 0; i < ns; ++i) {
        Rng rng(derive_seed(config.seed,
                            ((wi * 1000 + di) * 100003ULL) + i));
        std::vector<double> ev =
            predict_events(params, cf, data.subjects[i], data.delta_b,
                           archive.grid_times[i], ch.latent[dr.idx][i], w, rng);
        for (double e : ev) {
          double r = std::min(round3(e), at_risk[i].second);
          if (r > w) pred[i].push_back(r);
        }
      }
      McfCurve pc = mcf(pred, at_risk);
      for (std::size_t g = 0; g < grid.size(); ++g) curves(di, g) = pc.at(grid[g]);
    });

    sum.times = grid;
    sum.observed.resize(grid.size());
    sum.median.resize(grid.size());
    sum.lo.resize(grid.size());
    sum.hi.resize(grid.size());
    std::vector<double> col(draws.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      sum.observed[g] = observed.at(grid[g]);
      for (std::size_t di = 0; di < draws.size(); ++di) col[di] = curves(di, g);
      sum.median[g] = percentile(col, 0.5);
      sum.lo[g] = percentile(col, 0.05);
      sum.hi[g] = percentile(col, 0.95);
    }
    result.push_back(std::move(sum));
  }
  return result;
}

void write_ppc_summary(const std::vector<PpcWindowSummary>& summaries,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path);
  out << "window,time,observed,pred_median,pred_p5,pred_p95\n";
  for (const auto& s : summaries)
    for (std::size_t g = 0; g < s.times.size(); ++g)
      out << format_double(s.window_start) << "," << format_double(s.times[g]) << ","
          << format_double(s.observed[g]) << "," << format_double(s.median[g]) << ","
          << format_double(s.lo[g]) << "," << format_double(s.hi[g]) << "\n";
}

}  // namespace oujm
