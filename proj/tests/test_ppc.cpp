#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "oujm/ppc.hpp"
#include "oujm/simulate.hpp"

using namespace oujm;

namespace {

LoadingsSpec default_pattern() {
  LoadingsSpec sp;
  sp.k = 4;
  sp.p = 2;
  sp.cells = {{0, 0}, {1, 0}, {2, 1}, {3, 1}};
  return sp;
}

ParameterVector constant_rate_params(double beta0) {
  ParameterVector pa;
  pa.theta = MatrixXd::Identity(2, 2) * 2.0;
  pa.rho = VectorXd::Zero(1);
  pa.loadings = VectorXd::Ones(4);
  pa.sigma_lambda = 1.0;
  pa.sigma_u2 = VectorXd::Constant(4, 0.25);
  pa.sigma_eps2 = VectorXd::Constant(4, 0.25);
  pa.beta0 = beta0;
  pa.beta_latent = VectorXd::Zero(2);
  pa.tau = VectorXd::Zero(2);
  return pa;
}

SubjectData plain_subject(double censor, std::vector<double> events = {}) {
  SubjectData s;
  s.id = 1;
  s.censor_time = censor;
  s.event_times = std::move(events);
  s.y.resize(0, 4);
  return s;
}

std::vector<double> unit_grid(double censor) {
  std::vector<double> g;
  for (double t = 0.0; t <= censor + 1e-9; t += 0.25) g.push_back(t);
  return g;
}

}  // namespace

TEST_CASE("mean cumulative function on hand-built histories") {
  const std::vector<std::vector<double>> events{{1.0}, {2.0, 2.5}};
  const std::vector<std::pair<double, double>> risk{{0.0, 3.0}, {0.0, 3.0}};
  const McfCurve c = mcf(events, risk);
  REQUIRE(c.times == std::vector<double>{1.0, 2.0, 2.5});
  CHECK(c.values[0] == doctest::Approx(0.5));
  CHECK(c.values[1] == doctest::Approx(1.0));
  CHECK(c.values[2] == doctest::Approx(1.5));
  CHECK(c.at(0.5) == 0.0);
  CHECK(c.at(1.0) == doctest::Approx(0.5));
  CHECK(c.at(2.2) == doctest::Approx(1.0));
  CHECK(c.at(9.0) == doctest::Approx(1.5));

  // risk set shrinks once the first subject is censored
  const std::vector<std::pair<double, double>> staggered{{0.0, 1.5}, {0.0, 3.0}};
  const McfCurve s = mcf(events, staggered);
  CHECK(s.values[0] == doctest::Approx(0.5));           // both at risk
  CHECK(s.values[1] == doctest::Approx(0.5 + 1.0));     // only one at risk
  CHECK(s.values[2] == doctest::Approx(0.5 + 2.0));

  // tied events pool into one jump
  const McfCurve tied = mcf({{1.0, 1.0}, {}}, risk);
  REQUIRE(tied.times.size() == 1);
  CHECK(tied.values[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(mcf({{5.0}}, {{0.0, 3.0}}), DataInconsistencyError);
  CHECK_THROWS_AS(mcf({{1.0}, {2.0}}, {{0.0, 3.0}}), InvalidInputError);
}

TEST_CASE("prediction edge cases") {
  const ParameterVector pa = constant_rate_params(-0.5);
  ModelConfig mc;
  mc.pattern = default_pattern();
  const SubjectData sub = plain_subject(4.0);
  const std::vector<double> grid = unit_grid(4.0);
  const MatrixXd eta = MatrixXd::Zero(2, grid.size());
  Rng rng(1);

  // window starts at or past the censor time: nothing to predict
  CHECK(predict_events(pa, mc, sub, 0.5, grid, eta, 4.0, rng).empty());
  CHECK(predict_events(pa, mc, sub, 0.5, grid, eta, 7.0, rng).empty());

  // vanishing hazard: no events
  const ParameterVector quiet = constant_rate_params(-40.0);
  CHECK(predict_events(quiet, mc, sub, 0.5, grid, eta, 0.0, rng).empty());

  // longitudinal-only model has no event submodel
  ModelConfig lo = mc;
  lo.longitudinal_only = true;
  CHECK_THROWS_AS(predict_events(pa, lo, sub, 0.5, grid, eta, 0.0, rng),
                  InvalidInputError);
}

TEST_CASE("predicted counts under a constant hazard are Poisson") {
  const double beta0 = -0.2;
  const ParameterVector pa = constant_rate_params(beta0);
  ModelConfig mc;
  mc.pattern = default_pattern();
  const double censor = 6.0, t_start = 1.0;
  const SubjectData sub = plain_subject(censor);
  const std::vector<double> grid = unit_grid(censor);
  const MatrixXd eta = MatrixXd::Zero(2, grid.size());

  const double lambda = std::exp(beta0) * (censor - t_start);
  const int reps = 12000;
  std::vector<int> counts;
  counts.reserve(reps);
  int max_count = 0;
  for (int r = 0; r < reps; ++r) {
    Rng rng(1000 + r);
    const auto ev = predict_events(pa, mc, sub, 0.5, grid, eta, t_start, rng);
    for (double e : ev) {
      CHECK(e >= t_start);
      CHECK(e <= censor);
    }
    counts.push_back(static_cast<int>(ev.size()));
    max_count = std::max(max_count, counts.back());
  }
  // chi-square goodness of fit against Poisson(lambda), tail pooled
  const int ncell = 10;
  std::vector<double> expected(ncell, 0.0), observed(ncell, 0.0);
  double pk = std::exp(-lambda);
  double tail = 1.0;
  for (int k = 0; k < ncell - 1; ++k) {
    expected[k] = reps * pk;
    tail -= pk;
    pk *= lambda / (k + 1);
  }
  expected[ncell - 1] = reps * tail;
  for (int c : counts) observed[std::min(c, ncell - 1)] += 1.0;
  double stat = 0.0;
  for (int k = 0; k < ncell; ++k)
    stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  const double p = testutil::chi2_sf(stat, ncell - 1);
  CHECK_MESSAGE(p > 0.01, "chi2 stat=", stat, " p=", p);
}

TEST_CASE("constant baseline without history terms ignores pre-window events") {
  const ParameterVector pa = constant_rate_params(-0.4);
  ModelConfig mc;
  mc.pattern = default_pattern();
  const std::vector<double> grid = unit_grid(5.0);
  const MatrixXd eta = MatrixXd::Zero(2, grid.size());
  const SubjectData bare = plain_subject(5.0);
  const SubjectData busy = plain_subject(5.0, {0.3, 0.9, 1.7});

  Rng r1(77), r2(77);
  const auto a = predict_events(pa, mc, bare, 0.5, grid, eta, 2.0, r1);
  const auto b = predict_events(pa, mc, busy, 0.5, grid, eta, 2.0, r2);
  CHECK(a == b);
}

TEST_CASE("summary pipeline produces ordered bands on simulated data") {
  SimConfig cfg;
  cfg.n_subjects = 10;
  cfg.follow_up_days = 6.0;
  cfg.seed = 501;
  const Dataset data = simulate_dataset(cfg);
  ModelConfig mc;
  mc.pattern = default_pattern();
  SamplerConfig sc;
  sc.iterations = 80;
  sc.burn_in = 40;
  sc.seed = 502;
  const PosteriorArchive arch = run_mcmc(data, mc, sc);

  PpcConfig pc;
  pc.window_starts = {0.0, 2.0};
  pc.max_samples = 30;
  pc.seed = 503;
  const auto sums = run_ppc(arch, data, pc);
  REQUIRE(sums.size() == 2);
  for (const auto& s : sums) {
    REQUIRE(!s.times.empty());
    CHECK(std::is_sorted(s.times.begin(), s.times.end()));
    double prev_obs = -1.0;
    for (std::size_t g = 0; g < s.times.size(); ++g) {
      CHECK(s.times[g] >= s.window_start);
      CHECK(s.times[g] == doctest::Approx(std::round(s.times[g] * 1000.0) / 1000.0));
      CHECK(s.lo[g] <= s.median[g] + 1e-12);
      CHECK(s.median[g] <= s.hi[g] + 1e-12);
      CHECK(s.observed[g] >= prev_obs);
      prev_obs = s.observed[g];
    }
  }

  // identical inputs, identical summaries
  const auto again = run_ppc(arch, data, pc);
  for (std::size_t w = 0; w < sums.size(); ++w) {
    CHECK(again[w].median == sums[w].median);
    CHECK(again[w].lo == sums[w].lo);
    CHECK(again[w].hi == sums[w].hi);
  }
}

TEST_CASE("too few stored latent draws is an error") {
  SimConfig cfg;
  cfg.n_subjects = 3;
  cfg.follow_up_days = 2.0;
  cfg.seed = 504;
  const Dataset data = simulate_dataset(cfg);
  ModelConfig mc;
  mc.pattern = default_pattern();
  SamplerConfig sc;
  sc.iterations = 20;
  sc.burn_in = 10;  // only 10 stored draws
  sc.seed = 505;
  const PosteriorArchive arch = run_mcmc(data, mc, sc);
  PpcConfig pc;
  CHECK_THROWS_AS(run_ppc(arch, data, pc), InvalidInputError);
}
