#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "oujm/ic.hpp"
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

struct Fixture {
  Dataset data;
  ModelConfig mc;
  PosteriorArchive arch;
};

Fixture longitudinal_fixture(std::vector<std::string> fixed_blocks = {}) {
  Fixture f;
  SimConfig cfg;
  cfg.n_subjects = 8;
  cfg.follow_up_days = 5.0;
  cfg.obs_per_day = 4;
  cfg.seed = 301;
  f.data = simulate_dataset(cfg);
  f.mc.pattern = default_pattern();
  f.mc.longitudinal_only = true;
  SamplerConfig sc;
  // long enough that the archived latent draws give usable proposal moments
  sc.iterations = 1500;
  sc.burn_in = 500;
  sc.seed = 302;
  sc.fixed_blocks = std::move(fixed_blocks);
  f.arch = run_mcmc(f.data, f.mc, sc);
  return f;
}

}  // namespace

TEST_CASE("importance-sampled marginals track the exact longitudinal marginal") {
  const Fixture f = longitudinal_fixture();
  const ParameterVector pa = unflatten_params(f.arch.posterior_mean(), f.mc);

  std::vector<double> is_vals, exact_vals;
  Rng rng(303);
  for (int i = 0; i < static_cast<int>(f.data.subjects.size()); ++i) {
    const LatentProposal prop = build_latent_proposal(f.arch, i);
    const int m = 120;
    std::vector<MatrixXd> draws(m);
    std::vector<double> logq(m);
    for (int j = 0; j < m; ++j) {
      draws[j] = prop.draw(rng);
      logq[j] = prop.logpdf(draws[j]);
    }
    const ConditionalLoglik cond(f.mc, f.data, i);
    const TreatmentSchedule sched{f.data.subjects[i].treatment_times,
                                  f.data.delta_a, f.data.delta_b};
    const PathDensity pd(pa, f.mc, sched, f.arch.grid_times[i]);
    is_vals.push_back(marginal_loglik_subject(pa, cond, pd, draws, logq));
    exact_vals.push_back(exact_longitudinal_marginal(pa, f.mc, f.data, i));
  }
  CHECK(testutil::correlation(is_vals, exact_vals) > 0.99);
  const double slope = testutil::ols_slope(exact_vals, is_vals);
  CHECK(slope > 0.9);
  CHECK(slope < 1.1);
}

TEST_CASE("information criteria are deterministic and reseed-stable") {
  const Fixture f = longitudinal_fixture();
  IcConfig ic;
  ic.m_draws = 50;
  ic.seed = 40;
  const IcReport a = compute_ic(f.arch, f.data, ic);
  const IcReport b = compute_ic(f.arch, f.data, ic);
  CHECK(a.waic == b.waic);
  CHECK(a.dic == b.dic);
  ic.seed = 41;
  const IcReport c = compute_ic(f.arch, f.data, ic);
  CHECK(std::abs(c.waic - a.waic) < 0.005 * std::abs(a.waic));
  CHECK(std::abs(c.dic - a.dic) < 0.005 * std::abs(a.dic));
  CHECK(a.p_waic > 0.0);
  CHECK(std::isfinite(a.lppd));
}

TEST_CASE("a frozen-parameter chain has zero effective parameters") {
  const Fixture f =
      longitudinal_fixture({"theta_rho", "loadings", "scales", "tau"});
  // every sample is the initial point, so sample-to-sample variation vanishes
  const MatrixXd all = f.arch.stacked_samples();
  CHECK((all.rowwise() - all.row(0)).cwiseAbs().maxCoeff() == 0.0);
  IcConfig ic;
  ic.seed = 42;
  const IcReport rep = compute_ic(f.arch, f.data, ic);
  CHECK(std::abs(rep.p_dic) < 1e-6);
  CHECK(std::abs(rep.p_waic) < 1e-9);
}

TEST_CASE("criteria are invariant to subject ordering") {
  const Fixture f = longitudinal_fixture();
  IcConfig ic;
  ic.seed = 43;
  const IcReport fwd = compute_ic(f.arch, f.data, ic);

  Dataset rdata = f.data;
  std::reverse(rdata.subjects.begin(), rdata.subjects.end());
  PosteriorArchive rarch = f.arch;
  std::reverse(rarch.grid_times.begin(), rarch.grid_times.end());
  for (auto& ch : rarch.chains)
    for (auto& snap : ch.latent) std::reverse(snap.begin(), snap.end());
  const IcReport rev = compute_ic(rarch, rdata, ic);

  CHECK(rev.waic == doctest::Approx(fwd.waic).epsilon(1e-10));
  CHECK(rev.dic == doctest::Approx(fwd.dic).epsilon(1e-10));
  CHECK(rev.lppd_subject.front() == doctest::Approx(fwd.lppd_subject.back()).epsilon(1e-10));
}

TEST_CASE("degenerate inputs are rejected") {
  Fixture f = longitudinal_fixture();
  IcConfig ic;
  ic.m_draws = 0;
  CHECK_THROWS_AS(compute_ic(f.arch, f.data, ic), InvalidInputError);

  // a single stored latent draw cannot define an importance proposal
  PosteriorArchive thin = f.arch;
  thin.chains[0].latent.resize(1);
  thin.chains[0].latent_iters.resize(1);
  CHECK_THROWS_AS(build_latent_proposal(thin, 0), InvalidInputError);
}
