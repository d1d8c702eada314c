// Acceptance gate: eleven end-to-end checks covering every subsystem, one
// printed pass/fail line each. Exit status is the number of failures. All
// tolerances are pinned here rather than configurable so a green run means
// the same thing everywhere.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oujm/ic.hpp"
#include "oujm/ingest.hpp"
#include "oujm/ppc.hpp"
#include "oujm/simulate.hpp"

using namespace oujm;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

LoadingsSpec default_pattern() {
  LoadingsSpec sp;
  sp.k = 4;
  sp.p = 2;
  sp.cells = {{0, 0}, {1, 0}, {2, 1}, {3, 1}};
  return sp;
}

ModelConfig basic_config() {
  ModelConfig mc;
  mc.pattern = default_pattern();
  return mc;
}

ParameterVector truth_as_params(const TrueParams& tp) {
  ParameterVector pa;
  pa.theta = tp.ou.theta;
  pa.rho = tp.ou.rho_offdiag;
  pa.loadings = tp.loadings.values;
  pa.sigma_lambda = 1.0;
  pa.sigma_u2 = tp.noise.sigma_u2;
  pa.sigma_eps2 = tp.noise.sigma_eps2;
  pa.beta0 = tp.beta0;
  pa.beta_latent = tp.beta_latent;
  pa.beta3 = tp.beta3;
  pa.tau = tp.tau;
  pa.tau_tilde_pre = pa.tau_tilde_post = tp.tau_tilde;
  return pa;
}

int col_of(const std::vector<std::string>& names, const std::string& n) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return static_cast<int>(i);
  throw std::logic_error("missing parameter " + n);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- 1: stationary correlation of the two generating settings ------------

bool criterion1(std::string& detail) {
  // both routes: the frozen setting tables and the Lyapunov solve from the
  // published theta / sigma values
  const double sig1[2] = {1.78, 1.80}, sig2[2] = {3.92, 3.89};
  bool ok = true;
  std::ostringstream out;
  for (int s = 1; s <= 2; ++s) {
    const double target = (s == 1) ? -0.68 : -0.50;
    const TrueParams tp = setting_params(s, HazardForm::model1);
    const double rho_tab = tp.ou.stationary_corr()(0, 1);
    MatrixXd sigma = MatrixXd::Zero(2, 2);
    sigma(0, 0) = (s == 1) ? sig1[0] : sig2[0];
    sigma(1, 1) = (s == 1) ? sig1[1] : sig2[1];
    const MatrixXd v = stationary_cov(tp.ou.theta, sigma);
    const double rho_solve = v(0, 1) / std::sqrt(v(0, 0) * v(1, 1));
    ok = ok && std::abs(rho_tab - target) <= 0.005 &&
         std::abs(rho_solve - target) <= 0.005;
    out << " s" << s << "=" << fmt(rho_tab);
  }
  detail = "rho" + out.str();
  return ok;
}

// --- 2: drift integral vs 64-node Gauss-Legendre --------------------------

bool criterion2(std::string& detail) {
  const auto gl = testutil::gauss_legendre(64);
  std::mt19937_64 eng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    MatrixXd theta(2, 2);
    theta(0, 1) = -1.0 + 2.0 * unif(eng);
    theta(1, 0) = -1.0 + 2.0 * unif(eng);
    theta(0, 0) = 0.5 + 2.5 * unif(eng) + std::abs(theta(0, 1));
    theta(1, 1) = 0.5 + 2.5 * unif(eng) + std::abs(theta(1, 0));
    const OuParams ou{theta, VectorXd::Zero(1)};

    TreatmentSchedule sched;
    sched.delta_a = 0.2 + 0.8 * unif(eng);
    const int ntrt = 1 + static_cast<int>(unif(eng) * 4.0);
    double tcur = 0.5 * unif(eng);
    for (int a = 0; a < ntrt; ++a) {
      sched.times.push_back(tcur);
      tcur += 0.05 + unif(eng) * sched.delta_a;  // often overlapping tents
    }
    VectorXd tau(2);
    tau << -2.0 + 4.0 * unif(eng), -2.0 + 4.0 * unif(eng);
    const double s = 2.0 * unif(eng);          // clips tents at both ends
    const double t = s + 2.5 * unif(eng);

    // split at the clipped tent edges so each segment is smooth
    std::vector<double> brk{s, t};
    for (double ta : sched.times)
      for (double e : {ta, ta + sched.delta_a})
        if (e > s && e < t) brk.push_back(e);
    std::sort(brk.begin(), brk.end());

    VectorXd ref = VectorXd::Zero(2);
    for (std::size_t i = 0; i + 1 < brk.size(); ++i) {
      const double a = brk[i], b = brk[i + 1];
      for (int q = 0; q < 64; ++q) {
        const double u = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
        ref += 0.5 * (b - a) * gl.weights[q] *
               (testutil::series_expm(-theta * (t - u)) *
                mu_latent(sched, tau, u));
      }
    }
    const VectorXd got = analytic_drift_integral(ou, sched, tau, s, t);
    worst = std::max(worst, (got - ref).cwiseAbs().maxCoeff());
  }
  detail = "worst abs err " + fmt(worst);
  return worst <= 1e-8;
}

// --- 3: midpoint cumulative hazard converges at second order --------------

bool criterion3(std::string& detail) {
  // log h(t) = 0.8 - 0.3 t on [0.3, 3.5] via a single long tent
  HazardSpec spec;
  spec.baseline = ConstantBaseline{-0.4};
  spec.beta_latent = VectorXd::Zero(2);
  TreatmentSchedule sched;
  sched.times = {0.0};
  sched.delta_b = 4.0;
  TreatmentAmplitudes amps;
  amps.tau = VectorXd::Zero(2);
  amps.tau_tilde_pre = amps.tau_tilde_post = 1.2;
  EtaPath path;
  path.times = {0.3, 1.9, 3.5};
  path.values = {VectorXd::Zero(2), VectorXd::Zero(2), VectorXd::Zero(2)};

  const double a = 0.8, b = -0.3;
  const double exact = (std::exp(a + b * 3.5) - std::exp(a + b * 0.3)) / b;
  const double widths[4] = {0.4, 0.2, 0.1, 0.05};
  double err[4];
  for (int i = 0; i < 4; ++i) {
    const double h = cumulative_hazard_midpoint(spec, 0.3, 3.5, 0.3, {},
                                                widths[i], path, sched, amps);
    err[i] = std::abs(h - exact);
  }
  bool ok = true;
  std::ostringstream out;
  for (int i = 0; i < 3; ++i) {
    const double ratio = err[i] / err[i + 1];
    ok = ok && ratio > 3.5 && ratio < 4.5;
    out << (i ? "," : "") << fmt(ratio);
  }
  detail = "halving ratios " + out.str();
  return ok;
}

// --- 4: simulated event counts per person ---------------------------------

bool criterion4(std::string& detail) {
  struct Scenario {
    Mechanism mech;
    HazardForm form;
    double lo, hi;
    std::uint64_t seed;
  };
  // The additive mechanism suppresses the hazard more (beta' tau = -1.5 per
  // active tent vs the theta-filtered drift response) and model 1 has the
  // lower baseline, so additive/model1 is the low-count scenario.
  const Scenario scen[2] = {
      {Mechanism::drift, HazardForm::model2, 4.2, 5.2, 9000},
      {Mechanism::additive, HazardForm::model1, 1.4, 2.4, 9100},
  };
  bool ok = true;
  std::ostringstream out;
  for (const auto& sc : scen) {
    long events = 0, persons = 0;
    for (int rep = 0; rep < 20; ++rep) {
      SimConfig cfg;
      cfg.n_subjects = 100;
      cfg.setting = 2;
      cfg.tx_mechanism = sc.mech;
      cfg.hazard_form = sc.form;
      cfg.seed = sc.seed + rep;
      const Dataset d = simulate_dataset(cfg);
      for (const auto& s : d.subjects) events += s.event_times.size();
      persons += d.subjects.size();
    }
    const double mean = static_cast<double>(events) / persons;
    ok = ok && mean >= sc.lo && mean <= sc.hi;
    out << " " << mechanism_name(sc.mech) << "/" << hazard_form_name(sc.form)
        << "=" << fmt(mean);
  }
  detail = "events/person" + out.str();
  return ok;
}

// --- 5: posterior medians and interval coverage recover the truth ---------

bool criterion5(std::string& detail) {
  const TrueParams tp = setting_params(1, HazardForm::model1);
  const std::vector<std::pair<std::string, double>> targets = {
      {"tau_1", tp.tau(0)},          {"tau_2", tp.tau(1)},
      {"tau_tilde", tp.tau_tilde},   {"beta_1", tp.beta_latent(0)},
      {"beta_2", tp.beta_latent(1)}, {"rho_12", tp.ou.stationary_corr()(0, 1)},
  };
  ModelConfig mc = basic_config();
  // 4-hour hazard cells: the half-day treatment tents are unresolved by the
  // default 12-hour midpoint grid, which attenuates tau_tilde and beta at
  // this sample size
  mc.grid_width = 1.0 / 6.0;
  const auto names = param_names(mc);

  std::vector<int> within(targets.size(), 0);
  int covered = 0;
  for (int s = 0; s < 5; ++s) {
    SimConfig cfg;
    cfg.n_subjects = 50;
    cfg.seed = 500 + s;
    const Dataset data = simulate_dataset(cfg);
    SamplerConfig sc;
    sc.iterations = 4000;
    sc.burn_in = 1000;
    sc.seed = 700 + s;
    sc.latent_thin = 500;
    const PosteriorArchive arch = run_mcmc(data, mc, sc);
    const VectorXd med = arch.posterior_median();
    const VectorXd lo = arch.posterior_quantile(0.025);
    const VectorXd hi = arch.posterior_quantile(0.975);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const int c = col_of(names, targets[j].first);
      const double truth = targets[j].second;
      if (std::abs(med(c) - truth) <= 0.35) ++within[j];
      if (lo(c) <= truth && truth <= hi(c)) ++covered;
    }
  }
  bool ok = covered >= 21;  // 70% of 30 (param, seed) pairs
  std::ostringstream out;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    ok = ok && within[j] >= 4;
    out << " " << targets[j].first << "=" << within[j] << "/5";
  }
  detail = "median hits" + out.str() + " coverage " + std::to_string(covered) +
           "/30";
  return ok;
}

// --- 6: beta3 error does not grow with sample size ------------------------

bool criterion6(std::string& detail) {
  const TrueParams tp = setting_params(2, HazardForm::model2);
  ModelConfig mc = basic_config();
  mc.use_beta3 = true;
  mc.g_variant = tp.g;
  const int c = col_of(param_names(mc), "beta3");

  double med_err[2];
  const int sizes[2] = {50, 150};
  for (int n = 0; n < 2; ++n) {
    std::vector<double> errs;
    for (int s = 0; s < 3; ++s) {
      SimConfig cfg;
      cfg.n_subjects = sizes[n];
      cfg.setting = 2;
      cfg.hazard_form = HazardForm::model2;
      cfg.seed = 800 + 10 * n + s;
      const Dataset data = simulate_dataset(cfg);
      SamplerConfig sc;
      sc.iterations = 3000;
      sc.burn_in = 1000;
      sc.seed = 900 + 10 * n + s;
      sc.latent_thin = 500;
      const PosteriorArchive arch = run_mcmc(data, mc, sc);
      errs.push_back(std::abs(arch.posterior_median()(c) - tp.beta3));
    }
    med_err[n] = testutil::median_of(errs);
  }
  detail = "median |beta3 err| N=50: " + fmt(med_err[0]) +
           "  N=150: " + fmt(med_err[1]);
  return med_err[1] <= med_err[0] + 1e-9;
}

// --- 7: importance-sampled marginals track the exact longitudinal law -----

bool criterion7(std::string& detail) {
  SimConfig cfg;
  cfg.n_subjects = 40;
  cfg.follow_up_days = 6.0;
  cfg.seed = 1001;
  const Dataset data = simulate_dataset(cfg);
  ModelConfig mc = basic_config();
  mc.longitudinal_only = true;
  SamplerConfig sc;
  sc.iterations = 1500;
  sc.burn_in = 500;
  sc.seed = 1002;
  sc.latent_thin = 5;
  const PosteriorArchive arch = run_mcmc(data, mc, sc);
  const ParameterVector pa = unflatten_params(arch.posterior_mean(), mc);

  std::vector<double> is_vals, exact_vals;
  Rng rng(1003);
  for (int i = 0; i < static_cast<int>(data.subjects.size()); ++i) {
    const LatentProposal prop = build_latent_proposal(arch, i);
    const int m = 200;
    std::vector<MatrixXd> draws(m);
    std::vector<double> logq(m);
    for (int j = 0; j < m; ++j) {
      draws[j] = prop.draw(rng);
      logq[j] = prop.logpdf(draws[j]);
    }
    const ConditionalLoglik cond(mc, data, i);
    const TreatmentSchedule sched{data.subjects[i].treatment_times,
                                  data.delta_a, data.delta_b};
    const PathDensity pd(pa, mc, sched, arch.grid_times[i]);
    is_vals.push_back(marginal_loglik_subject(pa, cond, pd, draws, logq));
    exact_vals.push_back(exact_longitudinal_marginal(pa, mc, data, i));
  }
  const double corr = testutil::correlation(is_vals, exact_vals);
  const double slope = testutil::ols_slope(exact_vals, is_vals);
  detail = "corr " + fmt(corr) + " slope " + fmt(slope);
  return corr >= 0.99 && slope >= 0.9 && slope <= 1.1;
}

// --- 8: criteria are reseed-stable and rank the true mechanism ------------

bool criterion8(std::string& detail) {
  const ModelConfig mc_add = basic_config();
  ModelConfig mc_drift = basic_config();
  mc_drift.mechanism = Mechanism::drift;

  // reseed stability on one archive
  SimConfig cfg0;
  cfg0.n_subjects = 50;
  cfg0.seed = 1101;
  const Dataset data0 = simulate_dataset(cfg0);
  SamplerConfig sc0;
  sc0.iterations = 1500;
  sc0.burn_in = 500;
  sc0.seed = 1102;
  sc0.latent_thin = 5;
  const PosteriorArchive arch0 = run_mcmc(data0, mc_add, sc0);
  IcConfig icc;
  icc.max_samples = 200;
  icc.seed = 1;
  const IcReport ra = compute_ic(arch0, data0, icc);
  icc.seed = 2;
  const IcReport rb = compute_ic(arch0, data0, icc);
  const bool stable = std::abs(ra.waic - rb.waic) < 0.005 * std::abs(ra.waic) &&
                      std::abs(ra.dic - rb.dic) < 0.005 * std::abs(ra.dic);

  // additive-mechanism truth vs a drift-mechanism fit, ten replicates
  int wins = 0;
  for (int r = 0; r < 10; ++r) {
    SimConfig cfg;
    cfg.n_subjects = 50;
    cfg.seed = 1200 + r;
    const Dataset data = simulate_dataset(cfg);
    SamplerConfig sc;
    sc.iterations = 1200;
    sc.burn_in = 400;
    sc.latent_thin = 5;
    IcConfig ic;
    ic.max_samples = 160;
    ic.seed = 5;
    sc.seed = 1300 + r;
    const PosteriorArchive fit_add = run_mcmc(data, mc_add, sc);
    sc.seed = 1400 + r;
    const PosteriorArchive fit_drift = run_mcmc(data, mc_drift, sc);
    const double w_add = compute_ic(fit_add, data, ic).waic;
    const double w_drift = compute_ic(fit_drift, data, ic).waic;
    if (w_add < w_drift) ++wins;
  }
  detail = "reseed rel diff " + fmt(std::abs(ra.waic - rb.waic) /
                                    std::abs(ra.waic)) +
           ", true mechanism wins " + std::to_string(wins) + "/10";
  return stable && wins >= 7;
}

// --- 9: observed MCF stays inside the posterior predictive band -----------

bool criterion9(std::string& detail) {
  SimConfig cfg;
  cfg.n_subjects = 50;
  cfg.seed = 1501;
  const Dataset data = simulate_dataset(cfg);
  const ModelConfig mc = basic_config();
  SamplerConfig sc;
  sc.iterations = 1500;
  sc.burn_in = 500;
  sc.seed = 1502;
  sc.latent_thin = 10;
  const PosteriorArchive arch = run_mcmc(data, mc, sc);

  PpcConfig pc;
  pc.max_samples = 100;
  pc.seed = 1503;
  const auto summaries = run_ppc(arch, data, pc);

  int ok_windows = 0;
  std::ostringstream out;
  for (const auto& w : summaries) {
    bool inside = true;
    for (std::size_t i = 0; i < w.times.size(); ++i) {
      if (w.times[i] <= w.window_start + 1e-9) continue;
      if (w.times[i] > w.window_start + 1.0 + 1e-9) break;
      if (w.observed[i] < w.lo[i] - 1e-9 || w.observed[i] > w.hi[i] + 1e-9)
        inside = false;
    }
    if (inside) ++ok_windows;
    out << " t" << w.window_start << (inside ? "+" : "-");
  }
  detail = "windows" + out.str() + " (" + std::to_string(ok_windows) + "/4)";
  return ok_windows >= 3;
}

// --- 10: ingestion golden cases --------------------------------------------

bool criterion10(std::string& detail) {
  const double kHour = 1.0 / 24.0;
  auto near = [](double a, double b) { return std::abs(a - b) < 1e-12; };
  auto match = [&](const std::vector<double>& got,
                   const std::vector<double>& want) {
    if (got.size() != want.size()) return false;
    for (std::size_t i = 0; i < got.size(); ++i)
      if (!near(got[i], want[i])) return false;
    return true;
  };

  bool ok = true;
  // cigarette distribution rules
  ok = ok && match(cigarettes_to_events({2, false, 0.1, 0.2}), {0.1, 0.2});
  ok = ok && match(cigarettes_to_events({3, false, 0.1, 0.2}),
                   {0.1, 0.1 + 0.05, 0.2});
  ok = ok && match(cigarettes_to_events({1, false, 0.3, 0.3}), {0.3});
  // a pair closer than one hour collapses to the span midpoint
  ok = ok && match(cigarettes_to_events({2, false, 0.5, 0.5 + 0.5 * kHour}),
                   {0.5 + 0.25 * kHour});
  // "more than 10": one per hour across the interval
  ok = ok && match(cigarettes_to_events({0, true, 0.0, 3.0 * kHour}),
                   {0.0, kHour, 2.0 * kHour, 3.0 * kHour});
  // puff binning and placement
  ok = ok && puff_event_count(0) == 0 && puff_event_count(5) == 1 &&
       puff_event_count(15) == 1 && puff_event_count(16) == 2 &&
       puff_event_count(20) == 2 && puff_event_count(25) == 2 &&
       puff_event_count(26) == 3;
  ok = ok && match(puffs_to_events(5, 0.2, 0.2 + 2.0 * kHour), {0.2 + kHour});
  ok = ok && match(puffs_to_events(20, 0.2, 0.2 + 2.0 * kHour),
                   {0.2, 0.2 + 2.0 * kHour});
  // censoring rules; gaps use a strict 48-hour boundary
  const CensorResult c1 = apply_censoring({0.5, 1.0, 1.5, 4.0});
  ok = ok && c1.included && near(c1.censor_time, 1.5);
  const CensorResult c2 = apply_censoring({2.5, 3.0});
  ok = ok && !c2.included && c2.reason == "no_ema_first_48h";
  const CensorResult c3 = apply_censoring({});
  ok = ok && !c3.included && c3.reason == "no_completed_ema";
  const CensorResult c4 = apply_censoring({2.0, 4.0});
  ok = ok && c4.included && near(c4.censor_time, 4.0);
  if (!ok) {
    detail = "distribution/censoring rule mismatch";
    return false;
  }

  // end-to-end fixture, written twice and compared byte for byte
  const fs::path base = fs::temp_directory_path() / "oujm_accept_ingest";
  fs::remove_all(base);
  fs::create_directories(base);
  {
    std::ofstream ema(base / "ema.csv");
    ema << "subject_id,timestamp,responded,mj_time,cig_count,cig_first,"
           "cig_last,vape_puffs,vape_first,vape_last,emo_sad,emo_angry\n"
        << "1,2026-01-01T00:00:00,1,,,,,,,,3,4\n"
        << "1,2026-01-01T06:00:00,1,,2,2026-01-01T01:00:00,"
           "2026-01-01T04:00:00,,,,2,5\n"
        << "1,2026-01-01T12:00:00,1,,3,2026-01-01T07:00:00,"
           "2026-01-01T09:00:00,,,,1,1\n"
        << "1,2026-01-01T18:00:00,1,,,,,20,2026-01-01T13:00:00,"
           "2026-01-01T16:00:00,4,2\n"
        << "1,2026-01-02T00:00:00,1,2026-01-01T20:00:00,,,,5,"
           "2026-01-01T19:00:00,2026-01-01T23:00:00,2,3\n"
        << "1,2026-01-02T06:00:00,1,,>10,2026-01-02T01:00:00,"
           "2026-01-02T03:30:00,,,,5,5\n"
        << "2,2026-01-03T00:00:00,0,,,,,,,,,\n"
        << "2,2026-01-06T00:00:00,1,,,,,,,,1,1\n"
        << "3,2026-01-04T00:00:00,0,,,,,,,,,\n";
    std::ofstream trt(base / "trt.csv");
    trt << "subject_id,timestamp\n"
        << "1,2026-01-01T03:00:00\n"
        << "1,2026-01-03T00:00:00\n";  // past censoring, still recorded
  }
  const IngestResult res = build_dataset((base / "ema.csv").string(),
                                         (base / "trt.csv").string());
  ok = res.data.subjects.size() == 1 && res.exclusions.size() == 2;
  if (ok) {
    const SubjectData& s = res.data.subjects[0];
    // pooled substance events in hours: cig pair 1,4; cig triple 7,8,9;
    // vape endpoints 13,16; mj 20; vape midpoint 21; hourly cigs 25,26,27
    const std::vector<double> want_h = {1,  4,  7,  8,  9,  13,
                                        16, 20, 21, 25, 26, 27};
    ok = ok && s.event_times.size() == want_h.size();
    for (std::size_t i = 0; i < want_h.size() && ok; ++i)
      ok = near(s.event_times[i], want_h[i] * kHour);
    ok = ok && near(s.censor_time, 30.0 * kHour);
    ok = ok && s.treatment_times.size() == 1;  // post-censoring prompt dropped
    ok = ok && s.obs_times.size() == 6;
  }
  if (!ok) {
    detail = "fixture events/censoring mismatch";
    fs::remove_all(base);
    return false;
  }

  const fs::path out_a = base / "out_a", out_b = base / "out_b";
  write_ingest_output(res, out_a.string());
  write_ingest_output(res, out_b.string());
  for (const auto& entry : fs::directory_iterator(out_a)) {
    const auto name = entry.path().filename();
    if (slurp(entry.path()) != slurp(out_b / name)) {
      detail = "rewrite differs: " + name.string();
      fs::remove_all(base);
      return false;
    }
  }
  const std::string excl = slurp(out_a / "exclusions.csv");
  ok = excl == "subject_id,reason\n2,no_ema_first_48h\n3,no_completed_ema\n";
  fs::remove_all(base);
  detail = ok ? "events, censoring, exclusions, rewrite all exact"
              : "exclusions.csv mismatch";
  return ok;
}

// --- 11: sampler vs analytic posteriors ------------------------------------

bool prior_recovery(std::string& out) {
  Dataset data;
  data.k = 2;
  data.p = 2;
  SubjectData s;
  s.id = 1;
  s.censor_time = 0.0;
  s.y.resize(0, 2);
  data.subjects = {s};

  ModelConfig mc;
  mc.pattern.k = 2;
  mc.pattern.p = 2;
  mc.pattern.cells = {{0, 0}, {1, 1}};

  ParameterVector init;
  init.theta = MatrixXd::Identity(2, 2) * 2.0;
  init.rho = VectorXd::Zero(1);
  init.loadings = VectorXd::Ones(2);
  init.sigma_u2 = VectorXd::Constant(2, 0.25);
  init.sigma_eps2 = VectorXd::Constant(2, 0.25);
  init.beta_latent = VectorXd::Zero(2);
  init.tau = VectorXd::Zero(2);

  SamplerConfig sc;
  sc.iterations = 11000;
  sc.burn_in = 2000;
  sc.seed = 2001;
  sc.init = init;
  const PosteriorArchive arch = run_mcmc(data, mc, sc);

  const auto names = param_names(mc);
  const MatrixXd all = arch.stacked_samples();
  double worst = 0.0;
  for (const char* name : {"tau_1", "tau_2", "beta0", "tau_tilde"}) {
    std::vector<double> draws(all.rows());
    const int c = col_of(names, name);
    for (long i = 0; i < all.rows(); ++i) draws[i] = all(i, c);
    worst = std::max(worst, testutil::ks_statistic(draws, [](double x) {
              return testutil::normal_cdf(x, 0.0, 5.0);
            }));
  }
  out += " prior ks " + fmt(worst);
  return worst < 0.05;
}

bool quadrature_check(std::string& out) {
  SimConfig cfg;
  cfg.n_subjects = 3;
  cfg.follow_up_days = 4.0;
  cfg.seed = 2029;
  const Dataset data = simulate_dataset(cfg);
  const ModelConfig mc = basic_config();
  const ParameterVector truth = truth_as_params(setting_params(1, HazardForm::model1));

  SamplerConfig sc;
  sc.iterations = 11000;
  sc.burn_in = 1000;
  sc.seed = 2030;
  sc.init = truth;
  sc.sample_latent = false;
  sc.latent_init_truth = true;
  sc.fixed_blocks = {"theta_rho", "loadings", "scales", "hazard"};
  sc.fixed_params = {"tau_2"};
  const PosteriorArchive arch = run_mcmc(data, mc, sc);

  LatentGrid latent;
  latent.times = arch.grid_times;
  latent.values = arch.chains[0].latent[0];

  const int ngrid = 1601;
  const double lo = -6.0, hi = 10.0;
  std::vector<double> logp(ngrid);
  double best = -1e300;
  for (int i = 0; i < ngrid; ++i) {
    ParameterVector pa = truth;
    pa.tau(0) = lo + (hi - lo) * i / (ngrid - 1);
    logp[i] = log_posterior(pa, latent, data, mc);
    best = std::max(best, logp[i]);
  }
  std::vector<double> cdf(ngrid, 0.0);
  double total = 0.0;
  for (int i = 1; i < ngrid; ++i) {
    total += 0.5 * (std::exp(logp[i] - best) + std::exp(logp[i - 1] - best));
    cdf[i] = total;
  }
  for (int i = 0; i < ngrid; ++i) cdf[i] /= total;
  auto cdf_at = [&](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double pos = (x - lo) / (hi - lo) * (ngrid - 1);
    const int i = std::min(static_cast<int>(pos), ngrid - 2);
    return cdf[i] + (pos - i) * (cdf[i + 1] - cdf[i]);
  };

  const int c = col_of(param_names(mc), "tau_1");
  const MatrixXd all = arch.stacked_samples();
  std::vector<double> draws(all.rows());
  for (long i = 0; i < all.rows(); ++i) draws[i] = all(i, c);
  const double ks = testutil::ks_statistic(draws, cdf_at);
  out += ", quadrature ks " + fmt(ks);
  return ks < 0.05;
}

bool beta0_grid_check(std::string& out) {
  SimConfig cfg;
  cfg.n_subjects = 10;
  cfg.follow_up_days = 7.0;
  cfg.seed = 2101;
  const Dataset data = simulate_dataset(cfg);
  const ModelConfig mc = basic_config();
  const ParameterVector truth = truth_as_params(setting_params(1, HazardForm::model1));

  // known latent path and every parameter but beta0 held at the truth
  SamplerConfig sc;
  sc.iterations = 12000;
  sc.burn_in = 2000;
  sc.seed = 2102;
  sc.init = truth;
  sc.sample_latent = false;
  sc.latent_init_truth = true;
  sc.fixed_blocks = {"theta_rho", "loadings", "scales", "tau"};
  sc.fixed_params = {"beta_1", "beta_2", "tau_tilde"};
  const PosteriorArchive arch = run_mcmc(data, mc, sc);

  LatentGrid latent;
  latent.times = arch.grid_times;
  latent.values = arch.chains[0].latent[0];

  const int ngrid = 2001;
  const double lo = -6.0, hi = 2.0;
  double best = -1e300;
  std::vector<double> xs(ngrid), logp(ngrid);
  for (int i = 0; i < ngrid; ++i) {
    xs[i] = lo + (hi - lo) * i / (ngrid - 1);
    ParameterVector pa = truth;
    pa.beta0 = xs[i];
    logp[i] = log_posterior(pa, latent, data, mc);
    best = std::max(best, logp[i]);
  }
  double w_sum = 0.0, m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < ngrid; ++i) {
    const double w = std::exp(logp[i] - best) * ((i == 0 || i == ngrid - 1) ? 0.5 : 1.0);
    w_sum += w;
    m1 += w * xs[i];
    m2 += w * xs[i] * xs[i];
  }
  const double grid_mean = m1 / w_sum;
  const double grid_sd = std::sqrt(m2 / w_sum - grid_mean * grid_mean);

  const int c = col_of(param_names(mc), "beta0");
  const MatrixXd all = arch.stacked_samples();
  std::vector<double> draws(all.rows());
  for (long i = 0; i < all.rows(); ++i) draws[i] = all(i, c);
  const double chain_mean = testutil::mean_of(draws);
  const double chain_sd = std::sqrt(testutil::var_of(draws));
  out += ", beta0 mean err " + fmt(std::abs(chain_mean - grid_mean)) +
         " sd rel err " + fmt(std::abs(chain_sd - grid_sd) / grid_sd);
  return std::abs(chain_mean - grid_mean) <= 0.02 &&
         std::abs(chain_sd - grid_sd) <= 0.10 * grid_sd;
}

bool criterion11(std::string& detail) {
  std::string out;
  const bool a = prior_recovery(out);
  const bool b = quadrature_check(out);
  const bool c = beta0_grid_check(out);
  detail = out;
  return a && b && c;
}

struct Criterion {
  int id;
  const char* what;
  double budget_s;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> checks = {
      {1, "stationary correlation of both settings", 1.0, criterion1},
      {2, "drift integral vs Gauss-Legendre", 10.0, criterion2},
      {3, "midpoint hazard second-order convergence", 10.0, criterion3},
      {4, "simulated event rates per scenario", 300.0, criterion4},
      {5, "posterior recovery across five seeds", 7200.0, criterion5},
      {6, "beta3 error vs sample size", 10800.0, criterion6},
      {7, "marginal likelihood vs closed form", 600.0, criterion7},
      {8, "information criteria stability and ranking", 3600.0, criterion8},
      {9, "posterior predictive band coverage", 900.0, criterion9},
      {10, "ingestion golden cases", 1.0, criterion10},
      {11, "analytic posterior checks", 600.0, criterion11},
  };

  int failures = 0;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (secs > c.budget_s) {
      pass = false;
      detail += " [over " + fmt(c.budget_s) + "s budget]";
    }
    if (!pass) ++failures;
    std::printf("criterion %2d  %-45s %s  %7.1fs  %s\n", c.id, c.what,
                pass ? "PASS" : "FAIL", secs, detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
