#include "oujm/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "oujm/parallel.hpp"

namespace oujm {

const char* mechanism_name(Mechanism m) {
  return m == Mechanism::additive ? "additive" : "drift";
}

const char* hazard_form_name(HazardForm h) {
  return h == HazardForm::model1 ? "model1" : "model2";
}

TrueParams setting_params(int setting, HazardForm hazard_form) {
  TrueParams tp;
  tp.loadings.k = 4;
  tp.loadings.p = 2;
  tp.loadings.cells = {{0, 0}, {1, 0}, {2, 1}, {3, 1}};
  tp.loadings.values.resize(4);
  tp.noise.sigma_u2.resize(4);
  tp.noise.sigma_eps2.resize(4);
  MatrixXd sigma = MatrixXd::Zero(2, 2);
  if (setting == 1) {
    tp.loadings.values << 0.9, 0.5, 1.0, 0.8;
    tp.noise.sigma_u2 << 0.16, 0.25, 0.64, 1.00;
    tp.noise.sigma_eps2 << 0.04, 0.36, 0.09, 0.49;
    tp.ou.theta.resize(2, 2);
    tp.ou.theta << 2.4, 1.2, 2.9, 3.6;
    sigma.diagonal() << 1.78, 1.80;
    tp.g = GVariant::k4;
  } else if (setting == 2) {
    tp.loadings.values << 0.4, 0.25, 0.5, 0.6;
    tp.noise.sigma_u2 << 0.16, 0.16, 0.25, 0.16;
    tp.noise.sigma_eps2 << 0.04, 0.01, 0.09, 0.04;
    tp.ou.theta.resize(2, 2);
    tp.ou.theta << 10.2, 5.1, 4.9, 10.0;
    sigma.diagonal() << 3.92, 3.89;
    tp.g = GVariant::k1_5;
  } else {
    throw InvalidInputError("setting_params: setting must be 1 or 2");
  }
  // Freeze rho at the value implied by the published (theta, sigma), then
  // normalize V to exact unit diagonal on the correlation scale.
  const MatrixXd v = stationary_cov(tp.ou.theta, sigma);
  const double rho = v(0, 1) / std::sqrt(v(0, 0) * v(1, 1));
  tp.ou.rho_offdiag.resize(1);
  tp.ou.rho_offdiag << rho;

  tp.tau.resize(2);
  tp.tau << 2.0, -1.0;
  tp.beta_latent.resize(2);
  tp.beta_latent << -0.5, 0.5;
  tp.tau_tilde = -0.8;
  if (hazard_form == HazardForm::model1) {
    tp.beta0 = -1.8;
    tp.beta3 = 0.0;
  } else {
    tp.beta0 = -1.5;
    tp.beta3 = 0.4;
  }
  return tp;
}

std::vector<LatentState> simulate_latent_path(const OuParams& params,
                                              const TreatmentSchedule& schedule,
                                              const VectorXd& tau,
                                              Mechanism mechanism,
                                              const std::vector<double>& grid,
                                              Rng& rng) {
  if (grid.empty() || grid.front() != 0.0)
    throw InvalidInputError("simulate_latent_path: grid must start at 0");
  const int p = params.p();
  const MatrixXd v = params.stationary_corr();
  Eigen::LLT<MatrixXd> llt_v(v);
  if (llt_v.info() != Eigen::Success)
    throw ConstraintViolationError("simulate_latent_path: V not PD");

  auto draw = [&](const VectorXd& mean, const Eigen::LLT<MatrixXd>& chol) {
    VectorXd z(p);
    for (int j = 0; j < p; ++j) z(j) = rng.normal();
    return VectorXd(mean + chol.matrixL() * z);
  };

  std::vector<LatentState> path;
  path.reserve(grid.size());
  VectorXd mean0 = VectorXd::Zero(p);
  if (mechanism == Mechanism::additive) mean0 = mu_latent(schedule, tau, 0.0);
  path.push_back({0.0, draw(mean0, llt_v)});

  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double t = grid[i];
    const LatentState& prev = path.back();
    Gaussian g =
        mechanism == Mechanism::additive
            ? cond_dist_additive(params, prev, t,
                                 mu_latent(schedule, tau, prev.time),
                                 mu_latent(schedule, tau, t))
            : cond_dist_drift(params, prev, t,
                              analytic_drift_integral(params, schedule, tau,
                                                      prev.time, t));
    if (t == prev.time) {
      path.push_back({t, g.mean});
      continue;
    }
    Eigen::LLT<MatrixXd> llt(g.cov);
    if (llt.info() != Eigen::Success) {
      // tiny-step covariance can lose PD-ness to rounding
      Eigen::LLT<MatrixXd> llt2(MatrixXd(g.cov + 1e-14 * MatrixXd::Identity(p, p)));
      path.push_back({t, draw(g.mean, llt2)});
    } else {
      path.push_back({t, draw(g.mean, llt)});
    }
  }
  return path;
}

EventHistory simulate_events(const HazardSpec& spec, const EtaPath& eta_path,
                             const TreatmentSchedule& schedule,
                             const TreatmentAmplitudes& amps, double follow_up,
                             double fine_grid_width, Rng& rng) {
  EventHistory hist;
  hist.censor_time = follow_up;
  hist.at_risk_from = 0.0;
  double clock_origin = 0.0;
  std::optional<double> prev_event;

  double lo = 0.0;
  while (lo < follow_up - 1e-14) {
    const double hi = std::min(lo + fine_grid_width, follow_up);
    const double w = hi - lo;
    const double mid = 0.5 * (lo + hi);
    std::optional<double> tsp;
    if (prev_event) tsp = mid - *prev_event;
    const double h = std::exp(log_hazard(spec, mid, mid - clock_origin,
                                         eta_path.at(mid, fine_grid_width),
                                         mu_hazard(schedule, amps, mid), tsp));
    if (h * w > 50.0)
      throw InstabilityError(
          "simulate_events: hazard mass per cell exceeds 50; use a finer grid "
          "or check parameters");
    const long n = rng.poisson(h * w);
    if (n > 0) {
      std::vector<double> cell_events(static_cast<std::size_t>(n));
      for (auto& t : cell_events) t = rng.uniform(lo, hi);
      std::sort(cell_events.begin(), cell_events.end());
      for (double t : cell_events) hist.event_times.push_back(t);
      clock_origin = cell_events.back();
      prev_event = cell_events.back();
    }
    lo = hi;
  }
  return hist;
}

Dataset simulate_dataset(const SimConfig& config) {
  if (config.n_subjects <= 0 || config.follow_up_days <= 0 ||
      config.obs_per_day <= 0 || config.trt_per_day <= 0 ||
      config.delta_a <= 0 || config.delta_b <= 0 || config.fine_grid_width <= 0)
    throw InvalidInputError("simulate_dataset: all counts/durations must be positive");
  const TrueParams tp = setting_params(config.setting, config.hazard_form);

  Dataset data;
  data.k = tp.loadings.k;
  data.p = tp.loadings.p;
  data.delta_a = config.delta_a;
  data.delta_b = config.delta_b;
  data.subjects.resize(static_cast<std::size_t>(config.n_subjects));

  const MatrixXd lambda = tp.loadings.matrix();
  const int days = static_cast<int>(std::ceil(config.follow_up_days));

  parallel_for(data.subjects.size(), config.threads, [&](std::size_t si) {
    Rng rng(derive_seed(config.seed, si));
    SubjectData s;
    s.id = static_cast<int>(si) + 1;
    s.censor_time = config.follow_up_days;

    for (int d = 0; d < days; ++d) {
      for (int j = 0; j < config.trt_per_day; ++j) {
        const double t = rng.uniform(d, d + 1.0);
        if (t < config.follow_up_days) s.treatment_times.push_back(t);
      }
      for (int j = 0; j < config.obs_per_day; ++j) {
        const double t = rng.uniform(d, d + 1.0);
        if (t < config.follow_up_days) s.obs_times.push_back(t);
      }
    }
    std::sort(s.treatment_times.begin(), s.treatment_times.end());
    std::sort(s.obs_times.begin(), s.obs_times.end());

    TreatmentSchedule schedule{s.treatment_times, config.delta_a, config.delta_b};

    // latent grid: fine cells plus the exact observation times
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(config.follow_up_days /
                                          config.fine_grid_width) +
                 s.obs_times.size() + 2);
    for (double t = 0.0; t < config.follow_up_days + 1e-12;
         t += config.fine_grid_width)
      grid.push_back(std::min(t, config.follow_up_days));
    grid.insert(grid.end(), s.obs_times.begin(), s.obs_times.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               grid.end());

    const auto path = simulate_latent_path(tp.ou, schedule, tp.tau,
                                           config.tx_mechanism, grid, rng);
    EtaPath eta;
    eta.times.reserve(path.size());
    eta.values.reserve(path.size());
    for (const auto& st : path) {
      eta.times.push_back(st.time);
      eta.values.push_back(st.value);
    }

    s.true_u.resize(data.k);
    for (int j = 0; j < data.k; ++j)
      s.true_u(j) = rng.normal(0.0, std::sqrt(tp.noise.sigma_u2(j)));
    s.y.resize(static_cast<int>(s.obs_times.size()), data.k);
    for (std::size_t i = 0; i < s.obs_times.size(); ++i)
      s.y.row(static_cast<int>(i)) =
          simulate_observation(lambda, tp.noise, eta.at(s.obs_times[i], 1e-9),
                               s.true_u, rng)
              .transpose();

    HazardSpec spec;
    spec.baseline = ConstantBaseline{tp.beta0};
    spec.beta_latent = tp.beta_latent;
    if (config.hazard_form == HazardForm::model2)
      spec.event_history = HazardSpec::EventHistoryTerm{tp.beta3, tp.g};
    TreatmentAmplitudes amps;
    amps.tau = tp.tau;
    amps.tau_tilde_pre = amps.tau_tilde_post = tp.tau_tilde;

    const EventHistory hist =
        simulate_events(spec, eta, schedule, amps, config.follow_up_days,
                        config.fine_grid_width, rng);
    s.event_times = hist.event_times;

    s.true_eta_times = eta.times;
    s.true_eta.resize(static_cast<int>(eta.times.size()), data.p);
    for (std::size_t i = 0; i < eta.times.size(); ++i)
      s.true_eta.row(static_cast<int>(i)) = eta.values[i].transpose();

    data.subjects[si] = std::move(s);
  });

  nlohmann::json truth;
  truth["lambda"] = std::vector<double>(tp.loadings.values.data(),
                                        tp.loadings.values.data() + 4);
  truth["sigma_u2"] = std::vector<double>(tp.noise.sigma_u2.data(),
                                          tp.noise.sigma_u2.data() + 4);
  truth["sigma_eps2"] = std::vector<double>(tp.noise.sigma_eps2.data(),
                                            tp.noise.sigma_eps2.data() + 4);
  truth["theta"] = {tp.ou.theta(0, 0), tp.ou.theta(0, 1), tp.ou.theta(1, 0),
                    tp.ou.theta(1, 1)};
  truth["rho"] = tp.ou.rho_offdiag(0);
  truth["tau"] = {tp.tau(0), tp.tau(1)};
  truth["beta0"] = tp.beta0;
  truth["beta_latent"] = {tp.beta_latent(0), tp.beta_latent(1)};
  truth["beta3"] = tp.beta3;
  truth["tau_tilde"] = tp.tau_tilde;

  data.manifest["generator"] = {
      {"n_subjects", config.n_subjects},
      {"follow_up_days", config.follow_up_days},
      {"obs_per_day", config.obs_per_day},
      {"trt_per_day", config.trt_per_day},
      {"setting", config.setting},
      {"mechanism", mechanism_name(config.tx_mechanism)},
      {"hazard_form", hazard_form_name(config.hazard_form)},
      {"fine_grid_width", config.fine_grid_width},
      {"seed", config.seed},
  };
  data.manifest["true_params"] = truth;
  return data;
}

}  // namespace oujm
