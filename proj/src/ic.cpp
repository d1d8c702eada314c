#include "oujm/ic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oujm/hazard.hpp"
#include "oujm/parallel.hpp"
#include "oujm/treatment.hpp"

namespace oujm {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_sum_exp(const std::vector<double>& v) {
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Eigen::LLT<MatrixXd> chol_psd(MatrixXd m) {
  for (double jitter = 1e-12; jitter <= 1e-4; jitter *= 100.0) {
    Eigen::LLT<MatrixXd> llt(m + jitter * MatrixXd::Identity(m.rows(), m.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw ConstraintViolationError("covariance not positive semi-definite");
}

// Exact Gaussian marginal of the longitudinal block via a Kalman filter on
// the augmented state (latent path stacked with the subject intercepts; the
// intercepts have a static transition). Backward sampling from the filtered
// moments yields latent-path draws for the event term, so the only Monte
// Carlo noise in the per-subject log-likelihood is the event integral.
class SubjectMarginal {
 public:
  SubjectMarginal(const Dataset& data, int subject_idx, const ModelConfig& cf,
                  const std::vector<double>& grid)
      : sub_(&data.subjects.at(subject_idx)), cf_(&cf), grid_(grid),
        sched_{data.subjects.at(subject_idx).treatment_times, data.delta_a,
               data.delta_b} {
    int n = static_cast<int>(grid_.size());
    obs_at_.resize(n);
    for (std::size_t r = 0; r < sub_->obs_times.size(); ++r) {
      auto it = std::lower_bound(grid_.begin(), grid_.end(),
                                 sub_->obs_times[r] - 1e-9);
      int j = static_cast<int>(it - grid_.begin());
      if (j >= n || std::abs(grid_[j] - sub_->obs_times[r]) > 1e-6)
        throw InvalidInputError("observation time missing from the latent grid");
      for (int m = 0; m < cf_->pattern.k; ++m)
        if (!std::isnan(sub_->y(r, m))) obs_at_[j].push_back({static_cast<int>(r), m});
    }
  }

  const TreatmentSchedule& schedule() const { return sched_; }

  // Exact longitudinal log-marginal. When m_draws > 0 also fills `draws`
  // with latent-path samples from the exact smoothing distribution.
  double eval(const ParameterVector& pa, int m_draws, Rng& rng,
              std::vector<MatrixXd>* draws) const {
    const int p = cf_->pattern.p, k = cf_->pattern.k, d = p + k;
    const int n = static_cast<int>(grid_.size());
    OuParams ou = pa.ou();
    LoadingsSpec sp = cf_->pattern;
    sp.values = pa.loadings;
    MatrixXd lambda = sp.matrix();

    std::vector<MatrixXd> A(n - 1), Q(n - 1);
    for (int j = 0; j + 1 < n; ++j) {
      double dt = grid_[j + 1] - grid_[j];
      A[j] = transition_matrix(ou, dt);
      Q[j] = conditional_cov(ou, dt);
    }
    std::vector<VectorXd> c(n - 1);
    VectorXd mean0;
    if (cf_->mechanism == Mechanism::additive) {
      VectorXd mu_prev = mu_latent(sched_, pa.tau, grid_[0]);
      mean0 = mu_prev;
      for (int j = 0; j + 1 < n; ++j) {
        VectorXd mu_next = mu_latent(sched_, pa.tau, grid_[j + 1]);
        c[j] = mu_next - A[j] * mu_prev;
        mu_prev = mu_next;
      }
    } else {
      mean0 = VectorXd::Zero(p);
      for (int j = 0; j + 1 < n; ++j)
        c[j] = analytic_drift_integral(ou, sched_, pa.tau, grid_[j], grid_[j + 1]);
    }

    VectorXd m(d);
    m.head(p) = mean0;
    m.tail(k).setZero();
    MatrixXd P = MatrixXd::Zero(d, d);
    P.topLeftCorner(p, p) = ou.stationary_corr();
    P.bottomRightCorner(k, k) = pa.sigma_u2.asDiagonal();

    double ll = 0.0;
    std::vector<VectorXd> fm(n);
    std::vector<MatrixXd> fP(n);
    VectorXd h(d), Ph(d);
    for (int j = 0; j < n; ++j) {
      if (j > 0) {
        // predict: the path advances, the intercepts carry over
        VectorXd mp(d);
        mp.head(p) = A[j - 1] * m.head(p) + c[j - 1];
        mp.tail(k) = m.tail(k);
        MatrixXd Pp(d, d);
        Pp.topLeftCorner(p, p) =
            A[j - 1] * P.topLeftCorner(p, p) * A[j - 1].transpose() + Q[j - 1];
        Pp.topRightCorner(p, k) = A[j - 1] * P.topRightCorner(p, k);
        Pp.bottomLeftCorner(k, p) = Pp.topRightCorner(p, k).transpose();
        Pp.bottomRightCorner(k, k) = P.bottomRightCorner(k, k);
        m = mp;
        P = Pp;
      }
      for (auto [r, item] : obs_at_[j]) {
        h.head(p) = lambda.row(item);
        h.tail(k).setZero();
        h[p + item] = 1.0;
        Ph.noalias() = P * h;
        double S = h.dot(Ph) + pa.sigma_eps2[item];
        double resid = sub_->y(r, item) - h.dot(m);
        ll += -0.5 * (resid * resid / S + std::log(S) + kLog2Pi);
        m += Ph * (resid / S);
        P -= Ph * (Ph.transpose() / S);
        P = 0.5 * (P + P.transpose());
      }
      fm[j] = m;
      fP[j] = P;
    }
    if (m_draws <= 0 || !draws) return ll;

    // backward-sampling gains; the intercept block of the transition noise
    // is zero, so the conditional covariance needs the jittered factorization
    std::vector<MatrixXd> gain(n - 1), cond_chol(n - 1);
    std::vector<VectorXd> cond_base(n - 1);
    for (int j = 0; j + 1 < n; ++j) {
      MatrixXd F = MatrixXd::Zero(d, d);
      F.topLeftCorner(p, p) = A[j];
      F.bottomRightCorner(k, k).setIdentity();
      MatrixXd PF = fP[j] * F.transpose();
      MatrixXd Spred = F * PF;
      Spred.topLeftCorner(p, p) += Q[j];
      gain[j] = chol_psd(Spred).solve(PF.transpose()).transpose();
      MatrixXd C = fP[j] - gain[j] * PF.transpose();
      cond_chol[j] = chol_psd(0.5 * (C + C.transpose())).matrixL();
      VectorXd cfull(d);
      cfull.head(p) = c[j];
      cfull.tail(k).setZero();
      cond_base[j] = fm[j] - gain[j] * (F * fm[j] + cfull);
    }
    MatrixXd last_chol = chol_psd(fP[n - 1]).matrixL();

    draws->assign(m_draws, MatrixXd(p, n));
    VectorXd x(d), z(d);
    for (int dm = 0; dm < m_draws; ++dm) {
      for (int i = 0; i < d; ++i) z[i] = rng.normal();
      x = fm[n - 1] + last_chol.triangularView<Eigen::Lower>() * z;
      (*draws)[dm].col(n - 1) = x.head(p);
      for (int j = n - 2; j >= 0; --j) {
        for (int i = 0; i < d; ++i) z[i] = rng.normal();
        x = cond_base[j] + gain[j] * x +
            cond_chol[j].triangularView<Eigen::Lower>() * z;
        (*draws)[dm].col(j) = x.head(p);
      }
    }
    return ll;
  }

 private:
  const SubjectData* sub_;
  const ModelConfig* cf_;
  std::vector<double> grid_;
  TreatmentSchedule sched_;
  std::vector<std::vector<std::pair<int, int>>> obs_at_;
};

// longitudinal marginal (exact) + log of the event-likelihood average over
// smoothing draws of the latent path
double subject_marginal_loglik(const SubjectMarginal& marg,
                               const ParameterVector& pa, const ModelConfig& cf,
                               const SubjectData& sub,
                               const std::vector<double>& grid, int m_draws,
                               Rng& rng) {
  std::vector<MatrixXd> draws;
  double ll = marg.eval(pa, cf.longitudinal_only ? 0 : m_draws, rng, &draws);
  if (cf.longitudinal_only) return ll;
  HazardSpec spec = make_hazard_spec(pa, cf);
  TreatmentAmplitudes amps = make_amplitudes(pa, cf);
  EventHistory hist{sub.event_times, sub.censor_time, 0.0};
  EtaPath path;
  path.times = grid;
  std::vector<double> w(draws.size());
  for (std::size_t m = 0; m < draws.size(); ++m) {
    path.values.resize(draws[m].cols());
    for (int j = 0; j < draws[m].cols(); ++j) path.values[j] = draws[m].col(j);
    w[m] = event_loglik(spec, hist, path, marg.schedule(), amps, cf.grid_width);
  }
  return ll + log_sum_exp(w) - std::log(static_cast<double>(w.size()));
}

}  // namespace

MatrixXd LatentProposal::draw(Rng& rng) const {
  VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  VectorXd x = mean + chol * z;
  return Eigen::Map<const MatrixXd>(x.data(), p, n);
}

double LatentProposal::logpdf(const MatrixXd& eta) const {
  VectorXd x = Eigen::Map<const VectorXd>(eta.data(), eta.size());
  VectorXd d = x - mean;
  // solve L y = d
  VectorXd y = chol.triangularView<Eigen::Lower>().solve(d);
  return -0.5 * (y.squaredNorm() + logdet + d.size() * kLog2Pi);
}

LatentProposal build_latent_proposal(const PosteriorArchive& archive, int subject_idx) {
  LatentProposal prop;
  prop.p = archive.config.pattern.p;
  prop.n = static_cast<int>(archive.grid_times.at(subject_idx).size());
  int dim = prop.p * prop.n;
  long count = 0;
  VectorXd mean = VectorXd::Zero(dim);
  for (const ChainResult& ch : archive.chains)
    for (const auto& snap : ch.latent) {
      mean += Eigen::Map<const VectorXd>(snap[subject_idx].data(), dim);
      ++count;
    }
  if (count < 2)
    throw InvalidInputError("at least 2 latent draws required for the proposal");
  mean /= static_cast<double>(count);
  MatrixXd cov = MatrixXd::Zero(dim, dim);
  for (const ChainResult& ch : archive.chains)
    for (const auto& snap : ch.latent) {
      VectorXd d = Eigen::Map<const VectorXd>(snap[subject_idx].data(), dim) - mean;
      cov.noalias() += d * d.transpose();
    }
  cov /= static_cast<double>(count - 1);
  prop.mean = mean;
  for (double jitter = 1e-8; jitter <= 1e-4 + 1e-12; jitter *= 10.0) {
    Eigen::LLT<MatrixXd> llt(cov + jitter * MatrixXd::Identity(dim, dim));
    if (llt.info() == Eigen::Success) {
      prop.chol = llt.matrixL();
      prop.logdet = 2.0 * prop.chol.diagonal().array().log().sum();
      return prop;
    }
  }
  throw ConstraintViolationError("latent proposal covariance not positive definite");
}

double marginal_loglik_subject(const ParameterVector& params,
                               const ConditionalLoglik& cond,
                               const PathDensity& path_density,
                               const std::vector<MatrixXd>& draws,
                               const std::vector<double>& logq) {
  std::vector<double> w(draws.size());
  for (std::size_t m = 0; m < draws.size(); ++m)
    w[m] = cond(params, draws[m]) + path_density(draws[m]) - logq[m];
  return log_sum_exp(w) - std::log(static_cast<double>(draws.size()));
}

IcReport compute_ic(const PosteriorArchive& archive, const Dataset& data,
                    const IcConfig& config) {
  if (config.m_draws < 1) throw InvalidInputError("m_draws must be >= 1");
  const ModelConfig& cf = archive.config;
  MatrixXd all = archive.stacked_samples();
  if (all.rows() < 2) throw InvalidInputError("need at least 2 posterior samples");
  long step = std::max<long>(1, all.rows() / config.max_samples);
  std::vector<ParameterVector> samples;
  for (long r = step - 1; r < all.rows(); r += step)
    samples.push_back(unflatten_params(all.row(r).transpose(), cf));
  if (samples.size() < 2) throw InvalidInputError("need at least 2 posterior samples");
  ParameterVector at_mean = unflatten_params(archive.posterior_mean(), cf);

  std::size_t ns = data.subjects.size();
  int S = static_cast<int>(samples.size());
  MatrixXd ll(ns, S);          // per-subject per-sample marginal log-lik
  VectorXd ll_mean_col(ns);    // at the posterior mean

  parallel_for(ns, config.threads, [&](std::size_t i) {
    const SubjectData& sub = data.subjects[i];
    const std::vector<double>& grid = archive.grid_times[i];
    SubjectMarginal marg(data, static_cast<int>(i), cf, grid);
    // the stream restarts for every parameter sample: identical samples give
    // identical estimates (a frozen chain has zero spread) and nearby samples
    // share their event-integral noise. keyed by subject id, so the estimate
    // is invariant to subject ordering
    std::uint64_t sub_seed =
        derive_seed(config.seed, 0xD1C0 + static_cast<std::uint64_t>(sub.id));
    for (int s = 0; s < S; ++s) {
      Rng rng(sub_seed);
      ll(i, s) = subject_marginal_loglik(marg, samples[s], cf, sub, grid,
                                         config.m_draws, rng);
    }
    Rng rng(sub_seed);
    ll_mean_col[i] = subject_marginal_loglik(marg, at_mean, cf, sub, grid,
                                             config.m_draws, rng);
  });

  IcReport rep;
  rep.n_samples = S;
  rep.m_draws = config.m_draws;
  rep.seed = config.seed;
  rep.loglik_at_mean = ll_mean_col.sum();
  rep.lppd_subject.resize(ns);
  rep.p_waic_subject.resize(ns);
  double mean_total = 0.0;
  for (int s = 0; s < S; ++s) mean_total += ll.col(s).sum();
  mean_total /= S;
  rep.p_dic = 2.0 * (rep.loglik_at_mean - mean_total);
  rep.dic = -2.0 * rep.loglik_at_mean + 2.0 * rep.p_dic;
  for (std::size_t i = 0; i < ns; ++i) {
    std::vector<double> row(S);
    for (int s = 0; s < S; ++s) row[s] = ll(i, s);
    rep.lppd_subject[i] = log_sum_exp(row) - std::log(static_cast<double>(S));
    double m = ll.row(i).mean();
    rep.p_waic_subject[i] = (ll.row(i).array() - m).square().sum() / (S - 1);
    rep.lppd += rep.lppd_subject[i];
    rep.p_waic += rep.p_waic_subject[i];
  }
  rep.waic = -2.0 * rep.lppd + 2.0 * rep.p_waic;
  return rep;
}

double exact_longitudinal_marginal(const ParameterVector& params,
                                   const ModelConfig& config, const Dataset& data,
                                   int subject_idx) {
  const SubjectData& sub = data.subjects.at(subject_idx);
  TreatmentSchedule sched{sub.treatment_times, data.delta_a, data.delta_b};
  OuParams ou = params.ou();
  MatrixXd V = ou.stationary_corr();
  LoadingsSpec sp = config.pattern;
  sp.values = params.loadings;
  MatrixXd lambda = sp.matrix();
  int k = config.pattern.k;

  // stacked observed coordinates
  struct Coord {
    int row, item;
  };
  std::vector<Coord> coords;
  for (int r = 0; r < sub.y.rows(); ++r)
    for (int j = 0; j < k; ++j)
      if (!std::isnan(sub.y(r, j))) coords.push_back({r, j});
  int d = static_cast<int>(coords.size());
  if (d == 0) return 0.0;

  // latent means at observation times
  int nr = static_cast<int>(sub.obs_times.size());
  MatrixXd mu(params.theta.rows(), nr);
  for (int r = 0; r < nr; ++r) {
    if (config.mechanism == Mechanism::additive)
      mu.col(r) = mu_latent(sched, params.tau, sub.obs_times[r]);
    else
      mu.col(r) = analytic_drift_integral(ou, sched, params.tau, 0.0, sub.obs_times[r]);
  }
  // stationary cross-covariance e^{-theta |t-s|} V on the observation times
  std::vector<MatrixXd> keta(nr * nr);
  for (int a = 0; a < nr; ++a)
    for (int b = 0; b <= a; ++b) {
      MatrixXd cab = transition_matrix(ou, sub.obs_times[a] - sub.obs_times[b]) * V;
      keta[a * nr + b] = cab;
      keta[b * nr + a] = cab.transpose();
    }

  VectorXd mean(d);
  MatrixXd cov(d, d);
  for (int i = 0; i < d; ++i) {
    mean[i] = lambda.row(coords[i].item).dot(mu.col(coords[i].row));
    for (int j = 0; j <= i; ++j) {
      double c = lambda.row(coords[i].item) *
                 keta[coords[i].row * nr + coords[j].row] *
                 lambda.row(coords[j].item).transpose();
      // intercepts are shared within subject, so same-item coordinates pick
      // up a sigma_u2 block; measurement error stays on the diagonal
      if (coords[i].item == coords[j].item) c += params.sigma_u2[coords[i].item];
      if (i == j) c += params.sigma_eps2[coords[i].item];
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  VectorXd y(d);
  for (int i = 0; i < d; ++i) y[i] = sub.y(coords[i].row, coords[i].item);
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ConstraintViolationError("marginal covariance not positive definite");
  VectorXd r = llt.matrixL().solve(y - mean);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (r.squaredNorm() + logdet + d * kLog2Pi);
}

nlohmann::json IcReport::to_json() const {
  nlohmann::json j;
  j["dic"] = dic;
  j["p_dic"] = p_dic;
  j["waic"] = waic;
  j["p_waic"] = p_waic;
  j["lppd"] = lppd;
  j["loglik_at_mean"] = loglik_at_mean;
  j["lppd_subject"] = lppd_subject;
  j["p_waic_subject"] = p_waic_subject;
  j["n_samples"] = n_samples;
  j["m_draws"] = m_draws;
  j["seed"] = seed;
  return j;
}

void write_ic_report(const IcReport& report, const ModelConfig& config,
                     const std::string& path) {
  nlohmann::json j = report.to_json();
  j["model"] = config.to_json();
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace oujm
