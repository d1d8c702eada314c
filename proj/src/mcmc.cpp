#include "oujm/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oujm/parallel.hpp"
#include "oujm/rng.hpp"
#include "oujm/treatment.hpp"

namespace oujm {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kGapFloor = 1e-8;
constexpr double kRhoBound = 0.999999;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kLatentSweeps = 5;

double log_phi(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

double log_Phi(double z) {
  double v = 0.5 * std::erfc(-z / std::sqrt(2.0));
  if (v > 0.0) return std::log(v);
  // deep tail, leading asymptotic term
  return log_phi(z) - std::log(-z);
}

double normal_lpdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return log_phi(z) - std::log(sd);
}

double half_cauchy_lpdf(double x, double scale) {
  if (x <= 0.0) return kNegInf;
  double r = x / scale;
  return std::log(2.0 / M_PI) - std::log(scale) - std::log1p(r * r);
}

// ---- parameter layout on the unconstrained scale -------------------------

struct Layout {
  int p = 0, k = 0, nlam = 0, nrho = 0;
  int itheta = 0, irho = 0, ilam = 0, isiglam = 0, isigu = 0, isige = 0;
  int ihaz = -1, nhaz0 = 0;   // baseline parameters
  int ibeta = -1;             // beta_latent
  int ibeta3 = -1;
  int itt = -1, ntt = 0;      // tau_tilde(s)
  int itau = 0;
  int dim = 0;
};

Layout make_layout(const ModelConfig& cf) {
  Layout L;
  L.p = cf.pattern.p;
  L.k = cf.pattern.k;
  L.nlam = static_cast<int>(cf.pattern.cells.size());
  L.nrho = L.p * (L.p - 1) / 2;
  int at = 0;
  L.itheta = at; at += L.p * L.p;
  L.irho = at; at += L.nrho;
  L.ilam = at; at += L.nlam;
  L.isiglam = at; at += 1;
  L.isigu = at; at += L.k;
  L.isige = at; at += L.k;
  if (!cf.longitudinal_only) {
    L.ihaz = at;
    L.nhaz0 = cf.baseline == BaselineKind::constant ? 1 : 4;
    at += L.nhaz0;
    L.ibeta = at; at += L.p;
    if (cf.use_beta3) { L.ibeta3 = at; at += 1; }
    L.itt = at;
    L.ntt = cf.split_tau_tilde ? 2 : 1;
    at += L.ntt;
  }
  L.itau = at; at += L.p;
  L.dim = at;
  return L;
}

void validate_config(const ModelConfig& cf) {
  cf.pattern.validate_shape();
  if ((cf.baseline == BaselineKind::lognormal_prepost || cf.split_tau_tilde) &&
      !cf.quit_time)
    throw InvalidInputError("quit_time required by this model configuration");
  if (cf.grid_width <= 0.0) throw InvalidInputError("grid_width must be > 0");
}

ParameterVector constrain(const VectorXd& z, const ModelConfig& cf, const Layout& L) {
  ParameterVector pa;
  pa.theta = MatrixXd(L.p, L.p);
  for (int r = 0; r < L.p; ++r)
    for (int c = 0; c < L.p; ++c) pa.theta(r, c) = z[L.itheta + r * L.p + c];
  pa.rho = VectorXd(L.nrho);
  for (int i = 0; i < L.nrho; ++i) pa.rho[i] = kRhoBound * std::tanh(z[L.irho + i]);
  pa.loadings = z.segment(L.ilam, L.nlam).array().exp();
  pa.sigma_lambda = std::exp(z[L.isiglam]);
  pa.sigma_u2 = z.segment(L.isigu, L.k).array().exp().square();
  pa.sigma_eps2 = z.segment(L.isige, L.k).array().exp().square();
  if (!cf.longitudinal_only) {
    if (cf.baseline == BaselineKind::constant) {
      pa.beta0 = z[L.ihaz];
    } else {
      pa.mu0_pre = z[L.ihaz];
      pa.sigma0_pre = std::exp(z[L.ihaz + 1]);
      pa.mu0_post = z[L.ihaz + 2];
      pa.sigma0_post = std::exp(z[L.ihaz + 3]);
    }
    pa.beta_latent = z.segment(L.ibeta, L.p);
    if (cf.use_beta3) pa.beta3 = z[L.ibeta3];
    pa.tau_tilde_pre = z[L.itt];
    pa.tau_tilde_post = cf.split_tau_tilde ? z[L.itt + 1] : z[L.itt];
  } else {
    pa.beta_latent = VectorXd::Zero(L.p);
  }
  pa.tau = z.segment(L.itau, L.p);
  return pa;
}

VectorXd unconstrain(const ParameterVector& pa, const ModelConfig& cf, const Layout& L) {
  VectorXd z = VectorXd::Zero(L.dim);
  for (int r = 0; r < L.p; ++r)
    for (int c = 0; c < L.p; ++c) z[L.itheta + r * L.p + c] = pa.theta(r, c);
  for (int i = 0; i < L.nrho; ++i)
    z[L.irho + i] = std::atanh(std::clamp(pa.rho[i] / kRhoBound, -1.0 + 1e-12, 1.0 - 1e-12));
  z.segment(L.ilam, L.nlam) = pa.loadings.array().log();
  z[L.isiglam] = std::log(pa.sigma_lambda);
  z.segment(L.isigu, L.k) = (0.5 * pa.sigma_u2.array().log());
  z.segment(L.isige, L.k) = (0.5 * pa.sigma_eps2.array().log());
  if (!cf.longitudinal_only) {
    if (cf.baseline == BaselineKind::constant) {
      z[L.ihaz] = pa.beta0;
    } else {
      z[L.ihaz] = pa.mu0_pre;
      z[L.ihaz + 1] = std::log(pa.sigma0_pre);
      z[L.ihaz + 2] = pa.mu0_post;
      z[L.ihaz + 3] = std::log(pa.sigma0_post);
    }
    z.segment(L.ibeta, L.p) = pa.beta_latent;
    if (cf.use_beta3) z[L.ibeta3] = pa.beta3;
    z[L.itt] = pa.tau_tilde_pre;
    if (cf.split_tau_tilde) z[L.itt + 1] = pa.tau_tilde_post;
  }
  z.segment(L.itau, L.p) = pa.tau;
  return z;
}

// log |dx/dz| for the transformed coordinates
double log_jacobian(const VectorXd& z, const ModelConfig& cf, const Layout& L) {
  double j = 0.0;
  for (int i = 0; i < L.nrho; ++i) {
    double t = std::tanh(z[L.irho + i]);
    j += std::log(kRhoBound) + std::log1p(-t * t);
  }
  j += z.segment(L.ilam, L.nlam).sum();
  j += z[L.isiglam];
  j += z.segment(L.isigu, L.k).sum();
  j += z.segment(L.isige, L.k).sum();
  if (!cf.longitudinal_only && cf.baseline == BaselineKind::lognormal_prepost)
    j += z[L.ihaz + 1] + z[L.ihaz + 3];
  return j;
}

// ---- static per-subject structure -----------------------------------------

struct HazPoint {
  double time = 0.0;   // study time
  double gap = 0.0;    // clock-reset time
  double width = 0.0;  // cell width (0 for an event)
  double tent_pre = 0.0, tent_post = 0.0;
  double g_val = 0.0;
  bool has_g = false;
  int grid_idx = -1;
  // cells anchor the latent value to their boundary grid points (average of
  // the two); an event-time value therefore always feeds the neighboring
  // cumulative-hazard terms, which keeps the event likelihood from rewarding
  // isolated spikes at event coordinates
  int grid_idx2 = -1;
};

struct SubjectPoints {
  std::vector<double> grid;
  std::vector<int> obs_grid_idx;
  std::vector<HazPoint> cells, events;
  std::vector<std::vector<int>> cells_at, events_at, obs_at;
};

int grid_index(const std::vector<double>& grid, double t) {
  auto it = std::lower_bound(grid.begin(), grid.end(), t);
  int j = static_cast<int>(it - grid.begin());
  if (j == static_cast<int>(grid.size())) return j - 1;
  if (j > 0 && t - grid[j - 1] < grid[j] - t) return j - 1;
  return j;
}

void fill_tent(HazPoint& hp, const SubjectData& sub, const ModelConfig& cf,
               double delta_b, bool split) {
  double s = tent_sum(sub.treatment_times, delta_b, hp.time);
  if (split && hp.time >= *cf.quit_time) hp.tent_post = s;
  else hp.tent_pre = s;
}

SubjectPoints build_points(const SubjectData& sub, const Dataset& data,
                           const ModelConfig& cf) {
  SubjectPoints sp;
  std::vector<double> raw;
  raw.push_back(0.0);
  raw.insert(raw.end(), sub.obs_times.begin(), sub.obs_times.end());
  bool split = cf.split_tau_tilde && cf.quit_time.has_value();
  if (!cf.longitudinal_only) {
    raw.insert(raw.end(), sub.event_times.begin(), sub.event_times.end());
    std::vector<double> bounds;
    bounds.push_back(0.0);
    bounds.insert(bounds.end(), sub.event_times.begin(), sub.event_times.end());
    bounds.push_back(sub.censor_time);
    for (std::size_t g = 0; g + 1 < bounds.size(); ++g) {
      double g0 = bounds[g], g1 = bounds[g + 1];
      if (g1 - g0 < 1e-12) continue;
      int ncell = std::max(1, static_cast<int>(std::ceil((g1 - g0) / cf.grid_width - 1e-9)));
      for (int c = 0; c < ncell; ++c) {
        double lo = g0 + c * cf.grid_width;
        double hi = std::min(g1, lo + cf.grid_width);
        HazPoint hp;
        hp.time = 0.5 * (lo + hi);
        hp.width = hi - lo;
        hp.gap = hp.time - g0;
        hp.has_g = cf.use_beta3 && g > 0;
        hp.g_val = hp.has_g ? hp.gap : 0.0;
        fill_tent(hp, sub, cf, data.delta_b, split);
        sp.cells.push_back(hp);
        raw.push_back(hp.time);
      }
    }
    for (std::size_t r = 0; r < sub.event_times.size(); ++r) {
      HazPoint hp;
      hp.time = sub.event_times[r];
      hp.gap = hp.time - (r == 0 ? 0.0 : sub.event_times[r - 1]);
      hp.has_g = cf.use_beta3 && r > 0;
      hp.g_val = hp.has_g ? hp.gap : 0.0;
      fill_tent(hp, sub, cf, data.delta_b, split);
      sp.events.push_back(hp);
    }
  }
  std::sort(raw.begin(), raw.end());
  for (double t : raw)
    if (sp.grid.empty() || t - sp.grid.back() > 1e-12) sp.grid.push_back(t);
  int n = static_cast<int>(sp.grid.size());
  sp.cells_at.assign(n, {});
  sp.events_at.assign(n, {});
  sp.obs_at.assign(n, {});
  for (std::size_t i = 0; i < sp.cells.size(); ++i) {
    sp.cells[i].grid_idx = grid_index(sp.grid, sp.cells[i].time);
    sp.cells_at[sp.cells[i].grid_idx].push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < sp.events.size(); ++i) {
    sp.events[i].grid_idx = grid_index(sp.grid, sp.events[i].time);
    sp.events_at[sp.events[i].grid_idx].push_back(static_cast<int>(i));
  }
  sp.obs_grid_idx.resize(sub.obs_times.size());
  for (std::size_t r = 0; r < sub.obs_times.size(); ++r) {
    sp.obs_grid_idx[r] = grid_index(sp.grid, sub.obs_times[r]);
    sp.obs_at[sp.obs_grid_idx[r]].push_back(static_cast<int>(r));
  }
  return sp;
}

double point_base(const ParameterVector& pa, const ModelConfig& cf, const HazPoint& hp) {
  double b;
  if (cf.baseline == BaselineKind::constant) {
    b = pa.beta0;
  } else {
    bool post = hp.time >= *cf.quit_time;
    double mu0 = post ? pa.mu0_post : pa.mu0_pre;
    double s0 = post ? pa.sigma0_post : pa.sigma0_pre;
    double tp = std::max(hp.gap, kGapFloor);
    double zz = (std::log(tp) - mu0) / s0;
    b = log_phi(zz) - std::log(s0) - std::log(tp) - log_Phi(-zz);
  }
  if (hp.has_g) b += pa.beta3 * g_logistic(cf.g_variant, hp.g_val);
  b += pa.tau_tilde_pre * hp.tent_pre + pa.tau_tilde_post * hp.tent_post;
  return b;
}

// ---- latent-path caches (depend on theta/rho and on tau) ------------------

struct PathCache {
  MatrixXd V, Vinv;
  double logdetV = 0.0;
  std::vector<MatrixXd> A, Qinv;
  std::vector<Eigen::LLT<MatrixXd>> cholQ;
  std::vector<double> logdetQ;
  VectorXd mean0;
  std::vector<VectorXd> c;
};

Eigen::LLT<MatrixXd> chol_jittered(MatrixXd m) {
  double jit = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<MatrixXd> llt(m + jit * MatrixXd::Identity(m.rows(), m.cols()));
    if (llt.info() == Eigen::Success) return llt;
    jit = jit == 0.0 ? 1e-14 : jit * 100.0;
  }
  throw ConstraintViolationError("covariance not positive definite");
}

void rebuild_structure(PathCache& pc, const OuParams& ou,
                       const std::vector<double>& grid) {
  int n = static_cast<int>(grid.size());
  pc.V = ou.stationary_corr();
  Eigen::LLT<MatrixXd> lltV = chol_jittered(pc.V);
  pc.Vinv = lltV.solve(MatrixXd::Identity(ou.p(), ou.p()));
  pc.logdetV = 2.0 * lltV.matrixL().toDenseMatrix().diagonal().array().log().sum();
  pc.A.resize(n - 1);
  pc.Qinv.resize(n - 1);
  pc.cholQ.resize(n - 1);
  pc.logdetQ.resize(n - 1);
  for (int j = 0; j + 1 < n; ++j) {
    double dt = grid[j + 1] - grid[j];
    pc.A[j] = transition_matrix(ou, dt);
    MatrixXd q = conditional_cov(ou, dt);
    pc.cholQ[j] = chol_jittered(q);
    pc.Qinv[j] = pc.cholQ[j].solve(MatrixXd::Identity(ou.p(), ou.p()));
    pc.logdetQ[j] = 2.0 * pc.cholQ[j].matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
}

void rebuild_offsets(PathCache& pc, const ParameterVector& pa, const ModelConfig& cf,
                     const TreatmentSchedule& schedule,
                     const std::vector<double>& grid) {
  int n = static_cast<int>(grid.size());
  pc.c.resize(n - 1);
  if (cf.mechanism == Mechanism::additive) {
    VectorXd mu_prev = mu_latent(schedule, pa.tau, grid[0]);
    pc.mean0 = mu_prev;
    for (int j = 0; j + 1 < n; ++j) {
      VectorXd mu_next = mu_latent(schedule, pa.tau, grid[j + 1]);
      pc.c[j] = mu_next - pc.A[j] * mu_prev;
      mu_prev = mu_next;
    }
  } else {
    pc.mean0 = VectorXd::Zero(pa.theta.rows());
    OuParams ou = pa.ou();
    for (int j = 0; j + 1 < n; ++j)
      pc.c[j] = analytic_drift_integral(ou, schedule, pa.tau, grid[j], grid[j + 1]);
  }
}

double gauss_lpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& prec,
                  double logdet) {
  VectorXd d = x - mean;
  return -0.5 * (d.dot(prec * d) + logdet + d.size() * kLog2Pi);
}

struct SubjectWS {
  const SubjectData* sub = nullptr;
  TreatmentSchedule schedule;
  SubjectPoints pts;
  MatrixXd eta;  // p x n_grid
  VectorXd u;    // subject random intercepts, sampled alongside the path
  PathCache cache;
  std::vector<double> cell_base, event_base;
};

double path_ll(const SubjectWS& ws) {
  const PathCache& pc = ws.cache;
  double ll = gauss_lpdf(ws.eta.col(0), pc.mean0, pc.Vinv, pc.logdetV);
  for (std::size_t j = 0; j + 1 < ws.pts.grid.size(); ++j) {
    VectorXd mean = pc.A[j] * ws.eta.col(j) + pc.c[j];
    ll += gauss_lpdf(ws.eta.col(j + 1), mean, pc.Qinv[j], pc.logdetQ[j]);
  }
  return ll;
}

double path_ll_with(const SubjectWS& ws, const PathCache& pc) {
  double ll = gauss_lpdf(ws.eta.col(0), pc.mean0, pc.Vinv, pc.logdetV);
  for (std::size_t j = 0; j + 1 < ws.pts.grid.size(); ++j) {
    VectorXd mean = pc.A[j] * ws.eta.col(j) + pc.c[j];
    ll += gauss_lpdf(ws.eta.col(j + 1), mean, pc.Qinv[j], pc.logdetQ[j]);
  }
  return ll;
}

// Observation density given the path with the subject intercepts integrated
// out. Per item the covariance over that item's observed rows is
// sigma_u2 * 11' + sigma_eps2 * I; Sherman-Morrison keeps this O(n).
double obs_ll_parts(const SubjectData& sub, const SubjectPoints& pts,
                    const MatrixXd& eta, const MatrixXd& lambda,
                    const NoiseSpec& noise) {
  const int k = static_cast<int>(lambda.rows());
  double ll = 0.0;
  for (int m = 0; m < k; ++m) {
    const double se = noise.sigma_eps2[m], su = noise.sigma_u2[m];
    double n = 0.0, sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < sub.obs_times.size(); ++r) {
      const double y = sub.y(static_cast<int>(r), m);
      if (std::isnan(y)) continue;
      const double resid =
          y - lambda.row(m).dot(eta.col(pts.obs_grid_idx[r]));
      n += 1.0;
      sum += resid;
      sq += resid * resid;
    }
    if (n == 0.0) continue;
    const double denom = se + n * su;
    ll += -0.5 * (sq / se - su * sum * sum / (se * denom) +
                  (n - 1.0) * std::log(se) + std::log(denom) + n * kLog2Pi);
  }
  return ll;
}

double obs_ll(const SubjectWS& ws, const MatrixXd& lambda, const NoiseSpec& noise) {
  return obs_ll_parts(*ws.sub, ws.pts, ws.eta, lambda, noise);
}

// Sampler-internal observation term: conditional on the subject intercepts
// (which persist across a subject's observations) plus their prior. Collapsing
// the intercepts into per-observation noise leaves residual within-subject
// correlation that the path absorbs, dragging theta and rho off target.
double obs_ll_cond(const SubjectWS& ws, const MatrixXd& lambda,
                   const NoiseSpec& noise) {
  const SubjectData& sub = *ws.sub;
  const int k = static_cast<int>(lambda.rows());
  double ll = 0.0;
  for (std::size_t r = 0; r < sub.obs_times.size(); ++r) {
    VectorXd fit = lambda * ws.eta.col(ws.pts.obs_grid_idx[r]);
    for (int m = 0; m < k; ++m) {
      double y = sub.y(static_cast<int>(r), m);
      if (std::isnan(y)) continue;
      ll += normal_lpdf(y - ws.u[m], fit[m], std::sqrt(noise.sigma_eps2[m]));
    }
  }
  for (int m = 0; m < k; ++m)
    ll += normal_lpdf(ws.u[m], 0.0, std::sqrt(noise.sigma_u2[m]));
  return ll;
}

// conjugate normal update of the subject intercepts given path and scales
void intercept_gibbs(SubjectWS& ws, const ParameterVector& pa,
                     const MatrixXd& lambda, Rng& rng) {
  const SubjectData& sub = *ws.sub;
  const int k = static_cast<int>(lambda.rows());
  for (int m = 0; m < k; ++m) {
    double prec = 1.0 / pa.sigma_u2[m];
    double lin = 0.0;
    for (std::size_t r = 0; r < sub.obs_times.size(); ++r) {
      double y = sub.y(static_cast<int>(r), m);
      if (std::isnan(y)) continue;
      double fit = lambda.row(m).dot(ws.eta.col(ws.pts.obs_grid_idx[r]));
      prec += 1.0 / pa.sigma_eps2[m];
      lin += (y - fit) / pa.sigma_eps2[m];
    }
    ws.u[m] = lin / prec + rng.normal() / std::sqrt(prec);
  }
}

double event_ll_cached(const SubjectWS& ws, const VectorXd& beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < ws.pts.events.size(); ++i)
    ll += ws.event_base[i] + beta.dot(ws.eta.col(ws.pts.events[i].grid_idx));
  for (std::size_t i = 0; i < ws.pts.cells.size(); ++i)
    ll -= ws.pts.cells[i].width *
          std::exp(ws.cell_base[i] + beta.dot(ws.eta.col(ws.pts.cells[i].grid_idx)));
  return ll;
}

double event_ll_parts(const SubjectPoints& pts, const MatrixXd& eta,
                      const ParameterVector& pa, const ModelConfig& cf) {
  double ll = 0.0;
  for (const HazPoint& hp : pts.events)
    ll += point_base(pa, cf, hp) + pa.beta_latent.dot(eta.col(hp.grid_idx));
  for (const HazPoint& hp : pts.cells)
    ll -= hp.width *
          std::exp(point_base(pa, cf, hp) + pa.beta_latent.dot(eta.col(hp.grid_idx)));
  return ll;
}

double event_ll_fresh(const SubjectWS& ws, const ParameterVector& pa,
                      const ModelConfig& cf) {
  return event_ll_parts(ws.pts, ws.eta, pa, cf);
}

void rebuild_bases(SubjectWS& ws, const ParameterVector& pa, const ModelConfig& cf) {
  ws.cell_base.resize(ws.pts.cells.size());
  ws.event_base.resize(ws.pts.events.size());
  for (std::size_t i = 0; i < ws.pts.cells.size(); ++i)
    ws.cell_base[i] = point_base(pa, cf, ws.pts.cells[i]);
  for (std::size_t i = 0; i < ws.pts.events.size(); ++i)
    ws.event_base[i] = point_base(pa, cf, ws.pts.events[i]);
}

// One systematic sweep of conditional-Gaussian site updates. The proposal is
// the exact full conditional under the path and observation terms, so the
// acceptance ratio involves only the local hazard terms. Returns accepted
// proposals (equals n_grid when there is no event submodel).
int latent_sweep(SubjectWS& ws, const ParameterVector& pa, const MatrixXd& lambda,
                 Rng& rng, bool reverse) {
  const PathCache& pc = ws.cache;
  int n = static_cast<int>(ws.pts.grid.size());
  int p = static_cast<int>(ws.eta.rows());
  int accepted = 0;
  MatrixXd P(p, p);
  VectorXd b(p), zvec(p);
  for (int s = 0; s < n; ++s) {
    int j = reverse ? n - 1 - s : s;
    if (j == 0) {
      P = pc.Vinv;
      b = pc.Vinv * pc.mean0;
    } else {
      P = pc.Qinv[j - 1];
      b.noalias() = pc.Qinv[j - 1] * (pc.A[j - 1] * ws.eta.col(j - 1) + pc.c[j - 1]);
    }
    if (j + 1 < n) {
      MatrixXd AtQ = pc.A[j].transpose() * pc.Qinv[j];
      P.noalias() += AtQ * pc.A[j];
      b.noalias() += AtQ * (ws.eta.col(j + 1) - pc.c[j]);
    }
    for (int r : ws.pts.obs_at[j]) {
      for (int m = 0; m < ws.sub->y.cols(); ++m) {
        double y = ws.sub->y(r, m);
        if (std::isnan(y)) continue;
        double v = pa.sigma_eps2[m];
        VectorXd lrow = lambda.row(m).transpose();
        P.noalias() += (lrow * lrow.transpose()) / v;
        b.noalias() += lrow * ((y - ws.u[m]) / v);
      }
    }
    Eigen::LLT<MatrixXd> llt = chol_jittered(P);
    VectorXd mean = llt.solve(b);
    for (int d = 0; d < p; ++d) zvec[d] = rng.normal();
    VectorXd prop = mean + llt.matrixU().solve(zvec);
    double delta = static_cast<double>(ws.pts.events_at[j].size()) *
                   pa.beta_latent.dot(prop - ws.eta.col(j));
    for (int ci : ws.pts.cells_at[j]) {
      const HazPoint& hp = ws.pts.cells[ci];
      double base = ws.cell_base[ci];
      delta -= hp.width * (std::exp(base + pa.beta_latent.dot(prop)) -
                           std::exp(base + pa.beta_latent.dot(ws.eta.col(j))));
    }
    if (delta >= 0.0 || std::log(rng.uniform()) < delta) {
      ws.eta.col(j) = prop;
      ++accepted;
    }
  }
  return accepted;
}

// ---- adaptive random-walk blocks ------------------------------------------

struct Block {
  std::string name;
  std::vector<int> idx;
  double log_scale = 0.0;
  VectorXd mean;
  MatrixXd m2, chol;
  long n_adapt = 0;
  bool use_emp = false;
  long proposals = 0, accepts = 0;

  void init() {
    int d = static_cast<int>(idx.size());
    log_scale = std::log(0.1 / std::sqrt(static_cast<double>(d)));
    mean = VectorXd::Zero(d);
    m2 = MatrixXd::Zero(d, d);
    chol = MatrixXd::Identity(d, d);
  }

  VectorXd propose(const VectorXd& z, Rng& rng) const {
    int d = static_cast<int>(idx.size());
    VectorXd step(d);
    for (int i = 0; i < d; ++i) step[i] = rng.normal();
    step = std::exp(log_scale) * (chol * step);
    VectorXd zp = z;
    for (int i = 0; i < d; ++i) zp[idx[i]] += step[i];
    return zp;
  }

  void adapt(const VectorXd& z, double alpha, long iter) {
    int d = static_cast<int>(idx.size());
    log_scale += std::pow(static_cast<double>(iter + 1), -0.6) * (alpha - 0.25);
    VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = z[idx[i]];
    ++n_adapt;
    VectorXd dlt = x - mean;
    mean += dlt / static_cast<double>(n_adapt);
    m2.noalias() += dlt * (x - mean).transpose();
    if (n_adapt > 10 * d && n_adapt % 50 == 0) {
      MatrixXd cov = m2 / static_cast<double>(n_adapt - 1);
      cov += 1e-10 * MatrixXd::Identity(d, d);
      Eigen::LLT<MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        chol = (2.38 / std::sqrt(static_cast<double>(d))) *
               llt.matrixL().toDenseMatrix();
        if (!use_emp) {
          use_emp = true;
          log_scale = 0.0;
        }
      }
    }
  }
};

enum class LikPart { path, obs, event };

struct ChainState {
  VectorXd z;
  ParameterVector params;
  double cur_prior = 0.0, cur_path = 0.0, cur_obs = 0.0, cur_event = 0.0;
};

MatrixXd init_eta(const SubjectData& sub, const SubjectPoints& pts,
                  const ParameterVector& pa, const LoadingsSpec& pattern,
                  bool from_truth) {
  int p = pattern.p;
  int n = static_cast<int>(pts.grid.size());
  MatrixXd eta = MatrixXd::Zero(p, n);
  if (from_truth && !sub.true_eta_times.empty()) {
    for (int j = 0; j < n; ++j) {
      auto it = std::lower_bound(sub.true_eta_times.begin(), sub.true_eta_times.end(),
                                 pts.grid[j]);
      int r = static_cast<int>(it - sub.true_eta_times.begin());
      if (r == static_cast<int>(sub.true_eta_times.size())) --r;
      if (r > 0 && pts.grid[j] - sub.true_eta_times[r - 1] <
                       sub.true_eta_times[r] - pts.grid[j])
        --r;
      eta.col(j) = sub.true_eta.row(r).transpose();
    }
    return eta;
  }
  if (sub.obs_times.empty()) return eta;
  LoadingsSpec sp = pattern;
  sp.values = pa.loadings;
  MatrixXd lambda = sp.matrix();
  for (int j = 0; j < n; ++j) {
    auto it = std::lower_bound(sub.obs_times.begin(), sub.obs_times.end(), pts.grid[j]);
    int r = static_cast<int>(it - sub.obs_times.begin());
    if (r == static_cast<int>(sub.obs_times.size())) --r;
    if (r > 0 && pts.grid[j] - sub.obs_times[r - 1] < sub.obs_times[r] - pts.grid[j]) --r;
    MatrixXd P = MatrixXd::Identity(p, p);
    VectorXd b = VectorXd::Zero(p);
    for (int m = 0; m < sub.y.cols(); ++m) {
      double y = sub.y(r, m);
      if (std::isnan(y)) continue;
      double v = pa.sigma_u2[m] + pa.sigma_eps2[m];
      VectorXd lr = lambda.row(m).transpose();
      P.noalias() += (lr * lr.transpose()) / v;
      b.noalias() += lr * (y / v);
    }
    eta.col(j) = P.ldlt().solve(b);
  }
  return eta;
}

}  // namespace

// ---- public config / parameter plumbing ------------------------------------

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["mechanism"] = mechanism == Mechanism::additive ? "additive" : "drift";
  j["baseline"] = baseline == BaselineKind::constant ? "constant" : "lognormal_prepost";
  j["use_beta3"] = use_beta3;
  j["g_variant"] = g_variant == GVariant::k4 ? "k4" : "k1_5";
  j["split_tau_tilde"] = split_tau_tilde;
  if (quit_time) j["quit_time"] = *quit_time;
  j["longitudinal_only"] = longitudinal_only;
  j["grid_width"] = grid_width;
  j["pattern"] = {{"k", pattern.k}, {"p", pattern.p}};
  nlohmann::json cells = nlohmann::json::array();
  for (auto& c : pattern.cells) cells.push_back({c.first, c.second});
  j["pattern"]["cells"] = cells;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cf;
  cf.mechanism = j.at("mechanism") == "drift" ? Mechanism::drift : Mechanism::additive;
  cf.baseline = j.at("baseline") == "lognormal_prepost" ? BaselineKind::lognormal_prepost
                                                        : BaselineKind::constant;
  cf.use_beta3 = j.at("use_beta3");
  cf.g_variant = j.at("g_variant") == "k1_5" ? GVariant::k1_5 : GVariant::k4;
  cf.split_tau_tilde = j.at("split_tau_tilde");
  if (j.contains("quit_time")) cf.quit_time = j.at("quit_time").get<double>();
  cf.longitudinal_only = j.at("longitudinal_only");
  cf.grid_width = j.at("grid_width");
  cf.pattern.k = j.at("pattern").at("k");
  cf.pattern.p = j.at("pattern").at("p");
  for (auto& c : j.at("pattern").at("cells"))
    cf.pattern.cells.emplace_back(c[0].get<int>(), c[1].get<int>());
  return cf;
}

nlohmann::json SamplerConfig::to_json() const {
  nlohmann::json j;
  j["iterations"] = iterations;
  j["burn_in"] = burn_in;
  j["chains"] = chains;
  j["seed"] = seed;
  j["threads"] = threads;
  j["latent_thin"] = latent_thin;
  j["sample_latent"] = sample_latent;
  j["latent_init_truth"] = latent_init_truth;
  j["fixed_blocks"] = fixed_blocks;
  j["fixed_params"] = fixed_params;
  return j;
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  SamplerConfig sc;
  sc.iterations = j.at("iterations");
  sc.burn_in = j.at("burn_in");
  sc.chains = j.at("chains");
  sc.seed = j.at("seed");
  sc.threads = j.at("threads");
  sc.latent_thin = j.at("latent_thin");
  sc.sample_latent = j.at("sample_latent");
  sc.latent_init_truth = j.at("latent_init_truth");
  sc.fixed_blocks = j.at("fixed_blocks").get<std::vector<std::string>>();
  if (j.contains("fixed_params"))
    sc.fixed_params = j.at("fixed_params").get<std::vector<std::string>>();
  return sc;
}

HazardSpec make_hazard_spec(const ParameterVector& params, const ModelConfig& config) {
  HazardSpec spec;
  if (config.baseline == BaselineKind::constant) {
    spec.baseline = ConstantBaseline{params.beta0};
  } else {
    spec.baseline = LogNormalPrePost{params.mu0_pre, params.sigma0_pre,
                                     params.mu0_post, params.sigma0_post,
                                     config.quit_time.value_or(0.0)};
  }
  spec.beta_latent = params.beta_latent;
  if (config.use_beta3)
    spec.event_history = HazardSpec::EventHistoryTerm{params.beta3, config.g_variant};
  return spec;
}

TreatmentAmplitudes make_amplitudes(const ParameterVector& params,
                                    const ModelConfig& config) {
  TreatmentAmplitudes amps;
  amps.tau = params.tau;
  amps.tau_tilde_pre = params.tau_tilde_pre;
  amps.tau_tilde_post = params.tau_tilde_post;
  if (config.split_tau_tilde) amps.quit_time = config.quit_time;
  return amps;
}

std::vector<std::string> param_names(const ModelConfig& config) {
  Layout L = make_layout(config);
  std::vector<std::string> names(L.dim);
  char buf[32];
  for (int r = 0; r < L.p; ++r)
    for (int c = 0; c < L.p; ++c) {
      std::snprintf(buf, sizeof(buf), "theta_%d%d", r + 1, c + 1);
      names[L.itheta + r * L.p + c] = buf;
    }
  int at = 0;
  for (int r = 0; r < L.p; ++r)
    for (int c = r + 1; c < L.p; ++c) {
      std::snprintf(buf, sizeof(buf), "rho_%d%d", r + 1, c + 1);
      names[L.irho + at++] = buf;
    }
  for (int i = 0; i < L.nlam; ++i) {
    std::snprintf(buf, sizeof(buf), "lambda_%d", i + 1);
    names[L.ilam + i] = buf;
  }
  names[L.isiglam] = "sigma_lambda";
  for (int i = 0; i < L.k; ++i) {
    std::snprintf(buf, sizeof(buf), "sigma_u_%d", i + 1);
    names[L.isigu + i] = buf;
  }
  for (int i = 0; i < L.k; ++i) {
    std::snprintf(buf, sizeof(buf), "sigma_eps_%d", i + 1);
    names[L.isige + i] = buf;
  }
  if (!config.longitudinal_only) {
    if (config.baseline == BaselineKind::constant) {
      names[L.ihaz] = "beta0";
    } else {
      names[L.ihaz] = "mu0_pre";
      names[L.ihaz + 1] = "sigma0_pre";
      names[L.ihaz + 2] = "mu0_post";
      names[L.ihaz + 3] = "sigma0_post";
    }
    for (int i = 0; i < L.p; ++i) {
      std::snprintf(buf, sizeof(buf), "beta_%d", i + 1);
      names[L.ibeta + i] = buf;
    }
    if (config.use_beta3) names[L.ibeta3] = "beta3";
    if (config.split_tau_tilde) {
      names[L.itt] = "tau_tilde_pre";
      names[L.itt + 1] = "tau_tilde_post";
    } else {
      names[L.itt] = "tau_tilde";
    }
  }
  for (int i = 0; i < L.p; ++i) {
    std::snprintf(buf, sizeof(buf), "tau_%d", i + 1);
    names[L.itau + i] = buf;
  }
  return names;
}

VectorXd flatten_params(const ParameterVector& pa, const ModelConfig& config) {
  Layout L = make_layout(config);
  VectorXd v = VectorXd::Zero(L.dim);
  for (int r = 0; r < L.p; ++r)
    for (int c = 0; c < L.p; ++c) v[L.itheta + r * L.p + c] = pa.theta(r, c);
  v.segment(L.irho, L.nrho) = pa.rho;
  v.segment(L.ilam, L.nlam) = pa.loadings;
  v[L.isiglam] = pa.sigma_lambda;
  v.segment(L.isigu, L.k) = pa.sigma_u2.array().sqrt();
  v.segment(L.isige, L.k) = pa.sigma_eps2.array().sqrt();
  if (!config.longitudinal_only) {
    if (config.baseline == BaselineKind::constant) {
      v[L.ihaz] = pa.beta0;
    } else {
      v[L.ihaz] = pa.mu0_pre;
      v[L.ihaz + 1] = pa.sigma0_pre;
      v[L.ihaz + 2] = pa.mu0_post;
      v[L.ihaz + 3] = pa.sigma0_post;
    }
    v.segment(L.ibeta, L.p) = pa.beta_latent;
    if (config.use_beta3) v[L.ibeta3] = pa.beta3;
    v[L.itt] = pa.tau_tilde_pre;
    if (config.split_tau_tilde) v[L.itt + 1] = pa.tau_tilde_post;
  }
  v.segment(L.itau, L.p) = pa.tau;
  return v;
}

ParameterVector unflatten_params(const VectorXd& v, const ModelConfig& config) {
  Layout L = make_layout(config);
  if (v.size() != L.dim) throw InvalidInputError("parameter vector length mismatch");
  ParameterVector pa;
  pa.theta = MatrixXd(L.p, L.p);
  for (int r = 0; r < L.p; ++r)
    for (int c = 0; c < L.p; ++c) pa.theta(r, c) = v[L.itheta + r * L.p + c];
  pa.rho = v.segment(L.irho, L.nrho);
  pa.loadings = v.segment(L.ilam, L.nlam);
  pa.sigma_lambda = v[L.isiglam];
  pa.sigma_u2 = v.segment(L.isigu, L.k).array().square();
  pa.sigma_eps2 = v.segment(L.isige, L.k).array().square();
  if (!config.longitudinal_only) {
    if (config.baseline == BaselineKind::constant) {
      pa.beta0 = v[L.ihaz];
    } else {
      pa.mu0_pre = v[L.ihaz];
      pa.sigma0_pre = v[L.ihaz + 1];
      pa.mu0_post = v[L.ihaz + 2];
      pa.sigma0_post = v[L.ihaz + 3];
    }
    pa.beta_latent = v.segment(L.ibeta, L.p);
    if (config.use_beta3) pa.beta3 = v[L.ibeta3];
    pa.tau_tilde_pre = v[L.itt];
    pa.tau_tilde_post = config.split_tau_tilde ? v[L.itt + 1] : v[L.itt];
  } else {
    pa.beta_latent = VectorXd::Zero(L.p);
  }
  pa.tau = v.segment(L.itau, L.p);
  return pa;
}

double log_prior(const ParameterVector& pa, const ModelConfig& config) {
  if (!pa.ou().feasible()) return kNegInf;
  double lp = 0.0;
  for (int r = 0; r < pa.theta.rows(); ++r)
    for (int c = 0; c < pa.theta.cols(); ++c) lp += normal_lpdf(pa.theta(r, c), 0.0, 10.0);
  for (int i = 0; i < pa.rho.size(); ++i) {
    if (std::abs(pa.rho[i]) >= kRhoBound) return kNegInf;
    lp += -std::log(2.0 * kRhoBound);
  }
  if (pa.sigma_lambda <= 0.0) return kNegInf;
  for (int i = 0; i < pa.loadings.size(); ++i) {
    if (pa.loadings[i] <= 0.0) return kNegInf;
    // half-normal around 1, truncated at 0
    lp += normal_lpdf(pa.loadings[i], 1.0, pa.sigma_lambda) -
          log_Phi(1.0 / pa.sigma_lambda);
  }
  lp += half_cauchy_lpdf(pa.sigma_lambda, 5.0);
  for (int i = 0; i < pa.sigma_u2.size(); ++i) {
    if (pa.sigma_u2[i] <= 0.0 || pa.sigma_eps2[i] <= 0.0) return kNegInf;
    lp += half_cauchy_lpdf(std::sqrt(pa.sigma_u2[i]), 5.0);
    lp += half_cauchy_lpdf(std::sqrt(pa.sigma_eps2[i]), 5.0);
  }
  if (!config.longitudinal_only) {
    if (config.baseline == BaselineKind::constant) {
      lp += normal_lpdf(pa.beta0, 0.0, 5.0);
    } else {
      lp += normal_lpdf(pa.mu0_pre, 0.0, 5.0) + normal_lpdf(pa.mu0_post, 0.0, 5.0);
      lp += half_cauchy_lpdf(pa.sigma0_pre, 5.0) + half_cauchy_lpdf(pa.sigma0_post, 5.0);
    }
    for (int i = 0; i < pa.beta_latent.size(); ++i)
      lp += normal_lpdf(pa.beta_latent[i], 0.0, 5.0);
    if (config.use_beta3) lp += normal_lpdf(pa.beta3, 0.0, 5.0);
    lp += normal_lpdf(pa.tau_tilde_pre, 0.0, 5.0);
    if (config.split_tau_tilde) lp += normal_lpdf(pa.tau_tilde_post, 0.0, 5.0);
  }
  for (int i = 0; i < pa.tau.size(); ++i) lp += normal_lpdf(pa.tau[i], 0.0, 5.0);
  return lp;
}

LatentGrid make_latent_grid(const Dataset& data, const ModelConfig& config) {
  validate_config(config);
  LatentGrid g;
  for (const SubjectData& sub : data.subjects) {
    SubjectPoints sp = build_points(sub, data, config);
    g.times.push_back(sp.grid);
    g.values.push_back(MatrixXd::Zero(config.pattern.p, sp.grid.size()));
  }
  return g;
}

double latent_path_logdensity(const ParameterVector& params, const ModelConfig& config,
                              const TreatmentSchedule& schedule,
                              const std::vector<double>& grid, const MatrixXd& eta) {
  PathCache pc;
  rebuild_structure(pc, params.ou(), grid);
  rebuild_offsets(pc, params, config, schedule, grid);
  double ll = gauss_lpdf(eta.col(0), pc.mean0, pc.Vinv, pc.logdetV);
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    VectorXd mean = pc.A[j] * eta.col(j) + pc.c[j];
    ll += gauss_lpdf(eta.col(j + 1), mean, pc.Qinv[j], pc.logdetQ[j]);
  }
  return ll;
}

double subject_conditional_loglik(const ParameterVector& params,
                                  const ModelConfig& config, const Dataset& data,
                                  int subject_idx, const std::vector<double>& grid,
                                  const MatrixXd& eta) {
  const SubjectData& sub = data.subjects.at(subject_idx);
  SubjectWS ws;
  ws.sub = &sub;
  ws.pts = build_points(sub, data, config);
  if (ws.pts.grid.size() != grid.size())
    throw InvalidInputError("latent grid does not match the model grid");
  ws.eta = eta;
  LoadingsSpec sp = config.pattern;
  sp.values = params.loadings;
  NoiseSpec noise{params.sigma_u2, params.sigma_eps2};
  double ll = obs_ll(ws, sp.matrix(), noise);
  if (!config.longitudinal_only) ll += event_ll_fresh(ws, params, config);
  return ll;
}

struct PathDensity::Impl {
  PathCache cache;
  std::size_t n = 0;
};

PathDensity::PathDensity(const ParameterVector& params, const ModelConfig& config,
                         const TreatmentSchedule& schedule,
                         const std::vector<double>& grid) {
  auto impl = std::make_shared<Impl>();
  rebuild_structure(impl->cache, params.ou(), grid);
  rebuild_offsets(impl->cache, params, config, schedule, grid);
  impl->n = grid.size();
  impl_ = impl;
}

double PathDensity::operator()(const MatrixXd& eta) const {
  const PathCache& pc = impl_->cache;
  if (static_cast<std::size_t>(eta.cols()) != impl_->n)
    throw InvalidInputError("latent path does not match the grid");
  double ll = gauss_lpdf(eta.col(0), pc.mean0, pc.Vinv, pc.logdetV);
  for (std::size_t j = 0; j + 1 < impl_->n; ++j) {
    VectorXd mean = pc.A[j] * eta.col(j) + pc.c[j];
    ll += gauss_lpdf(eta.col(j + 1), mean, pc.Qinv[j], pc.logdetQ[j]);
  }
  return ll;
}

struct ConditionalLoglik::Impl {
  const SubjectData* sub = nullptr;
  ModelConfig config;
  SubjectPoints pts;
};

ConditionalLoglik::ConditionalLoglik(const ModelConfig& config, const Dataset& data,
                                     int subject_idx) {
  auto impl = std::make_shared<Impl>();
  impl->sub = &data.subjects.at(subject_idx);
  impl->config = config;
  impl->pts = build_points(*impl->sub, data, config);
  impl_ = impl;
}

const std::vector<double>& ConditionalLoglik::grid() const { return impl_->pts.grid; }

double ConditionalLoglik::operator()(const ParameterVector& params,
                                     const MatrixXd& eta) const {
  if (eta.cols() != static_cast<long>(impl_->pts.grid.size()))
    throw InvalidInputError("latent path does not match the grid");
  LoadingsSpec sp = impl_->config.pattern;
  sp.values = params.loadings;
  NoiseSpec noise{params.sigma_u2, params.sigma_eps2};
  double ll = obs_ll_parts(*impl_->sub, impl_->pts, eta, sp.matrix(), noise);
  if (!impl_->config.longitudinal_only)
    ll += event_ll_parts(impl_->pts, eta, params, impl_->config);
  return ll;
}

double log_posterior(const ParameterVector& params, const LatentGrid& latent,
                     const Dataset& data, const ModelConfig& config) {
  validate_config(config);
  double lp = log_prior(params, config);
  if (!std::isfinite(lp)) return kNegInf;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    TreatmentSchedule sched{data.subjects[i].treatment_times, data.delta_a, data.delta_b};
    lp += latent_path_logdensity(params, config, sched, latent.times[i],
                                 latent.values[i]);
    lp += subject_conditional_loglik(params, config, data, static_cast<int>(i),
                                     latent.times[i], latent.values[i]);
  }
  return lp;
}

// ---- the sampler -----------------------------------------------------------

namespace {

struct LikTotals {
  double path = 0.0, obs = 0.0, event = 0.0;
};

LikTotals recompute_totals(std::vector<SubjectWS>& wss, const ParameterVector& pa,
                           const ModelConfig& cf, const MatrixXd& lambda,
                           int threads) {
  std::vector<double> pv(wss.size()), ov(wss.size()), ev(wss.size());
  NoiseSpec noise{pa.sigma_u2, pa.sigma_eps2};
  parallel_for(wss.size(), threads, [&](std::size_t i) {
    pv[i] = path_ll(wss[i]);
    ov[i] = obs_ll_cond(wss[i], lambda, noise);
    ev[i] = cf.longitudinal_only ? 0.0 : event_ll_cached(wss[i], pa.beta_latent);
  });
  LikTotals t;
  for (std::size_t i = 0; i < wss.size(); ++i) {
    t.path += pv[i];
    t.obs += ov[i];
    t.event += ev[i];
  }
  return t;
}

ChainResult run_chain(const Dataset& data, const ModelConfig& cf,
                      const SamplerConfig& sc, const Layout& L,
                      const ParameterVector& init, std::uint64_t chain_seed) {
  Rng rng(chain_seed);
  std::size_t ns = data.subjects.size();

  std::vector<SubjectWS> wss(ns);
  std::vector<Rng> sub_rngs;
  sub_rngs.reserve(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    wss[i].sub = &data.subjects[i];
    wss[i].schedule =
        TreatmentSchedule{data.subjects[i].treatment_times, data.delta_a, data.delta_b};
    wss[i].pts = build_points(data.subjects[i], data, cf);
    sub_rngs.emplace_back(derive_seed(chain_seed, 0xA000 + i));
  }

  ChainState st;
  st.z = unconstrain(init, cf, L);
  st.params = constrain(st.z, cf, L);
  st.cur_prior = log_prior(st.params, cf) + log_jacobian(st.z, cf, L);
  if (!std::isfinite(st.cur_prior))
    throw ConstraintViolationError("initial parameters outside the prior support");

  LoadingsSpec lspec = cf.pattern;
  lspec.values = st.params.loadings;
  MatrixXd lambda = lspec.matrix();

  for (std::size_t i = 0; i < ns; ++i) {
    wss[i].eta = init_eta(data.subjects[i], wss[i].pts, st.params, cf.pattern,
                          sc.latent_init_truth);
    wss[i].u = VectorXd::Zero(cf.pattern.k);
    rebuild_structure(wss[i].cache, st.params.ou(), wss[i].pts.grid);
    rebuild_offsets(wss[i].cache, st.params, cf, wss[i].schedule, wss[i].pts.grid);
    if (!cf.longitudinal_only) rebuild_bases(wss[i], st.params, cf);
  }
  LikTotals tot = recompute_totals(wss, st.params, cf, lambda, sc.threads);
  st.cur_path = tot.path;
  st.cur_obs = tot.obs;
  st.cur_event = tot.event;

  std::vector<Block> blocks;
  std::vector<std::string> names = param_names(cf);
  auto add_block = [&](const std::string& name, int from, int count) {
    if (count <= 0) return;
    if (std::find(sc.fixed_blocks.begin(), sc.fixed_blocks.end(), name) !=
        sc.fixed_blocks.end())
      return;
    Block b;
    b.name = name;
    for (int i = 0; i < count; ++i) {
      if (std::find(sc.fixed_params.begin(), sc.fixed_params.end(),
                    names[from + i]) != sc.fixed_params.end())
        continue;
      b.idx.push_back(from + i);
    }
    if (b.idx.empty()) return;
    b.init();
    blocks.push_back(std::move(b));
  };
  add_block("theta_rho", L.itheta, L.p * L.p + L.nrho);
  add_block("loadings", L.ilam, L.nlam + 1);  // includes log sigma_lambda
  add_block("scales", L.isigu, 2 * L.k);
  if (!cf.longitudinal_only)
    add_block("hazard", L.ihaz, L.nhaz0 + L.p + (cf.use_beta3 ? 1 : 0) + L.ntt);
  add_block("tau", L.itau, L.p);

  ChainResult res;
  int kept = sc.iterations - sc.burn_in;
  res.samples = MatrixXd(std::max(kept, 0), L.dim);
  long latent_props = 0, latent_accepts = 0;

  std::vector<PathCache> scratch(ns);
  std::vector<double> subvals(ns);

  for (int it = 0; it < sc.iterations; ++it) {
    for (Block& blk : blocks) {
      ++blk.proposals;
      VectorXd zp = blk.propose(st.z, rng);
      ParameterVector pap = constrain(zp, cf, L);
      double priorp = log_prior(pap, cf) + log_jacobian(zp, cf, L);
      double delta = kNegInf;
      double new_path = st.cur_path, new_obs = st.cur_obs, new_event = st.cur_event;
      bool structure_changed = false, offsets_changed = false;
      if (std::isfinite(priorp)) {
        if (blk.name == "theta_rho" || blk.name == "tau") {
          structure_changed = blk.name == "theta_rho";
          offsets_changed = true;
          parallel_for(ns, sc.threads, [&](std::size_t i) {
            try {
              if (structure_changed) {
                rebuild_structure(scratch[i], pap.ou(), wss[i].pts.grid);
              } else {
                scratch[i].V = wss[i].cache.V;
                scratch[i].Vinv = wss[i].cache.Vinv;
                scratch[i].logdetV = wss[i].cache.logdetV;
                scratch[i].A = wss[i].cache.A;
                scratch[i].Qinv = wss[i].cache.Qinv;
                scratch[i].cholQ = wss[i].cache.cholQ;
                scratch[i].logdetQ = wss[i].cache.logdetQ;
              }
              rebuild_offsets(scratch[i], pap, cf, wss[i].schedule, wss[i].pts.grid);
              subvals[i] = path_ll_with(wss[i], scratch[i]);
            } catch (const std::exception&) {
              subvals[i] = kNegInf;
            }
          });
          new_path = 0.0;
          for (double v : subvals) new_path += v;
          if (std::isfinite(new_path))
            delta = priorp + new_path - (st.cur_prior + st.cur_path);
        } else if (blk.name == "loadings" || blk.name == "scales") {
          LoadingsSpec lsp = cf.pattern;
          lsp.values = pap.loadings;
          MatrixXd lamp = lsp.matrix();
          NoiseSpec np{pap.sigma_u2, pap.sigma_eps2};
          parallel_for(ns, sc.threads,
                       [&](std::size_t i) { subvals[i] = obs_ll_cond(wss[i], lamp, np); });
          new_obs = 0.0;
          for (double v : subvals) new_obs += v;
          delta = priorp + new_obs - (st.cur_prior + st.cur_obs);
        } else {  // hazard
          parallel_for(ns, sc.threads,
                       [&](std::size_t i) { subvals[i] = event_ll_fresh(wss[i], pap, cf); });
          new_event = 0.0;
          for (double v : subvals) new_event += v;
          delta = priorp + new_event - (st.cur_prior + st.cur_event);
        }
      }
      double alpha = std::isfinite(delta) ? std::min(1.0, std::exp(delta)) : 0.0;
      if (alpha > 0.0 && (delta >= 0.0 || std::log(rng.uniform()) < delta)) {
        ++blk.accepts;
        st.z = zp;
        st.params = pap;
        st.cur_prior = priorp;
        st.cur_path = new_path;
        st.cur_obs = new_obs;
        st.cur_event = new_event;
        if (offsets_changed || structure_changed)
          for (std::size_t i = 0; i < ns; ++i) std::swap(wss[i].cache, scratch[i]);
        if (blk.name == "loadings") {
          lspec.values = st.params.loadings;
          lambda = lspec.matrix();
        }
        if (blk.name == "hazard")
          for (std::size_t i = 0; i < ns; ++i) rebuild_bases(wss[i], st.params, cf);
      }
      if (it < sc.burn_in) blk.adapt(st.z, alpha, it);
    }

    if (sc.sample_latent) {
      // several alternating-direction sweeps per iteration; single sweeps
      // diffuse too slowly along the path and starve the dynamics block
      std::vector<int> acc(ns, 0);
      parallel_for(ns, sc.threads, [&](std::size_t i) {
        for (int s = 0; s < kLatentSweeps; ++s)
          acc[i] += latent_sweep(wss[i], st.params, lambda, sub_rngs[i], s % 2 == 1);
        intercept_gibbs(wss[i], st.params, lambda, sub_rngs[i]);
      });
      for (std::size_t i = 0; i < ns; ++i) {
        latent_accepts += acc[i];
        latent_props += kLatentSweeps * static_cast<long>(wss[i].pts.grid.size());
      }
      LikTotals t = recompute_totals(wss, st.params, cf, lambda, sc.threads);
      st.cur_path = t.path;
      st.cur_obs = t.obs;
      st.cur_event = t.event;
    }

    if (it >= sc.burn_in) {
      int row = it - sc.burn_in;
      res.samples.row(row) = flatten_params(st.params, cf).transpose();
      res.logpost.push_back(st.cur_prior + st.cur_path + st.cur_obs + st.cur_event);
      if (row % std::max(1, sc.latent_thin) == 0) {
        std::vector<MatrixXd> snap(ns);
        for (std::size_t i = 0; i < ns; ++i) snap[i] = wss[i].eta;
        res.latent.push_back(std::move(snap));
        res.latent_iters.push_back(row);
      }
    }
  }

  for (const Block& blk : blocks)
    res.accept_rates[blk.name] =
        blk.proposals ? static_cast<double>(blk.accepts) / blk.proposals : 0.0;
  if (latent_props)
    res.accept_rates["latent"] =
        static_cast<double>(latent_accepts) / static_cast<double>(latent_props);
  return res;
}

std::map<std::string, double> split_rhat(const PosteriorArchive& arch) {
  std::map<std::string, double> out;
  std::vector<const MatrixXd*> chains;
  for (const auto& c : arch.chains) chains.push_back(&c.samples);
  int half = static_cast<int>(chains[0]->rows()) / 2;
  if (half < 2) return out;
  for (int pcol = 0; pcol < chains[0]->cols(); ++pcol) {
    std::vector<double> means, vars;
    for (const MatrixXd* s : chains) {
      for (int seg = 0; seg < 2; ++seg) {
        VectorXd x = s->col(pcol).segment(seg * half, half);
        double m = x.mean();
        double v = (x.array() - m).square().sum() / (half - 1);
        means.push_back(m);
        vars.push_back(v);
      }
    }
    int mchains = static_cast<int>(means.size());
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= mchains;
    double B = 0.0, W = 0.0;
    for (int i = 0; i < mchains; ++i) {
      B += (means[i] - grand) * (means[i] - grand);
      W += vars[i];
    }
    B *= static_cast<double>(half) / (mchains - 1);
    W /= mchains;
    double rhat = 1.0;
    if (W > 1e-300) {
      double vhat = (half - 1.0) / half * W + B / half;
      rhat = std::sqrt(vhat / W);
    }
    out[arch.names[pcol]] = rhat;
  }
  return out;
}

}  // namespace

MatrixXd PosteriorArchive::stacked_samples() const {
  long rows = 0;
  for (const auto& c : chains) rows += c.samples.rows();
  MatrixXd all(rows, names.size());
  long at = 0;
  for (const auto& c : chains) {
    all.middleRows(at, c.samples.rows()) = c.samples;
    at += c.samples.rows();
  }
  return all;
}

VectorXd PosteriorArchive::posterior_mean() const {
  return stacked_samples().colwise().mean().transpose();
}

VectorXd PosteriorArchive::posterior_quantile(double q) const {
  MatrixXd all = stacked_samples();
  VectorXd out(all.cols());
  std::vector<double> col(all.rows());
  for (int j = 0; j < all.cols(); ++j) {
    for (long i = 0; i < all.rows(); ++i) col[i] = all(i, j);
    std::sort(col.begin(), col.end());
    double pos = q * (col.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, col.size() - 1);
    out[j] = col[lo] + (pos - lo) * (col[hi] - col[lo]);
  }
  return out;
}

VectorXd PosteriorArchive::posterior_median() const { return posterior_quantile(0.5); }

PosteriorArchive run_mcmc(const Dataset& data, const ModelConfig& config,
                          const SamplerConfig& sampler) {
  validate_config(config);
  if (data.subjects.empty()) throw InvalidInputError("empty dataset");
  if (sampler.iterations <= sampler.burn_in)
    throw InvalidInputError("iterations must exceed burn_in");
  if (config.pattern.k != data.k || config.pattern.p != data.p)
    throw DataInconsistencyError("loading pattern does not match dataset dimensions");
  Layout L = make_layout(config);
  ParameterVector init = sampler.init ? *sampler.init : two_stage_init(data, config);

  PosteriorArchive arch;
  arch.config = config;
  arch.sampler = sampler;
  arch.names = param_names(config);
  for (const SubjectData& sub : data.subjects)
    arch.grid_times.push_back(build_points(sub, data, config).grid);
  for (int c = 0; c < sampler.chains; ++c)
    arch.chains.push_back(
        run_chain(data, config, sampler, L, init, derive_seed(sampler.seed, c)));
  if (sampler.chains >= 2) arch.rhat = split_rhat(arch);
  return arch;
}

}  // namespace oujm
