#include <algorithm>
#include <cmath>
#include <vector>

#include "oujm/mcmc.hpp"
#include "oujm/treatment.hpp"

namespace oujm {
namespace {

// mean of a vector, 0 if empty
double vmean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double vvar(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = vmean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

struct Ols {
  // y ~ x with intercept, returns slope
  static double slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 3) return 0.0;
    double mx = vmean(x), my = vmean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxx > 1e-12 ? sxy / sxx : 0.0;
  }
};

}  // namespace

ParameterVector two_stage_init(const Dataset& data, const ModelConfig& config) {
  config.pattern.validate_shape();
  const int k = config.pattern.k;
  const int p = config.pattern.p;
  const int nlam = static_cast<int>(config.pattern.cells.size());
  const int nrho = p * (p - 1) / 2;
  ParameterVector pa;

  // stage 1: moments of the longitudinal submodel

  // subject means -> random-intercept variance; within-subject residuals
  // carry the factor structure
  std::vector<std::vector<double>> subj_means(k);
  // residual rows per subject, NaN kept for missing
  std::vector<MatrixXd> resid;
  std::vector<const SubjectData*> resid_sub;
  for (const SubjectData& sub : data.subjects) {
    VectorXd m = VectorXd::Zero(k);
    VectorXd cnt = VectorXd::Zero(k);
    for (int r = 0; r < sub.y.rows(); ++r)
      for (int j = 0; j < k; ++j)
        if (!std::isnan(sub.y(r, j))) {
          m[j] += sub.y(r, j);
          cnt[j] += 1.0;
        }
    for (int j = 0; j < k; ++j)
      if (cnt[j] > 0) {
        m[j] /= cnt[j];
        subj_means[j].push_back(m[j]);
      } else {
        m[j] = 0.0;
      }
    MatrixXd rs = sub.y;
    for (int r = 0; r < rs.rows(); ++r)
      for (int j = 0; j < k; ++j)
        if (!std::isnan(rs(r, j))) rs(r, j) -= m[j];
    resid.push_back(std::move(rs));
    resid_sub.push_back(&sub);
  }
  pa.sigma_u2 = VectorXd(k);
  for (int j = 0; j < k; ++j) pa.sigma_u2[j] = std::max(vvar(subj_means[j]), 0.01);

  // pooled within-subject moments
  MatrixXd cross = MatrixXd::Zero(k, k);
  MatrixXd crossn = MatrixXd::Zero(k, k);
  for (const MatrixXd& rs : resid)
    for (int r = 0; r < rs.rows(); ++r)
      for (int a = 0; a < k; ++a) {
        if (std::isnan(rs(r, a))) continue;
        for (int b = 0; b < k; ++b) {
          if (std::isnan(rs(r, b))) continue;
          cross(a, b) += rs(r, a) * rs(r, b);
          crossn(a, b) += 1.0;
        }
      }
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      if (crossn(a, b) > 1) cross(a, b) /= crossn(a, b) - 1.0;

  // items per factor from the loading pattern
  std::vector<std::vector<int>> factor_items(p);
  std::vector<int> item_factor(k, 0);
  for (const auto& [r, c] : config.pattern.cells) {
    factor_items[c].push_back(r);
    item_factor[r] = c;
  }

  // lambda_a lambda_b ~ within-cov of same-factor item pairs; Var(eta) = 1
  VectorXd lam_item = VectorXd::Ones(k);
  for (int f = 0; f < p; ++f) {
    const auto& items = factor_items[f];
    for (int a : items) {
      std::vector<double> prods;
      for (int b : items)
        if (b != a && cross(a, b) > 0.0) prods.push_back(cross(a, b));
      if (!prods.empty())
        lam_item[a] = std::sqrt(std::max(vmean(prods), 0.04));
      else
        lam_item[a] = std::sqrt(std::max(cross(a, a) * 0.5, 0.04));
    }
  }
  pa.loadings = VectorXd(nlam);
  for (int i = 0; i < nlam; ++i) pa.loadings[i] = lam_item[config.pattern.cells[i].first];
  pa.sigma_lambda = 1.0;
  pa.sigma_eps2 = VectorXd(k);
  for (int j = 0; j < k; ++j)
    pa.sigma_eps2[j] = std::max(cross(j, j) - lam_item[j] * lam_item[j], 0.02);

  // factor pseudo-scores per observation row
  auto scores = [&](const MatrixXd& rs, int r) {
    VectorXd z = VectorXd::Zero(p);
    VectorXd n = VectorXd::Zero(p);
    for (int j = 0; j < k; ++j) {
      if (std::isnan(rs(r, j))) continue;
      z[item_factor[j]] += rs(r, j) / lam_item[j];
      n[item_factor[j]] += 1.0;
    }
    for (int f = 0; f < p; ++f)
      if (n[f] > 0) z[f] /= n[f];
    return z;
  };

  // lag-autocorrelation regression log c(dt) ~ -theta dt per factor
  pa.theta = MatrixXd::Zero(p, p);
  std::vector<std::vector<double>> dts(p), logc(p);
  std::vector<std::vector<double>> same_time(p == 2 ? 2 : 0);
  for (std::size_t si = 0; si < resid.size(); ++si) {
    const MatrixXd& rs = resid[si];
    const auto& times = resid_sub[si]->obs_times;
    for (int r = 0; r + 1 < rs.rows(); ++r) {
      VectorXd z0 = scores(rs, r), z1 = scores(rs, r + 1);
      double dt = times[r + 1] - times[r];
      if (dt <= 1e-9 || dt > 1.0) continue;
      for (int f = 0; f < p; ++f) {
        double prod = z0[f] * z1[f];
        if (prod > 1e-6) {
          dts[f].push_back(dt);
          logc[f].push_back(std::log(prod));
        }
      }
    }
    if (p == 2)
      for (int r = 0; r < rs.rows(); ++r) {
        VectorXd z = scores(rs, r);
        same_time[0].push_back(z[0]);
        same_time[1].push_back(z[1]);
      }
  }
  for (int f = 0; f < p; ++f) {
    double th = -Ols::slope(dts[f], logc[f]);
    pa.theta(f, f) = std::clamp(th, 0.5, 30.0);
  }

  pa.rho = VectorXd::Zero(nrho);
  if (p == 2 && !same_time[0].empty()) {
    double v0 = vvar(same_time[0]), v1 = vvar(same_time[1]);
    double m0 = vmean(same_time[0]), m1 = vmean(same_time[1]);
    double cv = 0.0;
    for (std::size_t i = 0; i < same_time[0].size(); ++i)
      cv += (same_time[0][i] - m0) * (same_time[1][i] - m1);
    cv /= std::max<std::size_t>(same_time[0].size() - 1, 1);
    if (v0 > 1e-12 && v1 > 1e-12)
      pa.rho[0] = std::clamp(cv / std::sqrt(v0 * v1), -0.9, 0.9);
  }
  if (!pa.ou().feasible()) {
    pa.theta = MatrixXd::Identity(p, p) * 2.0;
    pa.rho.setZero();
  }

  // tau: pooled regression of pseudo-scores on the tent height
  pa.tau = VectorXd::Zero(p);
  {
    std::vector<std::vector<double>> xs(p), ys(p);
    for (std::size_t si = 0; si < resid.size(); ++si) {
      const SubjectData& sub = *resid_sub[si];
      for (int r = 0; r < resid[si].rows(); ++r) {
        double tent = tent_sum(sub.treatment_times, data.delta_a, sub.obs_times[r]);
        VectorXd z = scores(resid[si], r);
        for (int f = 0; f < p; ++f) {
          xs[f].push_back(tent);
          ys[f].push_back(z[f]);
        }
      }
    }
    for (int f = 0; f < p; ++f) pa.tau[f] = Ols::slope(xs[f], ys[f]);
  }

  if (config.longitudinal_only) {
    pa.beta_latent = VectorXd::Zero(p);
    return pa;
  }

  // stage 2: Poisson working regression on midpoint cells with the stage-1
  // latent estimates plugged in. Covariates: 1, eta_hat, [g], tent(s).
  struct Cell {
    double y = 0.0, w = 0.0;
    VectorXd x;
  };
  bool split = config.split_tau_tilde && config.quit_time.has_value();
  int ncov = 1 + p + (config.use_beta3 ? 1 : 0) + (split ? 2 : 1);
  std::vector<Cell> cells;
  std::vector<double> all_gaps;
  for (std::size_t si = 0; si < data.subjects.size(); ++si) {
    const SubjectData& sub = data.subjects[si];
    std::vector<double> bounds{0.0};
    bounds.insert(bounds.end(), sub.event_times.begin(), sub.event_times.end());
    bounds.push_back(sub.censor_time);
    for (std::size_t g = 0; g + 1 < bounds.size(); ++g) {
      double g0 = bounds[g], g1 = bounds[g + 1];
      if (g1 - g0 < 1e-12) continue;
      if (g + 1 < bounds.size() - 1) all_gaps.push_back(g1 - g0);
      int nc = std::max(1, static_cast<int>(std::ceil((g1 - g0) / config.grid_width - 1e-9)));
      for (int ci = 0; ci < nc; ++ci) {
        double lo = g0 + ci * config.grid_width;
        double hi = std::min(g1, lo + config.grid_width);
        double t = 0.5 * (lo + hi);
        Cell cell;
        cell.w = hi - lo;
        cell.y = (g + 1 < bounds.size() - 1 && ci == nc - 1) ? 1.0 : 0.0;
        cell.x = VectorXd::Zero(ncov);
        int at = 0;
        cell.x[at++] = 1.0;
        // nearest observation's pseudo-score
        VectorXd z = VectorXd::Zero(p);
        if (!sub.obs_times.empty()) {
          auto it = std::lower_bound(sub.obs_times.begin(), sub.obs_times.end(), t);
          int r = static_cast<int>(it - sub.obs_times.begin());
          if (r == static_cast<int>(sub.obs_times.size())) --r;
          if (r > 0 && t - sub.obs_times[r - 1] < sub.obs_times[r] - t) --r;
          z = scores(resid[si], r);
        }
        for (int f = 0; f < p; ++f) cell.x[at++] = z[f];
        if (config.use_beta3)
          cell.x[at++] = g > 0 ? g_logistic(config.g_variant, t - g0) : 0.0;
        double tent = tent_sum(sub.treatment_times, data.delta_b, t);
        if (split) {
          cell.x[at++] = t < *config.quit_time ? tent : 0.0;
          cell.x[at++] = t >= *config.quit_time ? tent : 0.0;
        } else {
          cell.x[at++] = tent;
        }
        cells.push_back(std::move(cell));
      }
    }
  }

  VectorXd beta = VectorXd::Zero(ncov);
  double total_events = 0.0, total_w = 0.0;
  for (const Cell& c : cells) {
    total_events += c.y;
    total_w += c.w;
  }
  beta[0] = total_events > 0 ? std::log(total_events / total_w) : 0.0;  // prior mode
  if (total_events > 0) {
    for (int iter = 0; iter < 30; ++iter) {  // IRLS with a small ridge
      MatrixXd H = 1e-6 * MatrixXd::Identity(ncov, ncov);
      VectorXd grad = VectorXd::Zero(ncov);
      for (const Cell& c : cells) {
        double mu = c.w * std::exp(std::min(beta.dot(c.x), 30.0));
        grad.noalias() += (c.y - mu) * c.x;
        H.noalias() += mu * c.x * c.x.transpose();
      }
      VectorXd step = H.ldlt().solve(grad);
      beta += step;
      if (step.norm() < 1e-8) break;
    }
  }
  int at = 0;
  pa.beta0 = beta[at++];
  pa.beta_latent = beta.segment(at, p);
  at += p;
  if (config.use_beta3) pa.beta3 = beta[at++];
  pa.tau_tilde_pre = beta[at++];
  pa.tau_tilde_post = split ? beta[at++] : pa.tau_tilde_pre;

  if (config.baseline == BaselineKind::lognormal_prepost) {
    std::vector<double> lg;
    for (double g : all_gaps) lg.push_back(std::log(std::max(g, 1e-8)));
    double mu0 = lg.empty() ? 0.0 : vmean(lg);
    double s0 = std::sqrt(std::max(vvar(lg), 0.04));
    pa.mu0_pre = pa.mu0_post = mu0;
    pa.sigma0_pre = pa.sigma0_post = s0;
  }
  return pa;
}

}  // namespace oujm
