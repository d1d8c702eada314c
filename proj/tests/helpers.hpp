#pragma once
// Shared oracles for the test suite: a series-based matrix exponential,
// Gauss-Legendre quadrature, and a couple of distribution statistics. These
// are deliberately independent of the library implementations they check.
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Scaling-and-squaring Taylor series, accurate to ~1e-13 for the moderate
// norms used here. Independent of the library's Pade/closed-form path.
inline MatrixXd series_expm(const MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::pow(2.0, s) > 0.5) ++s;
  const MatrixXd b = a / std::pow(2.0, s);
  MatrixXd result = MatrixXd::Identity(a.rows(), a.cols());
  MatrixXd term = result;
  for (int k = 1; k <= 30; ++k) {
    term = (term * b) / static_cast<double>(k);
    result += term;
  }
  for (int i = 0; i < s; ++i) result = result * result;
  return result;
}

struct GaussLegendre {
  std::vector<double> nodes;    // on (-1, 1)
  std::vector<double> weights;
};

// Nodes via Newton iteration on the Legendre recurrence.
inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre gl;
  gl.nodes.resize(n);
  gl.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    gl.nodes[i] = x;
    gl.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return gl;
}

inline double integrate(const std::function<double(double)>& f, double a,
                        double b, const GaussLegendre& gl) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double total = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i)
    total += gl.weights[i] * f(c + h * gl.nodes[i]);
  return total * h;
}

inline VectorXd integrate_vec(const std::function<VectorXd(double)>& f,
                              double a, double b, const GaussLegendre& gl,
                              int dim) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  VectorXd total = VectorXd::Zero(dim);
  for (std::size_t i = 0; i < gl.nodes.size(); ++i)
    total += gl.weights[i] * f(c + h * gl.nodes[i]);
  return total * h;
}

// One-sample Kolmogorov-Smirnov statistic against a CDF.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

// Regularized upper incomplete gamma Q(a, x), for chi-square tail areas.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) {
    // series for P, return 1 - P
    double sum = 1.0 / a, term = sum;
    for (int k = 1; k < 500; ++k) {
      term *= x / (a + k);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    const double logp = -x + a * std::log(x) - std::lgamma(a);
    return 1.0 - sum * std::exp(logp);
  }
  // continued fraction for Q
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  const double logq = -x + a * std::log(x) - std::lgamma(a);
  return std::exp(logq) * h;
}

inline double chi2_sf(double stat, double dof) {
  return gamma_q(0.5 * dof, 0.5 * stat);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

inline double correlation(const std::vector<double>& a,
                          const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double ols_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace testutil
