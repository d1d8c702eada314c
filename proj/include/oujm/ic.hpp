#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "oujm/mcmc.hpp"

namespace oujm {

struct IcConfig {
  int m_draws = 25;       // latent smoothing draws per subject (event term)
  int max_samples = 800;  // posterior samples used (thinned evenly)
  std::uint64_t seed = 1;
  int threads = 1;
};

struct IcReport {
  double dic = 0.0, p_dic = 0.0;
  double waic = 0.0, p_waic = 0.0;
  double lppd = 0.0;
  double loglik_at_mean = 0.0;  // log p(y | posterior mean)
  std::vector<double> lppd_subject;
  std::vector<double> p_waic_subject;
  int n_samples = 0, m_draws = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Gaussian importance proposal for one subject's stacked latent path, built
// from the empirical mean/covariance of the archived latent draws (diagonal
// jitter 1e-8, escalated x10 up to 1e-4 before giving up).
struct LatentProposal {
  VectorXd mean;
  MatrixXd chol;   // lower Cholesky of the (jittered) covariance
  double logdet = 0.0;
  int p = 0, n = 0;

  MatrixXd draw(Rng& rng) const;          // one p x n path
  double logpdf(const MatrixXd& eta) const;
};

LatentProposal build_latent_proposal(const PosteriorArchive& archive, int subject_idx);

// Importance-sampled log p(y_i | params) using M fixed draws from the
// subject's proposal (common draws across parameter samples).
double marginal_loglik_subject(const ParameterVector& params,
                               const ConditionalLoglik& cond,
                               const PathDensity& path_density,
                               const std::vector<MatrixXd>& draws,
                               const std::vector<double>& logq);

// DIC/WAIC over per-subject marginal log-likelihoods. The longitudinal block
// is integrated exactly with a Kalman filter over the augmented state (latent
// path plus intercepts); the event term averages the event likelihood over
// backward-sampling draws of the path, with a fixed random stream per
// (subject, seed) so estimates are deterministic and frozen chains report
// zero effective parameters.
IcReport compute_ic(const PosteriorArchive& archive, const Dataset& data,
                    const IcConfig& config);

// Exact marginal log-likelihood of one subject's longitudinal data under a
// longitudinal-only model: dense Gaussian over the stacked observed items
// with covariance Lambda K Lambda^T plus per-item intercept blocks and
// diagonal measurement error.
double exact_longitudinal_marginal(const ParameterVector& params,
                                   const ModelConfig& config, const Dataset& data,
                                   int subject_idx);

void write_ic_report(const IcReport& report, const ModelConfig& config,
                     const std::string& path);

}  // namespace oujm
