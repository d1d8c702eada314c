#pragma once
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oujm/dataset.hpp"
#include "oujm/hazard.hpp"
#include "oujm/measurement.hpp"
#include "oujm/simulate.hpp"

namespace oujm {

enum class BaselineKind { constant, lognormal_prepost };

struct ModelConfig {
  Mechanism mechanism = Mechanism::additive;
  BaselineKind baseline = BaselineKind::constant;
  bool use_beta3 = false;
  GVariant g_variant = GVariant::k4;
  bool split_tau_tilde = false;
  std::optional<double> quit_time;  // required by lognormal / split tau_tilde
  bool longitudinal_only = false;   // drop the event submodel entirely
  double grid_width = 0.5;          // hazard midpoint grid
  LoadingsSpec pattern;             // values ignored; k, p, cells used

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ParameterVector {
  MatrixXd theta;
  VectorXd rho;       // off-diagonals of V
  VectorXd loadings;  // non-zero cells, pattern order
  double sigma_lambda = 1.0;
  VectorXd sigma_u2;
  VectorXd sigma_eps2;
  double beta0 = 0.0;  // constant baseline
  double mu0_pre = 0.0, sigma0_pre = 1.0;  // log-normal baseline
  double mu0_post = 0.0, sigma0_post = 1.0;
  VectorXd beta_latent;
  double beta3 = 0.0;
  VectorXd tau;
  double tau_tilde_pre = 0.0, tau_tilde_post = 0.0;

  OuParams ou() const { return OuParams{theta, rho}; }
};

HazardSpec make_hazard_spec(const ParameterVector& params, const ModelConfig& config);
TreatmentAmplitudes make_amplitudes(const ParameterVector& params,
                                    const ModelConfig& config);

// Natural-scale flattening used for archives, posterior means, and R-hat.
std::vector<std::string> param_names(const ModelConfig& config);
VectorXd flatten_params(const ParameterVector& params, const ModelConfig& config);
ParameterVector unflatten_params(const VectorXd& v, const ModelConfig& config);

// Sum of the Appendix-style log prior densities; -inf on constraint violation.
double log_prior(const ParameterVector& params, const ModelConfig& config);

// Per-subject latent values on the union grid (observation times, event
// times, hazard-cell midpoints, plus time 0).
struct LatentGrid {
  std::vector<std::vector<double>> times;  // per subject
  std::vector<MatrixXd> values;            // per subject, p x n_grid
};

// Builds each subject's union grid for the given model config.
LatentGrid make_latent_grid(const Dataset& data, const ModelConfig& config);

double log_posterior(const ParameterVector& params, const LatentGrid& latent,
                     const Dataset& data, const ModelConfig& config);

struct SamplerConfig {
  int iterations = 2000;
  int burn_in = 1000;
  int chains = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  int latent_thin = 1;         // keep every n-th post-burn-in latent draw
  bool sample_latent = true;   // false: hold latent at its initial values
  bool latent_init_truth = false;  // initialize latent from dataset truth
  std::vector<std::string> fixed_blocks;  // subset of block names to freeze
  std::vector<std::string> fixed_params;  // individual parameters to freeze
  std::optional<ParameterVector> init;    // default: two_stage_init

  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j);
};

struct ChainResult {
  MatrixXd samples;  // post-burn-in draws x params (natural scale)
  std::vector<double> logpost;
  std::vector<std::vector<MatrixXd>> latent;  // [stored draw][subject] p x n
  std::vector<int> latent_iters;              // iteration index of each stored draw
  std::map<std::string, double> accept_rates;
};

struct PosteriorArchive {
  ModelConfig config;
  SamplerConfig sampler;
  std::vector<std::string> names;
  std::vector<std::vector<double>> grid_times;  // per subject
  std::vector<ChainResult> chains;
  std::map<std::string, double> rhat;  // split R-hat when chains >= 2

  MatrixXd stacked_samples() const;
  VectorXd posterior_mean() const;
  VectorXd posterior_median() const;
  VectorXd posterior_quantile(double q) const;
};

// Stage 1 fits the longitudinal submodel by moments, stage 2 a Poisson
// working model for the hazard coefficients with stage-1 latent estimates
// held fixed.
ParameterVector two_stage_init(const Dataset& data, const ModelConfig& config);

// Blocked adaptive random-walk Metropolis with conditional-Gaussian latent
// updates; see README for the block layout.
PosteriorArchive run_mcmc(const Dataset& data, const ModelConfig& config,
                          const SamplerConfig& sampler);

void write_archive(const PosteriorArchive& archive, const std::string& dir);
PosteriorArchive read_archive(const std::string& dir);

// Joint conditional log-likelihood (no prior) of one subject given a latent
// path on its grid; shared by the sampler, the IC module, and tests.
double subject_conditional_loglik(const ParameterVector& params,
                                  const ModelConfig& config, const Dataset& data,
                                  int subject_idx,
                                  const std::vector<double>& grid,
                                  const MatrixXd& eta);

// Reusable evaluators for repeated likelihood work on a fixed subject /
// fixed parameter point (importance sampling evaluates the same path
// density and conditional likelihood for many latent draws).
class PathDensity {
 public:
  PathDensity(const ParameterVector& params, const ModelConfig& config,
              const TreatmentSchedule& schedule, const std::vector<double>& grid);
  double operator()(const MatrixXd& eta) const;  // eta is p x n_grid

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

class ConditionalLoglik {
 public:
  ConditionalLoglik(const ModelConfig& config, const Dataset& data, int subject_idx);
  const std::vector<double>& grid() const;
  double operator()(const ParameterVector& params, const MatrixXd& eta) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

// Log-density of a latent path under the structural submodel (sequential
// conditional Gaussians from eta(0) ~ N(mean0, V)).
double latent_path_logdensity(const ParameterVector& params,
                              const ModelConfig& config,
                              const TreatmentSchedule& schedule,
                              const std::vector<double>& grid,
                              const MatrixXd& eta);

}  // namespace oujm
