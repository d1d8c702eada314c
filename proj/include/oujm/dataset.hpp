#pragma once
#include <optional>
#include <string>
#include <vector>

#include "oujm/ou.hpp"

#include "json.hpp"

namespace oujm {

struct SubjectData {
  int id = 0;
  std::vector<double> obs_times;        // sorted, fractional days
  MatrixXd y;                           // n_obs x k, NaN = missing
  std::vector<double> treatment_times;  // sorted
  std::vector<double> event_times;      // sorted, within (0, censor_time]
  double censor_time = 0.0;

  // simulator ground truth, empty when ingested from real data
  std::vector<double> true_eta_times;
  MatrixXd true_eta;  // n_grid x p
  VectorXd true_u;    // length k
};

struct Dataset {
  std::vector<SubjectData> subjects;
  int k = 0;
  int p = 0;
  double delta_a = 0.5;
  double delta_b = 0.5;
  std::optional<double> quit_time;
  nlohmann::json manifest;  // config, seed, true parameters, provenance

  // Divides every time (and the deltas / quit time) by `scale`.
  Dataset rescaled(double scale) const;
};

// CSV bundle: observations.csv, events.csv, treatments.csv, subjects.csv,
// manifest.json (plus latent_truth.csv when simulator truth is present).
void write_bundle(const Dataset& data, const std::string& dir);
Dataset read_bundle(const std::string& dir);

std::string format_double(double v);  // round-trip decimal (%.17g)

}  // namespace oujm
