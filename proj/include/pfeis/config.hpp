#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfeis/filters.hpp"
#include "pfeis/unimodality.hpp"

namespace pfeis {

using json = nlohmann::json;

// Node and basis indices in config files are 1-based; they are converted on load.

LdssModel parse_model(const json& root);
SensorSpec parse_sensors(const json& j, int M, const std::string& path);
FilterSpec parse_filter(const json& j, int M, const std::string& path);

struct ExperimentConfig {
  std::string name;
  LdssModel model;  // model assumed by the filters
  LdssModel truth;  // model used to simulate (differs when truth_sensors is given)
  std::vector<FilterSpec> filters;
  int N = 100;
  int T = 25;
  int n_runs = 1;
  std::uint64_t seed = 1;
  double in_track_threshold = 1.0;
  Resampling scheme = Resampling::Systematic;
  std::string source_hash;  // hash of the config text, recorded in the manifest

  void validate() const;
};

ExperimentConfig parse_experiment(const json& root);
ExperimentConfig load_experiment(const std::string& path);

// One time step of the conditional posterior for the certificate.
struct DeltaStarInstance {
  LdssModel model;
  Vec C_prev, v_prev;
  std::vector<int> s;
  Vec v_s;
  Observation Y;
  std::optional<Vec> Delta_r;
  double epsilon0 = 0.0;
  int grid_n = 201;
  double half_width = 0.0;  // <= 0: 6 sqrt(max delta_nu)

  CondPosterior posterior() const;  // Delta_r falls back to the model variances
  GridSpec grid() const;
};

DeltaStarInstance parse_delta_star_instance(const json& root);

json load_json(const std::string& path);

}  // namespace pfeis
