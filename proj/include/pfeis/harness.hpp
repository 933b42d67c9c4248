#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pfeis/config.hpp"

namespace pfeis {

// Per-t metrics over runs; index 0 corresponds to t = 1.
Vec rmse(const std::vector<Mat>& estimates, const std::vector<Mat>& truths);
Vec out_of_track(const std::vector<Mat>& estimates, const std::vector<Mat>& truths, double threshold);

struct MetricsRow {
  std::string filter;
  int t = 0;
  double rmse = 0.0;
  double out_of_track_pct = 0.0;
  double n_eff_mean = 0.0;
  int degenerate_runs = 0;
  double fallback_rate = 0.0;     // fraction of particle proposals that fell back to the STP
  double mode_iters_mean = 0.0;   // per particle that ran the mode finder
  int cap_hits = 0;
  int repairs = 0;
};

struct FilterSummary {
  std::string filter;
  double rmse_time_avg = 0.0;
  double out_of_track_time_avg = 0.0;
  double out_of_track_final = 0.0;
  double n_eff_mean = 0.0;
  int degenerate_steps = 0;
  int fallbacks = 0;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<FilterSummary> summary;
  std::vector<std::string> stream_hashes;  // per run, identical for every filter
  json manifest;
  const FilterSummary* find(const std::string& name) const;
};

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1);

void write_metrics_csv(const std::string& path, const ExperimentResult& result);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);
json summary_json(const ExperimentResult& result);
void write_outputs(const std::string& dir, const ExperimentResult& result);

std::string stream_hash(const std::vector<Observation>& Y);

// Time-averaged RMSE and out-of-track per filter from a metrics table.
std::vector<FilterSummary> summarize(const std::vector<MetricsRow>& rows);

// Runs fn(i) for i in [0, n) over a pool of `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace pfeis
