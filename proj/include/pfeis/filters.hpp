#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfeis/ldss_model.hpp"
#include "pfeis/mode_finder.hpp"
#include "pfeis/rng.hpp"

namespace pfeis {

enum class FilterKind { Original, Doucet, EIS, MT, EIS_MT, OrigKDim };
enum class Resampling { Systematic, Multinomial };

std::string to_string(FilterKind k);
FilterKind parse_filterkind(const std::string& s);
std::string to_string(Resampling r);
Resampling parse_resampling(const std::string& s);

struct FilterSpec {
  std::string name;
  FilterKind kind = FilterKind::Original;
  StatePartition part;
  // Pick v_s per step from the sensor disagreement statistic (EIS only).
  bool onfly = false;
  int onfly_K = 1;
  double onfly_threshold = 0.0;  // <= 0 selects the calibrated default

  void validate(int M) const;
  static FilterSpec original(int M, std::string name = "PF-Original");
  static FilterSpec doucet(int M, std::string name = "PF-Doucet");
  static FilterSpec eis(int M, const std::vector<int>& s, std::string name = "PF-EIS");
  static FilterSpec mt(int M, const std::vector<int>& s, std::string name = "PF-MT");
  static FilterSpec eis_mt(int M, const std::vector<int>& s, const std::vector<int>& rr,
                           std::string name = "PF-EIS-MT");
  static FilterSpec orig_kdim(int M, const std::vector<int>& s, std::string name = "PF-Orig-K-dim");
};

// Particles are stored column-wise (M x N).
struct ParticleSet {
  Mat C;
  Mat v;
  Vec w;
  int N() const { return static_cast<int>(w.size()); }
};

ParticleSet init_particles(const LdssModel& model, int N);

std::vector<int> resample(const Vec& weights, int N, Resampling scheme, Rng& rng);
double effective_size(const Vec& weights);
Vec posterior_mean(const ParticleSet& set);

struct StepContext {
  std::uint64_t seed = 0;
  std::uint64_t run = 0;
  int t = 1;
  Resampling scheme = Resampling::Systematic;
  std::uint64_t salt = 0;  // separates streams of different filters when wanted
};

struct StepStats {
  Vec mean;          // weighted posterior mean of C_t, before resampling
  double n_eff = 0.0;
  bool degenerate = false;
  int fallbacks = 0;  // particles that fell back to STP sampling
  long mode_iterations = 0;
  int cap_hits = 0;
  int repairs = 0;
  int descent_steps = 0;
  int K_used = 0;
};

StepStats pf_original_step(ParticleSet& set, const LdssModel& model, const Observation& Y,
                           const StepContext& ctx);
StepStats pf_eis_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                      const Observation& Y, const StepContext& ctx);
StepStats pf_eis_mt_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                         const Observation& Y, const StepContext& ctx);
StepStats pf_mt_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                     const Observation& Y, const StepContext& ctx);
StepStats pf_orig_kdim_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                            const Observation& Y, const StepContext& ctx);

StepStats filter_step(ParticleSet& set, const LdssModel& model, const FilterSpec& spec,
                      const Observation& Y, const StepContext& ctx);

struct FilterRun {
  Mat means;  // (T+1) x M, row 0 = C0
  std::vector<StepStats> stats;  // index t-1 for t = 1..T
};

FilterRun run_filter(const LdssModel& model, const FilterSpec& spec, const std::vector<Observation>& Y,
                     int N, std::uint64_t seed, std::uint64_t run,
                     Resampling scheme = Resampling::Systematic, std::uint64_t salt = 0);

// Exact posterior for alpha = 0 and linear sensors. State is [C; v] (2M).
struct KalmanResult {
  std::vector<Vec> means;
  std::vector<Mat> covs;
};

KalmanResult kalman_filter(const LdssModel& model, const std::vector<Observation>& Y);

// Particle filter over the s coordinates with the remaining coordinates of v
// marginalized by a Kalman filter per particle. Every node touched by a
// non-s basis column must be a linear, failure-free sensor.
Mat rbpf_oracle(const LdssModel& model, const std::vector<int>& s, const std::vector<Observation>& Y,
                int N, std::uint64_t seed, std::uint64_t run, std::uint64_t salt = 0);

}  // namespace pfeis
