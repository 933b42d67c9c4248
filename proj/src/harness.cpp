#include "pfeis/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "pfeis/errors.hpp"
#include "pfeis/heuristics.hpp"
#include "pfeis/ismt_bounds.hpp"

namespace pfeis {

Vec rmse(const std::vector<Mat>& estimates, const std::vector<Mat>& truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw ConfigError("rmse: estimates and truths must be aligned and non-empty");
  const int T = static_cast<int>(truths[0].rows()) - 1;
  Vec out = Vec::Zero(T);
  for (size_t r = 0; r < truths.size(); ++r)
    for (int t = 1; t <= T; ++t) out[t - 1] += (estimates[r].row(t) - truths[r].row(t)).squaredNorm();
  return (out / static_cast<double>(truths.size())).cwiseSqrt();
}

Vec out_of_track(const std::vector<Mat>& estimates, const std::vector<Mat>& truths, double threshold) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw ConfigError("out_of_track: estimates and truths must be aligned and non-empty");
  const int T = static_cast<int>(truths[0].rows()) - 1;
  Vec out = Vec::Zero(T);
  for (size_t r = 0; r < truths.size(); ++r)
    for (int t = 1; t <= T; ++t)
      if ((estimates[r].row(t) - truths[r].row(t)).squaredNorm() > threshold) out[t - 1] += 1.0;
  return 100.0 * out / static_cast<double>(truths.size());
}

std::string stream_hash(const std::vector<Observation>& Y) {
  std::uint64_t h = 0;
  for (const Observation& o : Y)
    for (int k = 0; k < o.Y.size(); ++k) {
      std::uint64_t bits;
      double x = o.Y.data()[k];
      std::memcpy(&bits, &x, sizeof bits);
      h = mix64(h ^ bits);
    }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

const FilterSummary* ExperimentResult::find(const std::string& name) const {
  for (const FilterSummary& s : summary)
    if (s.filter == name) return &s;
  return nullptr;
}

std::vector<FilterSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<FilterSummary> out;
  std::map<std::string, size_t> pos;
  std::map<std::string, int> count;
  std::map<std::string, int> last_t;
  for (const MetricsRow& r : rows) {
    if (!pos.count(r.filter)) {
      pos[r.filter] = out.size();
      out.push_back(FilterSummary{r.filter});
    }
    FilterSummary& s = out[pos[r.filter]];
    s.rmse_time_avg += r.rmse;
    s.out_of_track_time_avg += r.out_of_track_pct;
    s.n_eff_mean += r.n_eff_mean;
    s.degenerate_steps += r.degenerate_runs;
    if (r.t >= last_t[r.filter]) {
      last_t[r.filter] = r.t;
      s.out_of_track_final = r.out_of_track_pct;
    }
    ++count[r.filter];
  }
  for (FilterSummary& s : out) {
    double n = count[s.filter];
    s.rmse_time_avg /= n;
    s.out_of_track_time_avg /= n;
    s.n_eff_mean /= n;
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  config.validate();
  const int R = config.n_runs, T = config.T, F = static_cast<int>(config.filters.size());
  std::vector<Trajectory> truth(R);
  std::vector<std::vector<FilterRun>> runs(R, std::vector<FilterRun>(F));
  parallel_for(R, jobs, [&](int r) {
    truth[r] = simulate(config.truth, T, config.seed, static_cast<std::uint64_t>(r));
    for (int f = 0; f < F; ++f)
      runs[r][f] = run_filter(config.model, config.filters[f], truth[r].Y, config.N, config.seed,
                              static_cast<std::uint64_t>(r), config.scheme, static_cast<std::uint64_t>(f));
  });

  ExperimentResult res;
  std::vector<Mat> truths;
  for (int r = 0; r < R; ++r) {
    truths.push_back(truth[r].C);
    res.stream_hashes.push_back(stream_hash(truth[r].Y));
  }
  for (int f = 0; f < F; ++f) {
    std::vector<Mat> est;
    for (int r = 0; r < R; ++r) est.push_back(runs[r][f].means);
    Vec e = rmse(est, truths);
    Vec o = out_of_track(est, truths, config.in_track_threshold);
    for (int t = 1; t <= T; ++t) {
      MetricsRow row;
      row.filter = config.filters[f].name;
      row.t = t;
      row.rmse = e[t - 1];
      row.out_of_track_pct = o[t - 1];
      long iters = 0, moded = 0, fallbacks = 0;
      for (int r = 0; r < R; ++r) {
        const StepStats& st = runs[r][f].stats[t - 1];
        row.n_eff_mean += st.n_eff / R;
        row.degenerate_runs += st.degenerate ? 1 : 0;
        row.cap_hits += st.cap_hits;
        row.repairs += st.repairs;
        iters += st.mode_iterations;
        fallbacks += st.fallbacks;
        moded += st.mode_iterations > 0 ? config.N : 0;
      }
      row.fallback_rate = static_cast<double>(fallbacks) / (static_cast<double>(R) * config.N);
      row.mode_iters_mean = moded > 0 ? static_cast<double>(iters) / moded : 0.0;
      res.rows.push_back(row);
    }
  }
  res.summary = summarize(res.rows);
  for (int f = 0; f < F; ++f) {
    int fb = 0;
    for (int r = 0; r < R; ++r)
      for (const StepStats& st : runs[r][f].stats) fb += st.fallbacks;
    res.summary[f].fallbacks = fb;
  }

  json man;
  man["name"] = config.name;
  man["version"] = "pfeis 0.1.0";
  man["config_hash"] = config.source_hash;
  man["seed"] = config.seed;
  man["n_runs"] = config.n_runs;
  man["N"] = config.N;
  man["T"] = config.T;
  man["resampling"] = to_string(config.scheme);
  man["stream_hashes"] = res.stream_hashes;
  json filters = json::array();
  for (const FilterSpec& f : config.filters) {
    json jf;
    jf["name"] = f.name;
    jf["kind"] = to_string(f.kind);
    auto one_based = [](const std::vector<int>& v) {
      std::vector<int> o;
      for (int k : v) o.push_back(k + 1);
      return o;
    };
    jf["s"] = one_based(f.part.s);
    jf["rs"] = one_based(f.part.rs);
    jf["rr"] = one_based(f.part.rr);
    if (f.onfly) jf["onfly_K"] = f.onfly_K;
    filters.push_back(jf);
  }
  man["filters"] = filters;
  // heuristic and bound values recorded for the assumed model
  const LdssModel& m = config.model;
  json heur;
  heur["ol_multimodal_prob"] = ol_multimodal_prob(m.obs.alpha);
  if (m.M() > 1) {
    std::vector<int> best;
    for (int p = 0; p < m.M(); ++p) best.push_back(choose_vts_single(m.B, m.delta_nu, p, 1)[0] + 1);
    heur["vts_single_per_node"] = best;
  }
  if (m.obs.J() >= 2) heur["onfly_threshold"] = onfly_default_threshold(m.M());
  man["heuristics"] = heur;
  json bounds = json::array();
  for (const FilterSpec& f : config.filters) {
    if (f.part.M_rr() == 0) continue;
    double dm = select(m.delta_nu, f.part.rr).maxCoeff();
    BoundQuery q{1.0, 0.05, f.part.M_rr(), dm, NormKind::Max};
    bounds.push_back({{"filter", f.name}, {"M_rr", f.part.M_rr()}, {"delta_m", dm}, {"eps", 1.0},
                      {"vp", vp_tail_bound(q)}, {"chernoff", chernoff_tail_bound(q)}});
  }
  man["bounds"] = bounds;
  res.manifest = man;
  return res;
}

void write_metrics_csv(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "filter,t,rmse,out_of_track_pct,n_eff_mean,degenerate_runs,fallback_rate,mode_iters_mean,cap_hits,repairs\n";
  out << std::setprecision(17);
  for (const MetricsRow& r : result.rows)
    out << r.filter << ',' << r.t << ',' << r.rmse << ',' << r.out_of_track_pct << ',' << r.n_eff_mean << ','
        << r.degenerate_runs << ',' << r.fallback_rate << ',' << r.mode_iters_mean << ',' << r.cap_hits << ','
        << r.repairs << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("filter,t,rmse", 0) != 0) throw ConfigError("'" + path + "' is not a metrics file");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[10];
    for (int k = 0; k < 10; ++k)
      if (!std::getline(ss, f[k], ',')) throw ConfigError("malformed row in '" + path + "': " + line);
    MetricsRow r;
    try {
      r.filter = f[0];
      r.t = std::stoi(f[1]);
      r.rmse = std::stod(f[2]);
      r.out_of_track_pct = std::stod(f[3]);
      r.n_eff_mean = std::stod(f[4]);
      r.degenerate_runs = std::stoi(f[5]);
      r.fallback_rate = std::stod(f[6]);
      r.mode_iters_mean = std::stod(f[7]);
      r.cap_hits = std::stoi(f[8]);
      r.repairs = std::stoi(f[9]);
    } catch (const std::exception&) {
      throw ConfigError("malformed row in '" + path + "': " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

json summary_json(const ExperimentResult& result) {
  json j;
  json fs = json::array();
  for (const FilterSummary& s : result.summary)
    fs.push_back({{"filter", s.filter},
                  {"rmse_time_avg", s.rmse_time_avg},
                  {"out_of_track_time_avg", s.out_of_track_time_avg},
                  {"out_of_track_final", s.out_of_track_final},
                  {"n_eff_mean", s.n_eff_mean},
                  {"degenerate_steps", s.degenerate_steps},
                  {"fallbacks", s.fallbacks}});
  j["filters"] = fs;
  j["manifest"] = result.manifest;
  return j;
}

void write_outputs(const std::string& dir, const ExperimentResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
  write_metrics_csv(dir + "/metrics.csv", result);
  std::ofstream js(dir + "/summary.json");
  if (!js) throw ConfigError("cannot write '" + dir + "/summary.json'");
  js << summary_json(result).dump(2) << '\n';
}

}  // namespace pfeis
