// pfeis: simulate data, run filter experiments, certify unimodality, evaluate IS-MT bounds.
#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "pfeis/config.hpp"
#include "pfeis/errors.hpp"
#include "pfeis/harness.hpp"
#include "pfeis/heuristics.hpp"
#include "pfeis/ismt_bounds.hpp"
#include "pfeis/unimodality.hpp"

using namespace pfeis;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* sub, Common& c, bool needs_config = true) {
  auto* opt = sub->add_option("--config", c.config, "JSON config file");
  if (needs_config) opt->required();
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
}

std::ostream& num(std::ostream& os) { return os << std::setprecision(10); }

int cmd_simulate(const Common& c, bool seed_set) {
  ExperimentConfig cfg = load_experiment(c.config);
  if (seed_set) cfg.seed = c.seed;
  Trajectory tr = simulate(cfg.truth, cfg.T, cfg.seed, 0);
  const int M = cfg.truth.M(), J = cfg.truth.obs.J();
  if (c.format == "json") {
    json j;
    j["seed"] = cfg.seed;
    j["T"] = cfg.T;
    json steps = json::array();
    for (int t = 0; t <= cfg.T; ++t) {
      json s;
      s["t"] = t;
      std::vector<double> C(M), v(M);
      for (int p = 0; p < M; ++p) {
        C[p] = tr.C(t, p);
        v[p] = tr.v(t, p);
      }
      s["C"] = C;
      s["v"] = v;
      if (t > 0) {
        std::vector<std::vector<double>> Y(M, std::vector<double>(J));
        std::vector<std::vector<int>> fl(M, std::vector<int>(J));
        for (int p = 0; p < M; ++p)
          for (int q = 0; q < J; ++q) {
            Y[p][q] = tr.Y[t].Y(p, q);
            fl[p][q] = tr.Y[t].failed(p, q);
          }
        s["Y"] = Y;
        s["failed"] = fl;
      }
      steps.push_back(s);
    }
    j["steps"] = steps;
    if (c.out.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      ensure_dir(c.out);
      std::ofstream(c.out + "/dataset.json") << j.dump(2) << '\n';
    }
    return 0;
  }
  std::ostringstream truth, obs;
  truth << "t";
  for (int p = 1; p <= M; ++p) truth << ",C" << p;
  for (int p = 1; p <= M; ++p) truth << ",v" << p;
  truth << '\n' << std::setprecision(17);
  for (int t = 0; t <= cfg.T; ++t) {
    truth << t;
    for (int p = 0; p < M; ++p) truth << ',' << tr.C(t, p);
    for (int p = 0; p < M; ++p) truth << ',' << tr.v(t, p);
    truth << '\n';
  }
  obs << "t,p,j,Y,failed\n" << std::setprecision(17);
  for (int t = 1; t <= cfg.T; ++t)
    for (int p = 0; p < M; ++p)
      for (int q = 0; q < J; ++q)
        obs << t << ',' << p + 1 << ',' << q + 1 << ',' << tr.Y[t].Y(p, q) << ',' << tr.Y[t].failed(p, q) << '\n';
  if (c.out.empty()) {
    std::cout << truth.str() << '\n' << obs.str();
  } else {
    ensure_dir(c.out);
    std::ofstream(c.out + "/truth.csv") << truth.str();
    std::ofstream(c.out + "/observations.csv") << obs.str();
  }
  return 0;
}

void print_summary(const std::vector<FilterSummary>& s, const std::string& format) {
  if (format == "json") {
    json a = json::array();
    for (const FilterSummary& f : s)
      a.push_back({{"filter", f.filter}, {"rmse_time_avg", f.rmse_time_avg},
                   {"out_of_track_time_avg", f.out_of_track_time_avg},
                   {"out_of_track_final", f.out_of_track_final}, {"n_eff_mean", f.n_eff_mean}});
    std::cout << a.dump(2) << '\n';
    return;
  }
  std::cout << "filter,rmse_time_avg,out_of_track_time_avg,out_of_track_final,n_eff_mean\n";
  for (const FilterSummary& f : s)
    std::cout << f.filter << ',' << num << f.rmse_time_avg << ',' << f.out_of_track_time_avg << ','
              << f.out_of_track_final << ',' << f.n_eff_mean << '\n';
}

int cmd_run(const Common& c, bool seed_set) {
  ExperimentConfig cfg = load_experiment(c.config);
  if (seed_set) cfg.seed = c.seed;
  ExperimentResult res = run_experiment(cfg, c.jobs);
  std::string out = c.out.empty() ? "results/" + cfg.name : c.out;
  write_outputs(out, res);
  print_summary(res.summary, c.format);
  std::cerr << "wrote " << out << "/metrics.csv and " << out << "/summary.json\n";
  return 0;
}

int cmd_delta_star(const Common& c) {
  DeltaStarInstance inst = parse_delta_star_instance(load_json(c.config));
  CondPosterior post = inst.posterior();
  GridSpec grid = inst.grid();
  UnimodalityCertificate cert = certify_instance(post, grid, inst.epsilon0);
  const int D = post.dim();
  std::vector<std::string> names;
  for (unsigned mask = 0; mask < (1u << D); ++mask) {
    std::string n;
    for (int p = 0; p < D; ++p) n += std::string(p ? "&" : "") + ((mask >> p) & 1 ? "Z" : "A") + std::to_string(p + 1);
    names.push_back(n);
  }
  if (c.format == "json") {
    json j;
    j["condition2"] = cert.condition2;
    j["epsilon0"] = cert.epsilon0;
    j["delta_star"] = std::isfinite(cert.delta_star) ? json(cert.delta_star) : json("inf");
    json rm;
    for (size_t k = 0; k < cert.region_minima.size(); ++k)
      rm[names[k]] = std::isfinite(cert.region_minima[k]) ? json(cert.region_minima[k]) : json("inf");
    j["region_minima"] = rm;
    j["rlc_lo"] = cert.rlc_lo;
    j["rlc_hi"] = cert.rlc_hi;
    j["certified"] = cert.certified;
    j["Delta_r"] = std::vector<double>(post.Delta_r.data(), post.Delta_r.data() + post.Delta_r.size());
    j["box_truncated"] = cert.box_truncated;
    json sens = json::array();
    for (auto& [e, d] : cert.sensitivity) sens.push_back({{"epsilon0", e}, {"delta_star", d}});
    j["sensitivity"] = sens;
    if (!cert.reason.empty()) j["reason"] = cert.reason;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "quantity,value\n" << num;
    std::cout << "condition2," << (cert.condition2 ? "true" : "false") << '\n';
    std::cout << "epsilon0," << cert.epsilon0 << '\n';
    for (size_t k = 0; k < cert.region_minima.size(); ++k)
      std::cout << "region_min_" << names[k] << ',' << cert.region_minima[k] << '\n';
    std::cout << "delta_star," << cert.delta_star << '\n';
    std::cout << "max_Delta_r," << post.Delta_r.maxCoeff() << '\n';
    std::cout << "certified," << (cert.certified ? "true" : "false") << '\n';
    std::cout << "box_truncated," << (cert.box_truncated ? "true" : "false") << '\n';
    for (auto& [e, d] : cert.sensitivity) std::cout << "delta_star_at_eps0=" << e << ',' << d << '\n';
  }
  if (!c.out.empty()) {
    // grid fields for external plotting
    ensure_dir(c.out);
    GridFields f = evaluate_fields(post, grid);
    std::vector<unsigned char> mask = classify_regions(post, f, cert.rlc, cert.epsilon0);
    std::ofstream g(c.out + "/grid.csv");
    g << std::setprecision(12);
    for (int p = 0; p < D; ++p) g << (p ? "," : "") << "v" << p + 1;
    for (int p = 0; p < D; ++p) g << ",gradE" << p + 1;
    for (int p = 0; p < D; ++p) g << ",region" << p + 1;
    g << ",in_rlc\n";
    for (long long k = 0; k < grid.size(); ++k) {
      std::vector<double> x = f.point(k);
      for (int p = 0; p < D; ++p) g << (p ? "," : "") << x[p];
      for (int p = 0; p < D; ++p) g << ',' << f.grad[k * D + p];
      for (int p = 0; p < D; ++p) g << ',' << "-AZ"[mask[k * D + p]];
      g << ',' << (cert.rlc.contains(f.unravel(k)) ? 1 : 0) << '\n';
    }
  }
  return 0;
}

int cmd_bounds(const Common& c) {
  json j = load_json(c.config);
  double eps = j.value("eps", 1.0);
  double eps2 = j.value("eps2", 0.05);
  BoundKind kind = parse_boundkind(j.value("bound", std::string("vp")));
  Vec vars;
  std::vector<int> idx;
  if (j.contains("variances")) {
    const json& a = j.at("variances");
    vars.resize(a.size());
    for (size_t k = 0; k < a.size(); ++k) vars[k] = a[k].get<double>();
  } else if (j.contains("model")) {
    LdssModel m = parse_model(j);
    std::vector<int> r;
    if (j.contains("residual")) {
      for (const json& e : j.at("residual")) r.push_back(e.get<int>() - 1);
    } else {
      for (int k = 0; k < m.M(); ++k) r.push_back(k);
    }
    for (int k : r)
      if (k < 0 || k >= m.M()) throw ConfigError("field 'residual': index out of range");
    vars = select(m.delta_nu, r);
    idx = r;
  } else {
    throw ConfigError("bounds config needs 'variances' or a 'model' block");
  }
  if (vars.size() == 0) throw ConfigError("bounds: no variances given");
  if (!(eps > 0) || !(eps2 > 0 && eps2 < 1)) throw ConfigError("bounds: need eps > 0 and 0 < eps2 < 1");
  Vec sorted = vars;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  json table = json::array();
  for (int m = 1; m <= sorted.size(); ++m) {
    BoundQuery q{eps, eps2, m, sorted[m - 1], NormKind::Max};
    double tr = sorted.head(m).sum();
    table.push_back({{"M_rr", m}, {"delta_m", q.delta_m}, {"vp", vp_tail_bound(q)},
                     {"chernoff", chernoff_tail_bound(q)}, {"trace_proof", trace_proof_bound(tr, eps, m)},
                     {"trace_threshold", trace_threshold(eps, eps2, m)}, {"trace", tr}});
  }
  MrrChoice ch = choose_mrr(vars, eps, eps2, MrrMode::Offline, kind);
  std::vector<int> chosen;
  for (int k : ch.indices) chosen.push_back((idx.empty() ? k : idx[k]) + 1);
  if (c.format == "json") {
    std::cout << json{{"eps", eps}, {"eps2", eps2}, {"table", table},
                      {"chosen", {{"bound", to_string(kind)}, {"M_rr", ch.M_rr}, {"indices", chosen}, {"value", ch.bound}}}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "M_rr,delta_m,vp,chernoff,trace,trace_threshold,trace_proof\n" << num;
    for (const json& r : table)
      std::cout << r["M_rr"].get<int>() << ',' << r["delta_m"].get<double>() << ',' << r["vp"].get<double>() << ','
                << r["chernoff"].get<double>() << ',' << r["trace"].get<double>() << ','
                << r["trace_threshold"].get<double>() << ',' << r["trace_proof"].get<double>() << '\n';
    std::cout << "chosen_M_rr(" << to_string(kind) << ")," << ch.M_rr << '\n';
    std::cout << "chosen_indices,";
    for (size_t k = 0; k < chosen.size(); ++k) std::cout << (k ? " " : "") << chosen[k];
    std::cout << '\n';
  }
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& format) {
  std::vector<FilterSummary> sa = summarize(read_metrics_csv(a));
  std::vector<FilterSummary> sb = summarize(read_metrics_csv(b));
  std::map<std::string, const FilterSummary*> mb;
  for (const FilterSummary& s : sb) mb[s.filter] = &s;
  json rows = json::array();
  for (const FilterSummary& s : sa) {
    json r{{"filter", s.filter}, {"rmse_a", s.rmse_time_avg}, {"oot_a", s.out_of_track_time_avg}};
    if (mb.count(s.filter)) {
      r["rmse_b"] = mb[s.filter]->rmse_time_avg;
      r["oot_b"] = mb[s.filter]->out_of_track_time_avg;
      r["rmse_diff"] = mb[s.filter]->rmse_time_avg - s.rmse_time_avg;
      mb.erase(s.filter);
    }
    rows.push_back(r);
  }
  for (auto& [name, s] : mb)
    rows.push_back({{"filter", name}, {"rmse_b", s->rmse_time_avg}, {"oot_b", s->out_of_track_time_avg}});
  if (format == "json") {
    std::cout << rows.dump(2) << '\n';
    return 0;
  }
  auto cell = [](const json& r, const char* k) {
    std::ostringstream os;
    if (r.contains(k)) os << std::setprecision(10) << r[k].get<double>();
    return os.str();
  };
  std::cout << "filter,rmse_a,rmse_b,rmse_diff,oot_a,oot_b\n";
  for (const json& r : rows)
    std::cout << r["filter"].get<std::string>() << ',' << cell(r, "rmse_a") << ',' << cell(r, "rmse_b") << ','
              << cell(r, "rmse_diff") << ',' << cell(r, "oot_a") << ',' << cell(r, "oot_b") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle filtering with efficient importance sampling and mode tracking"};
  app.require_subcommand(1);
  Common sim, run, ds, bd, cmp;
  auto* s_sim = app.add_subcommand("simulate", "Emit a truth/observation dataset");
  add_common(s_sim, sim);
  auto* s_run = app.add_subcommand("run", "Execute an experiment config");
  add_common(s_run, run);
  auto* s_ds = app.add_subcommand("delta-star", "Unimodality certificate for one instance");
  add_common(s_ds, ds);
  auto* s_bd = app.add_subcommand("bounds", "IS-MT tail bounds and the chosen M_rr");
  add_common(s_bd, bd);
  auto* s_cmp = app.add_subcommand("compare", "Tabulate two metrics files");
  std::vector<std::string> files;
  s_cmp->add_option("files", files, "Two metrics.csv files")->expected(2)->required();
  add_common(s_cmp, cmp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*s_sim) return cmd_simulate(sim, s_sim->count("--seed") > 0);
    if (*s_run) return cmd_run(run, s_run->count("--seed") > 0);
    if (*s_ds) return cmd_delta_star(ds);
    if (*s_bd) return cmd_bounds(bd);
    if (*s_cmp) return cmd_compare(files[0], files[1], cmp.format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
