#include "pfeis/config.hpp"

#include <fstream>
#include <sstream>

#include "pfeis/errors.hpp"

namespace pfeis {

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field '" + path + key + "'");
  return j.at(key);
}

double get_number(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number()) throw ConfigError("field '" + path + key + "' must be a number");
  return v.get<double>();
}

double get_number_or(const json& j, const std::string& key, const std::string& path, double dflt) {
  if (!j.contains(key)) return dflt;
  return get_number(j, key, path);
}

int get_int(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number_integer()) throw ConfigError("field '" + path + key + "' must be an integer");
  return v.get<int>();
}

Vec to_vec(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError("field '" + where + "' must be an array of numbers");
  Vec out(v.size());
  for (size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number()) throw ConfigError("field '" + where + "' must be an array of numbers");
    out[k] = v[k].get<double>();
  }
  return out;
}

Mat to_mat(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError("field '" + where + "' must be a non-empty array of rows");
  Vec first = to_vec(v[0], where + "[0]");
  Mat out(v.size(), first.size());
  for (size_t r = 0; r < v.size(); ++r) {
    Vec row = to_vec(v[r], where + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) throw ConfigError("field '" + where + "' has ragged rows");
    out.row(r) = row.transpose();
  }
  return out;
}

std::vector<int> to_indices(const json& v, int M, const std::string& where) {
  if (!v.is_array()) throw ConfigError("field '" + where + "' must be an array of 1-based indices");
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer()) throw ConfigError("field '" + where + "' must hold integers");
    int k = e.get<int>();
    if (k < 1 || k > M) throw ConfigError("field '" + where + "': index out of range 1.." + std::to_string(M));
    out.push_back(k - 1);
  }
  return out;
}

Mat parse_basis(const json& b, int M, bool orthonormalize) {
  Mat B;
  if (b.is_string()) {
    if (b.get<std::string>() != "identity") throw ConfigError("field 'model.B': unknown basis '" + b.get<std::string>() + "'");
    B = Mat::Identity(M, M);
  } else if (b.contains("columns")) {
    B = to_mat(b.at("columns"), "model.B.columns").transpose();
  } else if (b.contains("rows")) {
    B = to_mat(b.at("rows"), "model.B.rows");
  } else if (b.contains("householder_first_row")) {
    Vec r = to_vec(b.at("householder_first_row"), "model.B.householder_first_row");
    if (r.size() != M) throw ConfigError("field 'model.B.householder_first_row' must have M entries");
    B = householder_basis(r);
  } else if (b.contains("eigen_of")) {
    B = eigen_basis(to_mat(b.at("eigen_of"), "model.B.eigen_of")).B;
  } else {
    throw ConfigError("field 'model.B' must be \"identity\" or hold columns|rows|householder_first_row|eigen_of");
  }
  if (B.rows() != M || B.cols() != M) throw ConfigError("field 'model.B' must be M x M");
  if (orthonormalize) B = nearest_orthogonal(B);
  return B;
}

}  // namespace

SensorSpec parse_sensors(const json& j, int M, const std::string& path) {
  SensorSpec s;
  Mat alpha = to_mat(require(j, "alpha", path), path + "alpha");
  if (alpha.rows() != M) throw ConfigError("field '" + path + "alpha' needs one row per node");
  s.alpha = alpha;
  const json& sig = require(j, "sigma_obs2", path);
  if (sig.is_number())
    s.sigma_obs2 = Vec::Constant(M, sig.get<double>());
  else
    s.sigma_obs2 = to_vec(sig, path + "sigma_obs2");
  if (j.contains("h")) {
    const json& h = j.at("h");
    if (h.is_string()) {
      s.h.assign(M, parse_hkind(h.get<std::string>()));
    } else {
      for (const json& e : h) s.h.push_back(parse_hkind(e.get<std::string>()));
    }
  } else {
    s.h.assign(M, HKind::Linear);
  }
  if (j.contains("failure")) {
    const json& f = j.at("failure");
    std::string fp = path + "failure.";
    FailKind k = parse_failkind(require(f, "kind", fp).get<std::string>());
    s.fail.kind = k;
    if (k == FailKind::Uniform) {
      s.fail.p1 = get_number(f, "lo", fp);
      s.fail.p2 = get_number(f, "hi", fp);
    } else if (k == FailKind::GaussIndep) {
      s.fail.p1 = get_number_or(f, "mean", fp, 0.0);
      s.fail.p2 = get_number(f, "var", fp);
    } else {
      s.fail.p1 = get_number(f, "slope", fp);
      s.fail.p2 = get_number(f, "var", fp);
    }
  }
  return s;
}

LdssModel parse_model(const json& root) {
  const json& m = require(root, "model", "");
  LdssModel model;
  int M = get_int(m, "M", "model.");
  if (M < 1) throw ConfigError("field 'model.M' must be >= 1");
  model.a = get_number_or(m, "a", "model.", 1.0);
  model.delta_nu = to_vec(require(m, "delta_nu", "model."), "model.delta_nu");
  bool orth = m.value("orthonormalize", false);
  model.B = m.contains("B") ? parse_basis(m.at("B"), M, orth) : Mat::Identity(M, M);
  model.C0 = m.contains("C0") ? to_vec(m.at("C0"), "model.C0") : Vec::Zero(M);
  model.obs = parse_sensors(require(root, "sensors", ""), M, "sensors.");
  if (model.delta_nu.size() != M) throw ConfigError("field 'model.delta_nu' must have M entries");
  model.validate();
  return model;
}

FilterSpec parse_filter(const json& j, int M, const std::string& path) {
  FilterSpec f;
  f.kind = parse_filterkind(require(j, "kind", path).get<std::string>());
  f.name = j.value("name", to_string(f.kind));
  std::vector<int> s = j.contains("s") ? to_indices(j.at("s"), M, path + "s") : std::vector<int>{};
  std::vector<int> rr = j.contains("rr") ? to_indices(j.at("rr"), M, path + "rr") : std::vector<int>{};
  switch (f.kind) {
    case FilterKind::Original: f.part = FilterSpec::original(M).part; break;
    case FilterKind::Doucet: f.part = StatePartition::make(M, {}); break;
    case FilterKind::MT:
      f.part = j.contains("rr") ? StatePartition::make(M, s, rr) : FilterSpec::mt(M, s).part;
      break;
    default: f.part = StatePartition::make(M, s, rr); break;
  }
  f.onfly = j.value("onfly", false);
  if (f.onfly) {
    f.onfly_K = j.value("K", 1);
    f.onfly_threshold = j.value("threshold", 0.0);
  }
  f.validate(M);
  return f;
}

void ExperimentConfig::validate() const {
  if (n_runs < 1) throw ConfigError("field 'n_runs' must be >= 1");
  if (!(in_track_threshold > 0.0)) throw ConfigError("field 'in_track_threshold' must be > 0");
  if (N < 1) throw ConfigError("field 'N' must be >= 1");
  if (T < 1) throw ConfigError("field 'T' must be >= 1");
  if (filters.empty()) throw ConfigError("field 'filters' must list at least one filter");
  model.validate();
  truth.validate();
  for (const FilterSpec& f : filters) f.validate(model.M());
}

ExperimentConfig parse_experiment(const json& root) {
  ExperimentConfig c;
  c.name = root.value("name", "experiment");
  c.model = parse_model(root);
  c.truth = c.model;
  const int M = c.model.M();
  if (root.contains("truth_sensors")) {
    json merged = root.at("sensors");
    for (auto& [k, v] : root.at("truth_sensors").items()) merged[k] = v;
    c.truth.obs = parse_sensors(merged, M, "truth_sensors.");
  }
  const json& fl = require(root, "filters", "");
  if (!fl.is_array()) throw ConfigError("field 'filters' must be an array");
  for (size_t k = 0; k < fl.size(); ++k)
    c.filters.push_back(parse_filter(fl[k], M, "filters[" + std::to_string(k) + "]."));
  c.N = get_int(root, "N", "");
  c.T = get_int(root, "T", "");
  c.n_runs = get_int(root, "n_runs", "");
  if (root.contains("seed")) c.seed = root.at("seed").get<std::uint64_t>();
  c.in_track_threshold = get_number(root, "in_track_threshold", "");
  if (root.contains("resampling")) c.scheme = parse_resampling(root.at("resampling").get<std::string>());
  std::uint64_t h = 0;
  for (char ch : root.dump()) h = mix64(h ^ static_cast<unsigned char>(ch));
  std::ostringstream os;
  os << std::hex << h;
  c.source_hash = os.str();
  c.validate();
  return c;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

ExperimentConfig load_experiment(const std::string& path) {
  try {
    return parse_experiment(load_json(path));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

CondPosterior DeltaStarInstance::posterior() const {
  StatePartition part = StatePartition::make(model.M(), s);
  std::vector<int> r = part.residual();
  CondPosterior p;
  p.obs = &model.obs;
  p.Y = &Y;
  p.C_tilde = C_prev;
  for (int k = 0; k < part.K(); ++k) p.C_tilde += model.B.col(s[k]) * v_s[k];
  p.B_r = select_columns(model.B, r);
  p.f_r = select(Vec(model.a * v_prev), r);
  p.Delta_r = Delta_r ? *Delta_r : select(model.delta_nu, r);
  return p;
}

GridSpec DeltaStarInstance::grid() const {
  CondPosterior p = posterior();
  double hw = half_width > 0.0 ? half_width : 6.0 * std::sqrt(model.delta_nu.maxCoeff());
  return GridSpec::around(p.f_r, hw, grid_n);
}

DeltaStarInstance parse_delta_star_instance(const json& root) {
  DeltaStarInstance d;
  try {
    d.model = parse_model(root);
    const int M = d.model.M();
    d.C_prev = root.contains("C_prev") ? to_vec(root.at("C_prev"), "C_prev") : d.model.C0;
    d.v_prev = root.contains("v_prev") ? to_vec(root.at("v_prev"), "v_prev") : Vec::Zero(M);
    d.s = root.contains("s") ? to_indices(root.at("s"), M, "s") : std::vector<int>{};
    d.v_s = root.contains("v_s") ? to_vec(root.at("v_s"), "v_s") : Vec::Zero(d.s.size());
    if (d.v_s.size() != static_cast<int>(d.s.size())) throw ConfigError("field 'v_s' must match 's'");
    if (d.C_prev.size() != M || d.v_prev.size() != M) throw ConfigError("fields 'C_prev'/'v_prev' must have M entries");
    d.Y.Y = to_mat(require(root, "Y", ""), "Y");
    if (d.Y.Y.rows() != M || d.Y.Y.cols() != d.model.obs.J())
      throw ConfigError("field 'Y' must be M rows of J readings");
    d.Y.failed = Eigen::MatrixXi::Zero(M, d.model.obs.J());
    if (root.contains("Delta_r")) d.Delta_r = to_vec(root.at("Delta_r"), "Delta_r");
    d.epsilon0 = root.value("epsilon0", 0.0);
    if (root.contains("grid")) {
      d.grid_n = root.at("grid").value("n", 201);
      d.half_width = root.at("grid").value("half_width", 0.0);
    }
    int Mr = M - static_cast<int>(d.s.size());
    if (d.Delta_r && d.Delta_r->size() != Mr) throw ConfigError("field 'Delta_r' must have M_r entries");
    if (Mr < 1 || Mr > 3) throw ConfigError("delta-star needs 1 <= M_r <= 3");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("instance: ") + e.what());
  }
  return d;
}

}  // namespace pfeis
