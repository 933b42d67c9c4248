#include "pfeis/sensor_obs.hpp"

#include <cmath>
#include <limits>

#include "pfeis/errors.hpp"

namespace pfeis {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double h_deriv(HKind k, double c) { return k == HKind::Linear ? 1.0 : 2.0 * c; }
double h_deriv2(HKind k) { return k == HKind::Linear ? 0.0 : 2.0; }

struct FailTerm {
  double logf;
  double d1;  // d/dc log p_f
  double d2;  // d2/dc2 log p_f
};

FailTerm fail_term(const FailModel& f, double y, double c) {
  switch (f.kind) {
    case FailKind::Uniform:
      if (y < f.p1 || y > f.p2) return {kNegInf, 0.0, 0.0};
      return {-std::log(f.p2 - f.p1), 0.0, 0.0};
    case FailKind::GaussIndep: {
      double r = y - f.p1;
      return {-0.5 * (kLog2Pi + std::log(f.p2)) - r * r / (2.0 * f.p2), 0.0, 0.0};
    }
    case FailKind::GaussDep: {
      double r = y - f.p1 * c;
      return {-0.5 * (kLog2Pi + std::log(f.p2)) - r * r / (2.0 * f.p2), r * f.p1 / f.p2,
              -f.p1 * f.p1 / f.p2};
    }
  }
  return {kNegInf, 0.0, 0.0};
}

}  // namespace

void SensorSpec::validate() const {
  const int m = M();
  if (m < 1 || J() < 1) throw ConfigError("sensors: need at least one node and one sensor");
  if (sigma_obs2.size() != m) throw ConfigError("sensors.sigma_obs2: length must equal M");
  if (static_cast<int>(h.size()) != m) throw ConfigError("sensors.h: length must equal M");
  for (int p = 0; p < m; ++p) {
    if (!(sigma_obs2[p] > 0.0)) throw ConfigError("sensors.sigma_obs2: entries must be > 0");
    for (int j = 0; j < J(); ++j)
      if (!(alpha(p, j) >= 0.0 && alpha(p, j) <= 1.0))
        throw ConfigError("sensors.alpha: entries must lie in [0, 1]");
  }
  if (fail.kind == FailKind::Uniform && !(fail.p1 < fail.p2))
    throw ConfigError("sensors.failure: uniform needs lo < hi");
  if (fail.kind != FailKind::Uniform && !(fail.p2 > 0.0))
    throw ConfigError("sensors.failure: var must be > 0");
}

SensorSpec SensorSpec::linear_gaussian(int M, int J, double sigma2) {
  SensorSpec s;
  s.alpha = Mat::Zero(M, J);
  s.sigma_obs2 = Vec::Constant(M, sigma2);
  s.h.assign(M, HKind::Linear);
  s.fail = {FailKind::Uniform, -10.0, 10.0};
  return s;
}

double h_value(HKind k, double c) { return k == HKind::Linear ? c : c * c; }

Observation sample_observation(const SensorSpec& spec, const Vec& C, Rng& rng) {
  const int m = spec.M(), J = spec.J();
  Observation obs;
  obs.Y.resize(m, J);
  obs.failed = Eigen::MatrixXi::Zero(m, J);
  for (int p = 0; p < m; ++p) {
    for (int j = 0; j < J; ++j) {
      double u = rng.uniform();
      double z = rng.normal();
      double w = rng.uniform();
      if (u < spec.alpha(p, j)) {
        obs.failed(p, j) = 1;
        const FailModel& f = spec.fail;
        switch (f.kind) {
          case FailKind::Uniform: obs.Y(p, j) = f.p1 + (f.p2 - f.p1) * w; break;
          case FailKind::GaussIndep: obs.Y(p, j) = f.p1 + std::sqrt(f.p2) * z; break;
          case FailKind::GaussDep: obs.Y(p, j) = f.p1 * C[p] + std::sqrt(f.p2) * z; break;
        }
      } else {
        obs.Y(p, j) = h_value(spec.h[p], C[p]) + std::sqrt(spec.sigma_obs2[p]) * z;
      }
    }
  }
  return obs;
}

namespace {

// Adds node p's energy and derivatives.
void node_terms(const SensorSpec& spec, const Observation& Y, int p, double c, bool want_derivs,
                double* E, double* g, double* h) {
  const int J = spec.J();
  const double s2 = spec.sigma_obs2[p];
  const double hv = h_value(spec.h[p], c);
  const double hd = h_deriv(spec.h[p], c);
  const double hdd = h_deriv2(spec.h[p]);
  for (int j = 0; j < J; ++j) {
    const double y = Y.Y(p, j);
    const double a = spec.alpha(p, j);
    const double r = y - hv;
    double lg = a < 1.0 ? std::log1p(-a) - 0.5 * (kLog2Pi + std::log(s2)) - r * r / (2.0 * s2)
                        : kNegInf;
    FailTerm ft = fail_term(spec.fail, y, c);
    double lf = a > 0.0 ? std::log(a) + ft.logf : kNegInf;
    double mx = std::max(lg, lf);
    if (mx == kNegInf) {
      *E = std::numeric_limits<double>::infinity();
      continue;
    }
    double lse = mx + std::log(std::exp(lg - mx) + std::exp(lf - mx));
    *E -= lse;
    if (!want_derivs) continue;
    double wg = std::exp(lg - lse);
    double wf = std::exp(lf - lse);
    double g1 = r * hd / s2;
    double g2 = (-hd * hd + r * hdd) / s2;
    double d1 = wg * g1 + wf * ft.d1;
    double d2 = wg * (g2 + g1 * g1) + wf * (ft.d2 + ft.d1 * ft.d1) - d1 * d1;
    *g -= d1;
    *h -= d2;
  }
}

}  // namespace

EnergyTerms energy_terms(const SensorSpec& spec, const Observation& Y, const Vec& C,
                         bool want_derivs) {
  const int m = spec.M();
  EnergyTerms out;
  out.grad = Vec::Zero(want_derivs ? m : 0);
  out.hess_diag = Vec::Zero(want_derivs ? m : 0);
  double g = 0.0, h = 0.0;
  for (int p = 0; p < m; ++p) {
    double* gp = want_derivs ? &out.grad[p] : &g;
    double* hp = want_derivs ? &out.hess_diag[p] : &h;
    node_terms(spec, Y, p, C[p], want_derivs, &out.E, gp, hp);
  }
  return out;
}

double node_loglik(const SensorSpec& spec, const Observation& Y, int p, double c) {
  double E = 0.0, g = 0.0, h = 0.0;
  node_terms(spec, Y, p, c, false, &E, &g, &h);
  return -E;
}

double ol_loglik(const SensorSpec& spec, const Observation& Y, const Vec& C) {
  return -energy_terms(spec, Y, C, false).E;
}

double energy(const SensorSpec& spec, const Observation& Y, const Vec& C) {
  return energy_terms(spec, Y, C, false).E;
}

Vec grad_energy(const SensorSpec& spec, const Observation& Y, const Vec& C) {
  return energy_terms(spec, Y, C).grad;
}

Mat hess_energy(const SensorSpec& spec, const Observation& Y, const Vec& C) {
  return energy_terms(spec, Y, C).hess_diag.asDiagonal();
}

HKind parse_hkind(const std::string& s) {
  if (s == "linear") return HKind::Linear;
  if (s == "squared") return HKind::Squared;
  throw ConfigError("unknown sensor function '" + s + "' (expected linear|squared)");
}

FailKind parse_failkind(const std::string& s) {
  if (s == "uniform") return FailKind::Uniform;
  if (s == "gauss_indep") return FailKind::GaussIndep;
  if (s == "gauss_dep") return FailKind::GaussDep;
  throw ConfigError("unknown failure kind '" + s + "' (expected uniform|gauss_indep|gauss_dep)");
}

std::string to_string(HKind k) { return k == HKind::Linear ? "linear" : "squared"; }

std::string to_string(FailKind k) {
  switch (k) {
    case FailKind::Uniform: return "uniform";
    case FailKind::GaussIndep: return "gauss_indep";
    case FailKind::GaussDep: return "gauss_dep";
  }
  return "?";
}

}  // namespace pfeis
