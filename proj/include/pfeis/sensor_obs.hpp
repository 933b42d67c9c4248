#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pfeis/rng.hpp"

namespace pfeis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class HKind { Linear, Squared };
enum class FailKind { Uniform, GaussIndep, GaussDep };

// Failure pdf p_f(Y | C_p).
//   Uniform:    p1 = lo,    p2 = hi
//   GaussIndep: p1 = mean,  p2 = variance
//   GaussDep:   p1 = slope, p2 = variance  (mean = slope * C_p)
struct FailModel {
  FailKind kind = FailKind::Uniform;
  double p1 = -10.0;
  double p2 = 10.0;
};

struct SensorSpec {
  Mat alpha;          // M x J failure probabilities
  Vec sigma_obs2;     // M working-sensor noise variances
  std::vector<HKind> h;
  FailModel fail;

  int M() const { return static_cast<int>(alpha.rows()); }
  int J() const { return static_cast<int>(alpha.cols()); }
  void validate() const;

  static SensorSpec linear_gaussian(int M, int J, double sigma2);
};

struct Observation {
  Mat Y;                 // M x J readings
  Eigen::MatrixXi failed;  // 1 where the reading came from the failure pdf (diagnostics only)
};

double h_value(HKind k, double c);

Observation sample_observation(const SensorSpec& spec, const Vec& C, Rng& rng);

double ol_loglik(const SensorSpec& spec, const Observation& Y, const Vec& C);
// Contribution of node p (all its sensors) at temperature c.
double node_loglik(const SensorSpec& spec, const Observation& Y, int p, double c);

// Energy E = -log p(Y|C) with additive constant zero. The Hessian is
// diagonal since every node term depends on C_p only, so only the diagonal
// is returned by energy_terms.
struct EnergyTerms {
  double E = 0.0;
  Vec grad;
  Vec hess_diag;
};

EnergyTerms energy_terms(const SensorSpec& spec, const Observation& Y, const Vec& C,
                         bool want_derivs = true);
double energy(const SensorSpec& spec, const Observation& Y, const Vec& C);
Vec grad_energy(const SensorSpec& spec, const Observation& Y, const Vec& C);
Mat hess_energy(const SensorSpec& spec, const Observation& Y, const Vec& C);

HKind parse_hkind(const std::string& s);
FailKind parse_failkind(const std::string& s);
std::string to_string(HKind k);
std::string to_string(FailKind k);

}  // namespace pfeis
