#pragma once

#include <string>
#include <vector>

#include "pfeis/sensor_obs.hpp"

namespace pfeis {

enum class NormKind { Euclidean, Max };
enum class BoundKind { VP, Chernoff, Trace };

struct BoundQuery {
  double eps = 1.0;
  double eps2 = 0.05;
  int M_rr = 1;
  double delta_m = 0.0;
  NormKind norm = NormKind::Max;
  void validate() const;
};

double kappa(double x);

// Pr(max_p |e_p| > eps) <= 1 - [1 - min(1, kappa(M_rr delta_m / eps^2))]^M_rr
double vp_tail_bound(const BoundQuery& q);

// Pr(|e|_2 > eps) <= [(M_rr delta_m / eps^2)^-1 exp(-(eps^2/(M_rr delta_m) - 1))]^(M_rr/2)
double chernoff_tail_bound(const BoundQuery& q);

// trace(Sigma) budget eps1^2 eps2 / M.
double trace_threshold(double eps1, double eps2, int M);
// Bound 4 M trace / (9 eps1^2) on Pr(|e| > eps1) implied by the trace condition.
double trace_proof_bound(double trace, double eps1, int M);

enum class MrrMode { Offline, Online };

struct MrrChoice {
  int M_rr = 0;
  std::vector<int> indices;  // positions in the input vector, smallest variances first
  double bound = 1.0;        // value of the bound that authorized M_rr
  BoundKind kind = BoundKind::VP;
};

// Start from M_rr = M_r and drop the largest remaining variance until the bound
// falls below eps2. Online mode takes the eigenvalue spectrum in place of variances.
MrrChoice choose_mrr(const Vec& variances, double eps, double eps2, MrrMode mode = MrrMode::Offline,
                     BoundKind kind = BoundKind::VP, const Vec* lambda_spectrum = nullptr);

std::string to_string(BoundKind k);
BoundKind parse_boundkind(const std::string& s);

}  // namespace pfeis
