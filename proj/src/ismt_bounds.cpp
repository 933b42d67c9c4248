#include "pfeis/ismt_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfeis/errors.hpp"

namespace pfeis {

void BoundQuery::validate() const {
  if (!(eps > 0.0)) throw ConfigError("bounds: eps must be > 0");
  if (!(eps2 > 0.0 && eps2 < 1.0)) throw ConfigError("bounds: eps2 must lie in (0, 1)");
  if (M_rr < 1) throw ConfigError("bounds: M_rr must be >= 1");
  if (!(delta_m >= 0.0)) throw ConfigError("bounds: delta_m must be >= 0");
}

double kappa(double x) { return x < 3.0 / 8.0 ? 4.0 * x / 9.0 : x; }

double vp_tail_bound(const BoundQuery& q) {
  double ratio = q.M_rr * q.delta_m / (q.eps * q.eps);
  double k = std::min(1.0, kappa(ratio));
  double b = 1.0 - std::pow(1.0 - k, q.M_rr);
  return std::clamp(b, 0.0, 1.0);
}

double chernoff_tail_bound(const BoundQuery& q) {
  if (q.delta_m <= 0.0) return 0.0;
  double r = q.eps * q.eps / (q.M_rr * q.delta_m);
  if (r <= 1.0) return 1.0;
  // log form avoids overflow of r and underflow of the exponential
  double logb = 0.5 * q.M_rr * (std::log(r) - (r - 1.0));
  return std::clamp(std::exp(logb), 0.0, 1.0);
}

double trace_threshold(double eps1, double eps2, int M) {
  if (!(eps1 > 0.0 && eps2 > 0.0 && M > 0)) throw ConfigError("trace_threshold: positive inputs required");
  return eps1 * eps1 * eps2 / M;
}

double trace_proof_bound(double trace, double eps1, int M) {
  return 4.0 * M * trace / (9.0 * eps1 * eps1);
}

MrrChoice choose_mrr(const Vec& variances, double eps, double eps2, MrrMode mode, BoundKind kind,
                     const Vec* lambda_spectrum) {
  const Vec& vals = (mode == MrrMode::Online && lambda_spectrum) ? *lambda_spectrum : variances;
  for (int k = 0; k < vals.size(); ++k)
    if (!(vals[k] > 0.0)) throw ConfigError("choose_mrr: variances must be > 0");
  std::vector<int> order(vals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });

  MrrChoice out;
  out.kind = kind;
  for (int m = static_cast<int>(vals.size()); m >= 1; --m) {
    double dm = 0.0, tr = 0.0;
    for (int k = 0; k < m; ++k) {
      dm = std::max(dm, vals[order[k]]);
      tr += vals[order[k]];
    }
    BoundQuery q{eps, eps2, m, dm, NormKind::Max};
    double b = 1.0;
    switch (kind) {
      case BoundKind::VP: b = vp_tail_bound(q); break;
      case BoundKind::Chernoff: b = chernoff_tail_bound(q); break;
      case BoundKind::Trace: b = trace_proof_bound(tr, eps, m); break;
    }
    if (b < eps2) {
      out.M_rr = m;
      out.indices.assign(order.begin(), order.begin() + m);
      out.bound = b;
      return out;
    }
  }
  return out;
}

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::VP: return "vp";
    case BoundKind::Chernoff: return "chernoff";
    case BoundKind::Trace: return "trace";
  }
  return "?";
}

BoundKind parse_boundkind(const std::string& s) {
  if (s == "vp") return BoundKind::VP;
  if (s == "chernoff") return BoundKind::Chernoff;
  if (s == "trace") return BoundKind::Trace;
  throw ConfigError("unknown bound '" + s + "' (expected vp|chernoff|trace)");
}

}  // namespace pfeis
