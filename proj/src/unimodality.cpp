#include "pfeis/unimodality.hpp"

#include <algorithm>
#include <cmath>

#include "pfeis/errors.hpp"

namespace pfeis {

namespace {

constexpr double kConvexTol = -1e-10;

double smallest_eigenvalue(const Mat& H) {
  if (H.rows() == 1) return H(0, 0);
  if (H.rows() == 2) {
    double a = H(0, 0), b = H(0, 1), d = H(1, 1);
    return 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
  es.computeDirect(Eigen::Matrix3d(H), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

// Visit every index tuple inside [lo, hi] (inclusive).
template <class F>
void for_each_in_box(const std::vector<int>& lo, const std::vector<int>& hi, F&& f) {
  const int D = static_cast<int>(lo.size());
  for (int d = 0; d < D; ++d)
    if (lo[d] > hi[d]) return;
  std::vector<int> idx = lo;
  while (true) {
    f(idx);
    int d = 0;
    for (; d < D; ++d) {
      if (++idx[d] <= hi[d]) break;
      idx[d] = lo[d];
    }
    if (d == D) return;
  }
}

}  // namespace

long long GridSpec::size() const {
  long long s = 1;
  for (int k : n) s *= k;
  return s;
}

void GridSpec::validate() const {
  if (n.empty() || lo.size() != n.size() || hi.size() != n.size())
    throw ConfigError("grid: lo, hi and n must have the residual dimension");
  for (int d = 0; d < dim(); ++d) {
    if (!(lo[d] < hi[d])) throw ConfigError("grid: lo < hi required on every axis");
    if (n[d] < 21) throw ConfigError("grid: at least 21 points per axis");
  }
  if (size() > max_points) throw ConfigError("grid: total size exceeds the configured cap");
}

GridSpec GridSpec::around(const Vec& center, double half_width, int n) {
  GridSpec g;
  for (int d = 0; d < center.size(); ++d) {
    g.lo.push_back(center[d] - half_width);
    g.hi.push_back(center[d] + half_width);
    g.n.push_back(n);
  }
  return g;
}

GridSpec GridSpec::default_for(const Vec& f_r, double max_variance) {
  return around(f_r, 6.0 * std::sqrt(max_variance), 201);
}

bool IndexBox::contains(const std::vector<int>& idx) const {
  for (size_t d = 0; d < idx.size(); ++d)
    if (idx[d] < lo_idx[d] || idx[d] > hi_idx[d]) return false;
  return true;
}

std::vector<int> GridFields::unravel(long long k) const {
  std::vector<int> idx(grid.dim());
  for (int d = 0; d < grid.dim(); ++d) {
    idx[d] = static_cast<int>(k % grid.n[d]);
    k /= grid.n[d];
  }
  return idx;
}

long long GridFields::ravel(const std::vector<int>& idx) const {
  long long k = 0;
  for (int d = grid.dim() - 1; d >= 0; --d) k = k * grid.n[d] + idx[d];
  return k;
}

std::vector<double> GridFields::point(long long k) const {
  std::vector<int> idx = unravel(k);
  std::vector<double> x(idx.size());
  for (size_t d = 0; d < idx.size(); ++d) x[d] = grid.coord(static_cast<int>(d), idx[d]);
  return x;
}

GridFields evaluate_fields(const CondPosterior& spec, const GridSpec& grid) {
  grid.validate();
  if (grid.dim() != spec.dim()) throw ConfigError("grid: dimension must equal M_r");
  if (spec.dim() > 3) throw ConfigError("unimodality checker supports M_r <= 3");
  GridFields f;
  f.grid = grid;
  f.M_r = spec.dim();
  const long long npts = grid.size();
  f.grad.resize(npts * f.M_r);
  f.min_eig.resize(npts);
  Vec v(f.M_r), g;
  Mat H;
  for (long long k = 0; k < npts; ++k) {
    std::vector<double> x = f.point(k);
    for (int d = 0; d < f.M_r; ++d) v[d] = x[d];
    spec.energy_eval(v, nullptr, &g, &H);
    if (!g.allFinite() || !H.allFinite())
      throw NumericalError("unimodality: non-finite energy derivatives on the grid");
    for (int d = 0; d < f.M_r; ++d) f.grad[k * f.M_r + d] = g[d];
    f.min_eig[k] = smallest_eigenvalue(H);
  }
  return f;
}

bool compute_rlc(const CondPosterior& spec, const GridFields& fields, IndexBox* box) {
  const GridSpec& g = fields.grid;
  const int D = g.dim();
  std::vector<int> c(D);
  for (int d = 0; d < D; ++d) {
    double pos = (spec.f_r[d] - g.lo[d]) / g.spacing(d);
    if (pos < -0.5 || pos > g.n[d] - 0.5)
      throw ConfigError("compute_rlc: f_r lies outside the grid box");
    c[d] = std::clamp(static_cast<int>(std::lround(pos)), 0, g.n[d] - 1);
  }
  box->lo_idx = c;
  box->hi_idx = c;
  if (fields.min_eig[fields.ravel(c)] < kConvexTol) return false;

  auto slab_convex = [&](const std::vector<int>& lo, const std::vector<int>& hi) {
    bool ok = true;
    for_each_in_box(lo, hi, [&](const std::vector<int>& idx) {
      if (ok && fields.min_eig[fields.ravel(idx)] < kConvexTol) ok = false;
    });
    return ok;
  };

  bool grown = true;
  while (grown) {
    grown = false;
    for (int d = 0; d < D; ++d) {
      if (box->lo_idx[d] > 0) {
        std::vector<int> lo = box->lo_idx, hi = box->hi_idx;
        lo[d] -= 1;
        hi[d] = lo[d];
        if (slab_convex(lo, hi)) {
          box->lo_idx[d] -= 1;
          grown = true;
        }
      }
      if (box->hi_idx[d] < g.n[d] - 1) {
        std::vector<int> lo = box->lo_idx, hi = box->hi_idx;
        hi[d] += 1;
        lo[d] = hi[d];
        if (slab_convex(lo, hi)) {
          box->hi_idx[d] += 1;
          grown = true;
        }
      }
    }
  }
  return true;
}

double default_epsilon0(const GridFields& fields) {
  const GridSpec& g = fields.grid;
  const int D = g.dim();
  const long long npts = g.size();
  double eps = 0.0;
  double max_change = 0.0;
  for (long long k = 0; k < npts; ++k) {
    std::vector<int> idx = fields.unravel(k);
    for (int ax = 0; ax < D; ++ax) {
      if (idx[ax] + 1 >= g.n[ax]) continue;
      std::vector<int> nb = idx;
      nb[ax] += 1;
      long long k2 = fields.ravel(nb);
      for (int p = 0; p < D; ++p) {
        double a = fields.grad[k * D + p], b = fields.grad[k2 * D + p];
        max_change = std::max(max_change, std::abs(std::abs(a) - std::abs(b)));
        if (a * b < 0.0) eps = std::max(eps, std::min(std::abs(a), std::abs(b)));
      }
    }
  }
  // No sign change anywhere: fall back to the grid-variation scale.
  if (eps == 0.0) eps = 2.0 * max_change;
  if (eps == 0.0) eps = 1e-12;
  return eps * (1.0 + 1e-9);
}

std::vector<unsigned char> classify_regions(const CondPosterior& spec, const GridFields& fields,
                                            const IndexBox& rlc, double epsilon0) {
  if (!(epsilon0 > 0.0)) throw ConfigError("classify_regions: epsilon0 must be > 0");
  const int D = fields.M_r;
  const long long npts = fields.grid.size();
  std::vector<unsigned char> mask(npts * D, 0);
  for (long long k = 0; k < npts; ++k) {
    std::vector<int> idx = fields.unravel(k);
    if (rlc.contains(idx)) continue;
    for (int p = 0; p < D; ++p) {
      double dv = fields.grid.coord(p, idx[p]) - spec.f_r[p];
      double gp = fields.grad[k * D + p];
      double prod = dv * gp;
      if (prod < 0.0)
        mask[k * D + p] = 1;
      else if (std::abs(gp) < epsilon0)
        mask[k * D + p] = 2;
    }
  }
  return mask;
}

DeltaStarResult delta_star(const CondPosterior& spec, const GridFields& fields,
                           const IndexBox& rlc, double epsilon0) {
  const int D = fields.M_r;
  const long long npts = fields.grid.size();
  std::vector<unsigned char> mask = classify_regions(spec, fields, rlc, epsilon0);
  DeltaStarResult res;
  res.region_minima.assign(1u << D, std::numeric_limits<double>::infinity());
  for (long long k = 0; k < npts; ++k) {
    unsigned region = 0;
    double gmax = 0.0;
    bool feasible = true;
    std::vector<int> idx;
    for (int p = 0; p < D && feasible; ++p) {
      unsigned char m = mask[k * D + p];
      if (m == 0) {
        feasible = false;
        break;
      }
      if (idx.empty()) idx = fields.unravel(k);
      double dv = std::abs(fields.grid.coord(p, idx[p]) - spec.f_r[p]);
      double ga = std::abs(fields.grad[k * D + p]);
      double gamma;
      if (m == 1) {
        gamma = dv / (epsilon0 + ga);
      } else {
        gamma = dv / (epsilon0 - ga);
        region |= 1u << p;
      }
      gmax = std::max(gmax, gamma);
    }
    if (!feasible) continue;
    if (gmax < res.region_minima[region]) res.region_minima[region] = gmax;
    if (gmax < res.delta_star) {
      res.delta_star = gmax;
      res.argmin = k;
    }
  }
  return res;
}

bool certify(double delta_star, const Vec& Delta_r) { return Delta_r.maxCoeff() < delta_star; }

UnimodalityCertificate certify_instance(const CondPosterior& spec, const GridSpec& grid,
                                        double epsilon0) {
  UnimodalityCertificate cert;
  GridFields fields = evaluate_fields(spec, grid);
  cert.condition2 = compute_rlc(spec, fields, &cert.rlc);
  if (!cert.condition2) {
    cert.reason = "energy is not locally convex at f_r";
    cert.delta_star = 0.0;
    cert.certified = false;
    return cert;
  }
  for (int d = 0; d < grid.dim(); ++d) {
    cert.rlc_lo.push_back(grid.coord(d, cert.rlc.lo_idx[d]));
    cert.rlc_hi.push_back(grid.coord(d, cert.rlc.hi_idx[d]));
  }
  cert.epsilon0 = epsilon0 > 0.0 ? epsilon0 : default_epsilon0(fields);
  DeltaStarResult ds = delta_star(spec, fields, cert.rlc, cert.epsilon0);
  cert.delta_star = ds.delta_star;
  cert.region_minima = ds.region_minima;
  if (ds.argmin >= 0) {
    cert.argmin = fields.point(ds.argmin);
    std::vector<int> idx = fields.unravel(ds.argmin);
    for (int d = 0; d < grid.dim(); ++d)
      if (idx[d] == 0 || idx[d] == grid.n[d] - 1) cert.box_truncated = true;
  }
  for (double f : {0.5, 2.0}) {
    double e = cert.epsilon0 * f;
    cert.sensitivity.emplace_back(e, delta_star(spec, fields, cert.rlc, e).delta_star);
  }
  cert.certified = spec.Delta_r.size() == spec.dim() && certify(cert.delta_star, spec.Delta_r);
  if (!cert.certified) cert.reason = "max Delta_r is not below delta_star";
  return cert;
}

CondPosterior nondiag_transform(const CondPosterior& spec, const Mat& Sigma_r, Mat* U_out) {
  if (Sigma_r.rows() != spec.dim() || Sigma_r.cols() != spec.dim())
    throw ConfigError("nondiag_transform: Sigma_r must be M_r x M_r");
  EigenBasis eb = eigen_basis(Sigma_r);
  if (!(eb.delta_nu.minCoeff() > 0.0)) throw ConfigError("nondiag_transform: Sigma_r must be SPD");
  CondPosterior out = spec;
  out.B_r = spec.B_r * eb.B;
  out.f_r = eb.B.transpose() * spec.f_r;
  out.Delta_r = eb.delta_nu;
  if (U_out) *U_out = eb.B;
  return out;
}

StationaryCount count_stationary_points(const CondPosterior& spec, const GridSpec& grid) {
  grid.validate();
  const int D = spec.dim();
  if (D < 1 || D > 2) throw ConfigError("count_stationary_points: residual dimension must be 1 or 2");
  if (grid.dim() != D) throw ConfigError("grid: dimension must equal M_r");
  const long long npts = grid.size();
  std::vector<double> gl(npts * D);
  GridFields shape;
  shape.grid = grid;
  shape.M_r = D;
  Vec v(D), g;
  for (long long k = 0; k < npts; ++k) {
    std::vector<double> x = shape.point(k);
    for (int d = 0; d < D; ++d) v[d] = x[d];
    spec.eval(v, nullptr, &g, nullptr);
    for (int d = 0; d < D; ++d) gl[k * D + d] = g[d];
  }

  const double tol = 1e-9 * std::max(1.0, spec.Delta_r.cwiseInverse().maxCoeff());
  double cell = 0.0;
  for (int d = 0; d < D; ++d) cell = std::max(cell, grid.spacing(d));

  auto polish = [&](Vec x, Vec* root) {
    Vec gg;
    Mat H;
    for (int it = 0; it < 60; ++it) {
      spec.eval(x, nullptr, &gg, &H);
      if (!gg.allFinite()) return false;
      if (gg.lpNorm<Eigen::Infinity>() < tol) break;
      Eigen::FullPivLU<Mat> lu(H);
      if (!lu.isInvertible()) return false;
      x -= lu.solve(gg);
    }
    spec.eval(x, nullptr, &gg, nullptr);
    if (!(gg.lpNorm<Eigen::Infinity>() < tol)) return false;
    for (int d = 0; d < D; ++d)
      if (x[d] < grid.lo[d] - grid.spacing(d) || x[d] > grid.hi[d] + grid.spacing(d)) return false;
    *root = x;
    return true;
  };

  StationaryCount out;
  auto add_root = [&](const Vec& r) {
    for (const auto& sp : out.points)
      if ((sp.x - r).norm() < 1e-6 * std::max(1.0, r.norm())) return;
    Mat H;
    spec.eval(r, nullptr, nullptr, &H);
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    StationaryPoint sp{r, StationaryPoint::Saddle};
    if (es.eigenvalues().minCoeff() > 0.0)
      sp.kind = StationaryPoint::Minimum;
    else if (es.eigenvalues().maxCoeff() < 0.0)
      sp.kind = StationaryPoint::Maximum;
    out.points.push_back(sp);
  };

  std::vector<int> hi_cell(D);
  for (int d = 0; d < D; ++d) hi_cell[d] = grid.n[d] - 2;
  for_each_in_box(std::vector<int>(D, 0), hi_cell, [&](const std::vector<int>& c) {
    // corners of the cell
    std::vector<long long> corners;
    for (int bits = 0; bits < (1 << D); ++bits) {
      std::vector<int> idx = c;
      for (int d = 0; d < D; ++d)
        if (bits & (1 << d)) idx[d] += 1;
      corners.push_back(shape.ravel(idx));
    }
    for (int p = 0; p < D; ++p) {
      double mn = gl[corners[0] * D + p], mx = mn;
      for (long long k : corners) {
        mn = std::min(mn, gl[k * D + p]);
        mx = std::max(mx, gl[k * D + p]);
      }
      if (!(mn <= 0.0 && mx >= 0.0)) return;
    }
    std::vector<Vec> starts;
    Vec center(D);
    for (int d = 0; d < D; ++d) center[d] = grid.coord(d, c[d]) + 0.5 * grid.spacing(d);
    starts.push_back(center);
    for (long long k : corners) {
      std::vector<double> x = shape.point(k);
      starts.push_back(Eigen::Map<Vec>(x.data(), D));
    }
    bool any = false;
    for (const Vec& s : starts) {
      Vec r;
      if (polish(s, &r)) {
        add_root(r);
        any = true;
      }
    }
    if (!any) out.coarse = true;
  });

  for (size_t i = 0; i < out.points.size(); ++i) {
    if (out.points[i].kind == StationaryPoint::Minimum) ++out.minima;
    for (size_t j = i + 1; j < out.points.size(); ++j)
      if ((out.points[i].x - out.points[j].x).lpNorm<Eigen::Infinity>() < cell) out.coarse = true;
  }
  return out;
}

}  // namespace pfeis
