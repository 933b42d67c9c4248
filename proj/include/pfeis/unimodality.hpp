#pragma once

#include <limits>
#include <string>
#include <vector>

#include "pfeis/mode_finder.hpp"

namespace pfeis {

struct GridSpec {
  std::vector<double> lo, hi;
  std::vector<int> n;
  long long max_points = 1000000;

  int dim() const { return static_cast<int>(n.size()); }
  double spacing(int d) const { return (hi[d] - lo[d]) / (n[d] - 1); }
  double coord(int d, int i) const { return lo[d] + spacing(d) * i; }
  long long size() const;
  void validate() const;

  // n points per axis over center +/- half_width.
  static GridSpec around(const Vec& center, double half_width, int n = 201);
  // Default box: f_r +/- 6 sqrt(max variance), 201 points per axis.
  static GridSpec default_for(const Vec& f_r, double max_variance);
};

// Index box [lo_idx, hi_idx] (inclusive) on a GridSpec.
struct IndexBox {
  std::vector<int> lo_idx, hi_idx;
  bool contains(const std::vector<int>& idx) const;
};

struct UnimodalityCertificate {
  bool condition2 = false;  // E locally convex at f_r
  std::string reason;
  double epsilon0 = 0.0;
  IndexBox rlc;
  std::vector<double> rlc_lo, rlc_hi;  // box in coordinates
  // Indexed by a bitmask over p: bit p set means Z_p, clear means A_p.
  std::vector<double> region_minima;
  double delta_star = 0.0;
  bool certified = false;
  bool box_truncated = false;
  std::vector<double> argmin;  // grid point achieving delta_star
  // (epsilon0, delta_star) evaluated at alternative epsilon0 values.
  std::vector<std::pair<double, double>> sensitivity;
};

// Energy fields on a grid, shared by the certificate steps.
struct GridFields {
  GridSpec grid;
  std::vector<double> grad;     // size()*M_r, [point * M_r + p]
  std::vector<double> min_eig;  // smallest eigenvalue of the energy Hessian
  int M_r = 0;
  std::vector<int> unravel(long long k) const;
  long long ravel(const std::vector<int>& idx) const;
  std::vector<double> point(long long k) const;
};

GridFields evaluate_fields(const CondPosterior& spec, const GridSpec& grid);

// Largest axis-aligned grid box around f_r where the energy Hessian has min
// eigenvalue >= -1e-10. Returns false (condition 2 fails) if f_r itself is not convex.
bool compute_rlc(const CondPosterior& spec, const GridFields& fields, IndexBox* box);

// Smallest value that still catches every sign change of [grad E]_p between
// adjacent grid points (the larger endpoint magnitude is discarded).
double default_epsilon0(const GridFields& fields);

// Per-p region masks over grid points outside R_LC: 1 = A_p, 2 = Z_p, 0 = neither.
std::vector<unsigned char> classify_regions(const CondPosterior& spec, const GridFields& fields,
                                            const IndexBox& rlc, double epsilon0);

struct DeltaStarResult {
  double delta_star = std::numeric_limits<double>::infinity();
  std::vector<double> region_minima;
  long long argmin = -1;
};

DeltaStarResult delta_star(const CondPosterior& spec, const GridFields& fields,
                           const IndexBox& rlc, double epsilon0);

bool certify(double delta_star, const Vec& Delta_r);

// Full pipeline. epsilon0 <= 0 selects the default rule. Delta_r in spec is
// only used for the certified flag.
UnimodalityCertificate certify_instance(const CondPosterior& spec, const GridSpec& grid,
                                        double epsilon0 = 0.0);

// Sigma_r = U diag(d) U^T: returns the problem in rotated coordinates
// v~ = U^T v_r with diagonal prior variances d.
CondPosterior nondiag_transform(const CondPosterior& spec, const Mat& Sigma_r, Mat* U = nullptr);

struct StationaryPoint {
  Vec x;
  enum Kind { Minimum, Saddle, Maximum } kind;
};

struct StationaryCount {
  std::vector<StationaryPoint> points;
  int minima = 0;
  bool coarse = false;  // a candidate cell failed to polish or two roots share a cell
  int count() const { return static_cast<int>(points.size()); }
};

// Sign-crossing detection of grad L on the grid (1-D or 2-D) with Newton polishing.
StationaryCount count_stationary_points(const CondPosterior& spec, const GridSpec& grid);

}  // namespace pfeis
