#pragma once

#include <cstdint>
#include <vector>

#include "pfeis/sensor_obs.hpp"

namespace pfeis {

// C_t = C_{t-1} + B v_t,  v_t = a v_{t-1} + nu_t,  nu_t ~ N(0, diag(delta_nu)).
struct LdssModel {
  double a = 1.0;
  Mat B;
  Vec delta_nu;
  Vec C0;
  SensorSpec obs;

  int M() const { return static_cast<int>(B.rows()); }
  // Throws ConfigError on any violated invariant. Zero variances are allowed
  // here (deterministic directions); mode finding needs them strictly positive.
  void validate() const;
};

struct EigenBasis {
  Mat B;
  Vec delta_nu;
};

// Descending eigenvalues, each column's first nonzero entry made positive.
EigenBasis eigen_basis(const Mat& Sigma_n);

// Orthonormal symmetric reflector whose first row (and column) is first_row / |first_row|.
Mat householder_basis(const Vec& first_row);

// Closest orthogonal matrix in Frobenius norm (polar factor of the SVD).
Mat nearest_orthogonal(const Mat& B);

Vec propagate_velocity(const LdssModel& model, const Vec& v_prev, const Vec& noise);
Vec propagate_state(const LdssModel& model, const Vec& C_prev, const Vec& v);

// Row 0 holds the initial state (C0, v = 0); rows 1..T the simulated steps.
// Y[t] observes row t for t >= 1; Y[0] is left empty.
struct Trajectory {
  Mat C;
  Mat v;
  std::vector<Observation> Y;
  int T() const { return static_cast<int>(C.rows()) - 1; }
};

Trajectory simulate(const LdssModel& model, int T, std::uint64_t seed, std::uint64_t run = 0);

// Coordinates of v split into sampled (s), EIS residual (rs) and mode-tracked (rr) sets.
struct StatePartition {
  std::vector<int> s, rs, rr;

  int K() const { return static_cast<int>(s.size()); }
  int M_rs() const { return static_cast<int>(rs.size()); }
  int M_rr() const { return static_cast<int>(rr.size()); }
  int M_r() const { return M_rs() + M_rr(); }
  std::vector<int> residual() const;
  void validate(int M) const;

  // rs receives every index not listed in s or rr.
  static StatePartition make(int M, const std::vector<int>& s, const std::vector<int>& rr = {});
};

Mat select_columns(const Mat& A, const std::vector<int>& idx);
Vec select(const Vec& x, const std::vector<int>& idx);

}  // namespace pfeis
