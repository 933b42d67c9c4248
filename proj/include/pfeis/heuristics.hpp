#pragma once

#include <optional>
#include <vector>

#include "pfeis/sensor_obs.hpp"

namespace pfeis {

// Indices are 0-based throughout.

// The K indices maximizing B(p0,k)^2 delta_nu(k); ties go to the lower index.
std::vector<int> choose_vts_single(const Mat& B, const Vec& delta_nu, int p0, int K);

// sum_{k not in ks} B(p0,k)^2 delta_nu(k)
double residual_sum(const Mat& B, const Vec& delta_nu, int p0, const std::vector<int>& ks);

// Spectral radius of sum_{k not in ks} B(p0,k) B(p0,k)^T delta_nu(k), rows restricted to p0.
double residual_radius(const Mat& B, const Vec& delta_nu, const std::vector<int>& p0,
                       const std::vector<int>& ks);

struct VtsChoice {
  std::vector<int> ks;
  double radius = 0.0;
  bool approximate = false;  // greedy path (M > 12)
};

VtsChoice choose_vts_set(const Mat& B, const Vec& delta_nu, const std::vector<int>& p0, int K);

double ol_multimodal_prob(const std::vector<double>& alpha);
double ol_multimodal_prob(const Mat& alpha);

// Threshold on max_p (Y1 - Y2)^2 / sigma^2 with false-positive rate fpr when no sensor fails.
// Calibrated at 4% so a 5% false-positive budget still holds under sampling noise.
double onfly_default_threshold(int M, double fpr = 0.04);

// Node with the largest normalized disagreement between sensors 1 and 2, or
// nullopt if it is below threshold.
std::optional<int> onfly_select(const Mat& Y, const Vec& sigma_obs2, double threshold);

}  // namespace pfeis
