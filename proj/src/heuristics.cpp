#include "pfeis/heuristics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>

#include "pfeis/errors.hpp"

namespace pfeis {

namespace {

void check_args(const Mat& B, const Vec& delta_nu, int K) {
  const int M = static_cast<int>(B.cols());
  if (delta_nu.size() != M) throw ConfigError("heuristics: delta_nu length must equal M");
  if (K < 1 || K >= M) throw ConfigError("heuristics: need 1 <= K < M");
}

bool next_combination(std::vector<int>& c, int n) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[i] == n - k + i) --i;
  if (i < 0) return false;
  ++c[i];
  for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  return true;
}

}  // namespace

std::vector<int> choose_vts_single(const Mat& B, const Vec& delta_nu, int p0, int K) {
  check_args(B, delta_nu, K);
  if (p0 < 0 || p0 >= B.rows()) throw ConfigError("choose_vts_single: p0 out of range");
  const int M = static_cast<int>(B.cols());
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  auto score = [&](int k) { return B(p0, k) * B(p0, k) * delta_nu[k]; };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score(a) > score(b); });
  std::vector<int> ks(order.begin(), order.begin() + K);
  std::sort(ks.begin(), ks.end());
  return ks;
}

double residual_sum(const Mat& B, const Vec& delta_nu, int p0, const std::vector<int>& ks) {
  double s = 0.0;
  for (int k = 0; k < B.cols(); ++k)
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) s += B(p0, k) * B(p0, k) * delta_nu[k];
  return s;
}

double residual_radius(const Mat& B, const Vec& delta_nu, const std::vector<int>& p0,
                       const std::vector<int>& ks) {
  const int P = static_cast<int>(p0.size());
  Mat S = Mat::Zero(P, P);
  for (int k = 0; k < B.cols(); ++k) {
    if (std::find(ks.begin(), ks.end(), k) != ks.end()) continue;
    Vec b(P);
    for (int i = 0; i < P; ++i) b[i] = B(p0[i], k);
    S += delta_nu[k] * b * b.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

VtsChoice choose_vts_set(const Mat& B, const Vec& delta_nu, const std::vector<int>& p0, int K) {
  check_args(B, delta_nu, K);
  if (p0.empty()) throw ConfigError("choose_vts_set: p0 must be non-empty");
  for (int p : p0)
    if (p < 0 || p >= B.rows()) throw ConfigError("choose_vts_set: p0 index out of range");
  const int M = static_cast<int>(B.cols());
  VtsChoice best;
  if (M <= 12) {
    std::vector<int> c(K);
    std::iota(c.begin(), c.end(), 0);
    best.radius = std::numeric_limits<double>::infinity();
    do {
      double r = residual_radius(B, delta_nu, p0, c);
      // strict comparison keeps the lexicographically first subset on ties
      if (r < best.radius) {
        best.radius = r;
        best.ks = c;
      }
    } while (next_combination(c, M));
    return best;
  }
  // Greedy: add the index giving the largest drop in spectral radius.
  best.approximate = true;
  for (int step = 0; step < K; ++step) {
    int pick = -1;
    double pick_r = std::numeric_limits<double>::infinity();
    for (int k = 0; k < M; ++k) {
      if (std::find(best.ks.begin(), best.ks.end(), k) != best.ks.end()) continue;
      std::vector<int> trial = best.ks;
      trial.push_back(k);
      double r = residual_radius(B, delta_nu, p0, trial);
      if (r < pick_r) {
        pick_r = r;
        pick = k;
      }
    }
    best.ks.push_back(pick);
    best.radius = pick_r;
  }
  std::sort(best.ks.begin(), best.ks.end());
  return best;
}

double ol_multimodal_prob(const std::vector<double>& alpha) {
  double keep = 1.0;
  for (double a : alpha) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ol_multimodal_prob: alpha must lie in [0, 1]");
    keep *= 1.0 - a;
  }
  return 1.0 - keep;
}

double ol_multimodal_prob(const Mat& alpha) {
  return ol_multimodal_prob(std::vector<double>(alpha.data(), alpha.data() + alpha.size()));
}

double onfly_default_threshold(int M, double fpr) {
  // (Y1 - Y2)^2 / sigma^2 = 2 chi2_1 per node, independent across nodes
  double per_node = std::pow(1.0 - fpr, 1.0 / M);
  boost::math::normal n01;
  double z = boost::math::quantile(n01, 0.5 * (1.0 + per_node));
  return 2.0 * z * z;
}

std::optional<int> onfly_select(const Mat& Y, const Vec& sigma_obs2, double threshold) {
  if (Y.cols() < 2) throw ConfigError("onfly_select: needs two sensors per node");
  int best = -1;
  double best_stat = -1.0;
  for (int p = 0; p < Y.rows(); ++p) {
    double d = Y(p, 0) - Y(p, 1);
    double stat = d * d / sigma_obs2[p];
    if (stat > best_stat) {
      best_stat = stat;
      best = p;
    }
  }
  if (best < 0 || best_stat < threshold) return std::nullopt;
  return best;
}

}  // namespace pfeis
