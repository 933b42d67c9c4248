#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pfeis/heuristics.hpp"
#include "pfeis/ldss_model.hpp"

using namespace pfeis;

namespace {

// Every K-subset of {0..M-1} in lexicographic order.
std::vector<std::vector<int>> subsets(int M, int K) {
  std::vector<std::vector<int>> out;
  std::vector<bool> pick(M, false);
  std::fill(pick.begin(), pick.begin() + K, true);
  do {
    std::vector<int> s;
    for (int i = 0; i < M; ++i)
      if (pick[i]) s.push_back(i);
    out.push_back(s);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return out;
}

Mat random_orthogonal(int M, Rng& rng) {
  Mat A = Mat::NullaryExpr(M, M, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  return nearest_orthogonal(A);
}

}  // namespace

TEST(VtsSingle, IdentityBasis) {
  Vec d(3);
  d << 10, 5, 5;
  EXPECT_EQ(choose_vts_single(Mat::Identity(3, 3), d, 1, 1), (std::vector<int>{1}));
}

TEST(VtsSingle, PublishedBasisPicksFirst) {
  Mat B(3, 3);
  B << 0.95, -0.21, -0.22, 0.21, 0.98, 0.0, 0.21, -0.05, 0.98;
  Vec d(3);
  d << 10, 5, 5;
  EXPECT_EQ(choose_vts_single(B, d, 0, 1), (std::vector<int>{0}));
}

TEST(VtsSingle, MatchesExhaustiveSearch) {
  Rng rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    int M = 2 + trial % 7;
    Mat B = random_orthogonal(M, rng);
    Vec d = Vec::NullaryExpr(M, [&](Eigen::Index) { return 0.1 + 10 * rng.uniform(); });
    int p0 = trial % M;
    for (int K = 1; K < M; ++K) {
      std::vector<int> ks = choose_vts_single(B, d, p0, K);
      double mine = residual_sum(B, d, p0, ks);
      for (const auto& s : subsets(M, K)) EXPECT_LE(mine, residual_sum(B, d, p0, s) + 1e-12);
    }
  }
}

TEST(VtsSingle, TiesGoToLowerIndex) {
  EXPECT_EQ(choose_vts_single(Mat::Identity(4, 4), Vec::Ones(4), 0, 2), (std::vector<int>{0, 1}));
  Mat B = Mat::Constant(1, 4, 0.5);
  EXPECT_EQ(choose_vts_single(B, Vec::Ones(4), 0, 2), (std::vector<int>{0, 1}));
}

TEST(VtsSet, AllNodesPicksLargestVariances) {
  Rng rng(2);
  Mat B = random_orthogonal(6, rng);
  Vec d(6);
  d << 3, 9, 1, 7, 2, 5;
  VtsChoice c = choose_vts_set(B, d, {0, 1, 2, 3, 4, 5}, 3);
  EXPECT_EQ(c.ks, (std::vector<int>{1, 3, 5}));
  EXPECT_NEAR(c.radius, 3.0, 1e-10);
  EXPECT_FALSE(c.approximate);
}

TEST(VtsSet, SingletonAgreesWithSingle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Mat B = random_orthogonal(5, rng);
    Vec d = Vec::NullaryExpr(5, [&](Eigen::Index) { return 0.1 + rng.uniform(); });
    for (int K = 1; K < 5; ++K) {
      VtsChoice c = choose_vts_set(B, d, {trial % 5}, K);
      EXPECT_NEAR(c.radius, residual_sum(B, d, trial % 5, choose_vts_single(B, d, trial % 5, K)), 1e-12);
    }
  }
}

TEST(VtsSet, ExhaustiveOptimum) {
  Rng rng(4);
  Mat B = random_orthogonal(5, rng);
  Vec d = Vec::NullaryExpr(5, [&](Eigen::Index) { return 0.1 + 5 * rng.uniform(); });
  std::vector<int> p0{0, 2};
  VtsChoice c = choose_vts_set(B, d, p0, 2);
  double best = 1e300;
  std::vector<int> arg;
  for (const auto& s : subsets(5, 2)) {
    double r = residual_radius(B, d, p0, s);
    if (r < best) best = r, arg = s;
  }
  EXPECT_LE(c.radius, best * 1.0 + 1e-12);
  EXPECT_EQ(c.ks, arg);
}

TEST(VtsSet, LargeProblemIsGreedy) {
  Rng rng(5);
  Mat B = random_orthogonal(14, rng);
  Vec d = Vec::NullaryExpr(14, [&](Eigen::Index) { return 0.1 + rng.uniform(); });
  VtsChoice c = choose_vts_set(B, d, {0, 1}, 3);
  EXPECT_TRUE(c.approximate);
  EXPECT_EQ(c.ks.size(), 3u);
  EXPECT_NEAR(c.radius, residual_radius(B, d, {0, 1}, c.ks), 1e-12);
}

TEST(OlMultimodal, Values) {
  EXPECT_EQ(ol_multimodal_prob(std::vector<double>(6, 0.0)), 0.0);
  EXPECT_NEAR(ol_multimodal_prob(std::vector<double>{0.4, 0.4, 0.01, 0.01, 0.01, 0.01}), 0.654, 1e-3);
  EXPECT_EQ(ol_multimodal_prob(std::vector<double>{0.1, 1.0, 0.2}), 1.0);
  Mat a(3, 2);
  a << 0.4, 0.4, 0.01, 0.01, 0.01, 0.01;
  EXPECT_NEAR(ol_multimodal_prob(a), ol_multimodal_prob(std::vector<double>{0.4, 0.4, 0.01, 0.01, 0.01, 0.01}), 1e-15);
}

TEST(OlMultimodal, MonotoneAndBounded) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(5);
    for (double& x : a) x = rng.uniform();
    double p = ol_multimodal_prob(a);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    int k = trial % 5;
    a[k] = std::min(1.0, a[k] + 0.1);
    EXPECT_GE(ol_multimodal_prob(a), p);
  }
}

TEST(Onfly, Examples) {
  Mat Y(3, 2);
  Y << 1, 1, 2, 2, -3, -3;
  Vec s = Vec::Ones(3);
  double thr = onfly_default_threshold(3);
  EXPECT_FALSE(onfly_select(Y, s, thr).has_value());
  Y(0, 1) = 11;
  auto p = onfly_select(Y, s, thr);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(*p, 0);
}

TEST(Onfly, NullCalibration) {
  const int M = 10;
  SensorSpec spec = SensorSpec::linear_gaussian(M, 2, 1.0);
  spec.sigma_obs2 = Vec::LinSpaced(M, 0.5, 3.0);
  double thr = onfly_default_threshold(M);
  Rng rng(7);
  int none = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Vec C = Vec::NullaryExpr(M, [&](Eigen::Index) { return 5 * rng.normal(); });
    Observation o = sample_observation(spec, C, rng);
    if (!onfly_select(o.Y, spec.sigma_obs2, thr)) ++none;
  }
  EXPECT_GE(double(none) / n, 0.95);
}
