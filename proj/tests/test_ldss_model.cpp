#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "pfeis/errors.hpp"
#include "pfeis/ldss_model.hpp"

using namespace pfeis;

namespace {

Mat random_spd(int n, std::mt19937& gen) {
  std::normal_distribution<double> nd;
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = nd(gen);
  return A * A.transpose() + 0.1 * Mat::Identity(n, n);
}

double max_abs(const Mat& A) { return A.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(EigenBasis, IdentityGivesIdentity) {
  EigenBasis eb = eigen_basis(Mat::Identity(3, 3));
  EXPECT_LT(max_abs(eb.delta_nu - Vec::Ones(3)), 1e-12);
  EXPECT_LT(max_abs(eb.B.transpose() * eb.B - Mat::Identity(3, 3)), 1e-12);
  // columns: first nonzero entry positive
  for (int k = 0; k < 3; ++k) {
    int p = 0;
    while (std::abs(eb.B(p, k)) < 1e-12) ++p;
    EXPECT_GT(eb.B(p, k), 0.0);
  }
}

TEST(EigenBasis, DiagonalIsSignedPermutation) {
  Vec d(3);
  d << 10, 5, 5;
  EigenBasis eb = eigen_basis(Mat(d.asDiagonal()));
  EXPECT_NEAR(eb.delta_nu[0], 10, 1e-12);
  EXPECT_NEAR(eb.delta_nu[1], 5, 1e-12);
  EXPECT_NEAR(eb.delta_nu[2], 5, 1e-12);
  EXPECT_NEAR(std::abs(eb.B(0, 0)), 1.0, 1e-12);
  EXPECT_LT(max_abs(eb.B * d.asDiagonal() * eb.B.transpose() - Mat(d.asDiagonal())), 1e-12);
}

TEST(EigenBasis, RandomSpdReconstruction) {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + trial % 5;
    Mat S = random_spd(n, gen);
    EigenBasis eb = eigen_basis(S);
    EXPECT_LT(max_abs(eb.B * eb.delta_nu.asDiagonal() * eb.B.transpose() - S), 1e-8);
    EXPECT_LT(max_abs(eb.B.transpose() * eb.B - Mat::Identity(n, n)), 1e-10);
    for (int k = 1; k < n; ++k) EXPECT_GE(eb.delta_nu[k - 1], eb.delta_nu[k]);
  }
}

TEST(EigenBasis, RejectsNonSymmetric) {
  Mat A = Mat::Identity(3, 3);
  A(0, 1) = 0.5;
  EXPECT_THROW(eigen_basis(A), ConfigError);
}

TEST(Propagate, VelocityExamples) {
  LdssModel m = fixture::linear_model(1, 1.0, 1.0, 1.0);
  EXPECT_EQ(propagate_velocity(m, Vec::Zero(1), Vec::Zero(1))[0], 0.0);
  m.a = 0.7;
  EXPECT_NEAR(propagate_velocity(m, Vec::Constant(1, 10.0), Vec::Constant(1, 1.0))[0], 8.0, 1e-12);
  EXPECT_THROW(propagate_velocity(m, Vec::Zero(2), Vec::Zero(1)), ConfigError);
}

TEST(Propagate, VelocityIncrementVariance) {
  LdssModel m = fixture::linear_model(3, 1.0, 1.0);
  m.delta_nu << 10, 5, 0.5;
  Rng rng(99);
  Vec v = Vec::Zero(3);
  Vec sum = Vec::Zero(3), sq = Vec::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Vec noise(3);
    for (int p = 0; p < 3; ++p) noise[p] = std::sqrt(m.delta_nu[p]) * rng.normal();
    Vec vn = propagate_velocity(m, v, noise);
    Vec d = vn - v;
    sum += d;
    sq += d.cwiseProduct(d);
    v = vn;
  }
  Vec var = sq / n - (sum / n).cwiseProduct(sum / n);
  for (int p = 0; p < 3; ++p) EXPECT_NEAR(var[p] / m.delta_nu[p], 1.0, 0.05);
}

TEST(Propagate, StateExamples) {
  LdssModel m = fixture::linear_model(3, 1.0, 1.0);
  Vec C = Vec::Constant(3, 2.0);
  EXPECT_LT(max_abs(propagate_state(m, C, Vec::Zero(3)) - C), 0.0 + 1e-15);
  Vec v(3);
  v << 1, 2, 3;
  EXPECT_LT(max_abs(propagate_state(m, Vec::Zero(3), v) - v), 1e-15);
  m.B = fixture::fig_basis_raw();
  Vec e1 = Vec::Zero(3);
  e1[0] = 1.0;
  Vec col = propagate_state(m, Vec::Zero(3), e1);
  EXPECT_NEAR(col[0], -0.27, 1e-15);
  EXPECT_NEAR(col[1], 0.96, 1e-15);
  EXPECT_NEAR(col[2], -0.02, 1e-15);
}

TEST(Basis, NearestOrthogonalOfRoundedBasis) {
  Mat raw = fixture::fig_basis_raw();
  Mat B = nearest_orthogonal(raw);
  EXPECT_LT(max_abs(B.transpose() * B - Mat::Identity(3, 3)), 1e-12);
  EXPECT_LT(max_abs(B - raw), 0.02);
}

TEST(Basis, HouseholderFirstRow) {
  Vec r(10);
  r << 0.83, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18;
  Mat B = householder_basis(r);
  EXPECT_LT(max_abs(B.transpose() * B - Mat::Identity(10, 10)), 1e-12);
  Vec u = r / r.norm();
  EXPECT_LT(max_abs(B.row(0).transpose() - u), 1e-12);
  EXPECT_LT(max_abs(B.col(0) - u), 1e-12);
  EXPECT_LT(max_abs(householder_basis(Vec::Unit(4, 0)) - Mat::Identity(4, 4)), 1e-15);
}

TEST(Simulate, ZeroNoiseKeepsState) {
  LdssModel m = fixture::linear_model(3, 1.0, 0.0);
  m.C0 << 1, 2, 3;
  Trajectory tr = simulate(m, 20, 5);
  for (int t = 0; t <= 20; ++t) EXPECT_LT(max_abs(tr.C.row(t).transpose() - m.C0), 1e-15);
}

TEST(Simulate, DeterministicGivenSeed) {
  LdssModel m = fixture::linear_model(3, 1.0, 2.0);
  Trajectory a = simulate(m, 30, 11), b = simulate(m, 30, 11), c = simulate(m, 30, 12);
  EXPECT_EQ(max_abs(a.C - b.C), 0.0);
  for (int t = 1; t <= 30; ++t) EXPECT_EQ(max_abs(a.Y[t].Y - b.Y[t].Y), 0.0);
  EXPECT_GT(max_abs(a.C - c.C), 0.0);
}

TEST(Simulate, StateEquationHoldsExactly) {
  LdssModel m = fixture::linear_model(3, 1.0, 1.0, 0.7);
  m.B = nearest_orthogonal(fixture::fig_basis_raw());
  m.delta_nu << 10, 5, 5;
  Trajectory tr = simulate(m, 200, 3);
  for (int t = 1; t <= 200; ++t) {
    Vec r = tr.C.row(t).transpose() - tr.C.row(t - 1).transpose() - m.B * tr.v.row(t).transpose();
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(Simulate, IncrementCovarianceMatchesModel) {
  LdssModel m = fixture::linear_model(3, 1.0, 1.0);
  m.B = nearest_orthogonal(fixture::fig_basis_raw());
  m.delta_nu << 10, 5, 2;
  const int T = 10000;
  Trajectory tr = simulate(m, T, 21);
  Mat S = Mat::Zero(3, 3);
  for (int t = 2; t <= T; ++t) {
    // C_t - C_{t-1} - a (C_{t-1} - C_{t-2}) = B nu_t
    Vec d = (tr.C.row(t) - tr.C.row(t - 1)).transpose() - m.a * (tr.C.row(t - 1) - tr.C.row(t - 2)).transpose();
    S += d * d.transpose();
  }
  S /= (T - 1);
  Mat ref = m.B * m.delta_nu.asDiagonal() * m.B.transpose();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(S(i, i) / ref(i, i), 1.0, 0.10);
  EXPECT_LT((S - ref).norm() / ref.norm(), 0.10);
}

TEST(Model, ValidateRejectsBadInput) {
  LdssModel m = fixture::linear_model(2, 1.0, 1.0);
  EXPECT_NO_THROW(m.validate());
  LdssModel bad = m;
  bad.a = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.delta_nu[0] = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.B(0, 1) = 0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Partition, MakeAndValidate) {
  StatePartition p = StatePartition::make(5, {0}, {3, 4});
  EXPECT_EQ(p.K(), 1);
  EXPECT_EQ(p.M_rs(), 2);
  EXPECT_EQ(p.M_rr(), 2);
  EXPECT_EQ(p.residual(), (std::vector<int>{1, 2, 3, 4}));
  StatePartition bad;
  bad.s = {0, 0};
  bad.rs = {1};
  EXPECT_THROW(bad.validate(3), ConfigError);
}
