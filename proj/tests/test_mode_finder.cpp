#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pfeis/errors.hpp"
#include "pfeis/mode_finder.hpp"
#include "pfeis/unimodality.hpp"

using namespace pfeis;

namespace {

struct LinearProblem {
  SensorSpec obs;
  Observation Y;
  CondPosterior post;

  LinearProblem(const LinearProblem&) = delete;
  explicit LinearProblem(std::uint64_t seed) {
    const int M = 4, J = 2;
    obs = SensorSpec::linear_gaussian(M, J, 1.0);
    obs.sigma_obs2 << 1.0, 2.0, 0.5, 3.0;
    Rng rng(seed);
    Y.Y.resize(M, J);
    for (int p = 0; p < M; ++p)
      for (int j = 0; j < J; ++j) Y.Y(p, j) = 3 * rng.normal();
    Y.failed = Eigen::MatrixXi::Zero(M, J);
    Vec r(M);
    r << 0.8, 0.3, 0.4, 0.34;
    Mat B = householder_basis(r);
    post.obs = &obs;
    post.Y = &Y;
    post.C_tilde = B.col(0) * 1.7;
    post.B_r = B.rightCols(3);
    post.f_r = Vec(3);
    post.f_r << 0.5, -1.0, 2.0;
    post.Delta_r = Vec(3);
    post.Delta_r << 5.0, 1.0, 0.3;
  }

  // Gaussian-conjugate posterior precision and mean.
  Mat precision() const {
    Vec w = obs.J() * obs.sigma_obs2.cwiseInverse();
    return post.B_r.transpose() * w.asDiagonal() * post.B_r + Mat(post.Delta_r.cwiseInverse().asDiagonal());
  }
  Vec mean() const {
    Vec rhs = post.Delta_r.cwiseInverse().cwiseProduct(post.f_r);
    Vec ysum = Y.Y.rowwise().sum() - obs.J() * post.C_tilde;
    rhs += post.B_r.transpose() * obs.sigma_obs2.cwiseInverse().cwiseProduct(ysum);
    return precision().ldlt().solve(rhs);
  }
};

Mat random_spd(int n, Rng& rng) {
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  return A * A.transpose() + 0.5 * Mat::Identity(n, n);
}

}  // namespace

TEST(CondPosterior, PriorTermVanishesAtPredictedState) {
  LinearProblem lp(1);
  lp.Y.Y.col(0) = lp.post.state(lp.post.f_r);
  lp.Y.Y.col(1) = lp.Y.Y.col(0);
  EXPECT_NEAR(neg_log_cond_posterior(lp.post, lp.post.f_r), energy(lp.obs, lp.Y, lp.post.state(lp.post.f_r)), 1e-14);
  Vec g;
  lp.post.eval(lp.post.f_r, nullptr, &g, nullptr);
  EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(CondPosterior, QuadraticHessianClosedForm) {
  LinearProblem lp(2);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    Vec v = Vec::NullaryExpr(3, [&](Eigen::Index) { return 2 * rng.normal(); });
    Mat H;
    lp.post.eval(v, nullptr, nullptr, &H);
    EXPECT_LT((H - lp.precision()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CondPosterior, DerivativesMatchFiniteDifferences) {
  fixture::FigInstance fig;
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Vec v(2);
    v << 6 * (rng.uniform() - 0.5), 6 * (rng.uniform() - 0.5);
    Vec g;
    Mat H;
    fig.post.eval(v, nullptr, &g, &H);
    for (int k = 0; k < 2; ++k) {
      double h = 1e-5 * (1 + std::abs(v[k]));
      Vec vp = v, vm = v;
      vp[k] += h;
      vm[k] -= h;
      double fd = (fig.post.value(vp) - fig.post.value(vm)) / (2 * h);
      EXPECT_NEAR(g[k], fd, 1e-4 * std::max(1.0, std::abs(fd)));
      Vec gp, gm;
      fig.post.eval(vp, nullptr, &gp, nullptr);
      fig.post.eval(vm, nullptr, &gm, nullptr);
      Vec fd2 = (gp - gm) / (2 * h);
      for (int l = 0; l < 2; ++l) EXPECT_NEAR(H(l, k), fd2[l], 1e-4 * std::max(1.0, std::abs(fd2[l])));
    }
  }
}

TEST(FindMode, GaussianConjugateMean) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    LinearProblem lp(seed);
    ModeResult r = find_mode(lp.post);
    EXPECT_LT((r.m - lp.mean()).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT(r.diag.grad_norm, 1e-8);
    EXPECT_FALSE(r.diag.cap_hit);
  }
}

TEST(FindMode, ObservationAtPredictionKeepsPriorMean) {
  LinearProblem lp(5);
  lp.Y.Y.col(0) = lp.post.state(lp.post.f_r);
  lp.Y.Y.col(1) = lp.Y.Y.col(0);
  ModeResult r = find_mode(lp.post);
  EXPECT_LT((r.m - lp.post.f_r).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_EQ(r.diag.iterations, 0);
}

TEST(FindMode, BimodalMatchesDenseGrid) {
  SensorSpec obs;
  obs.alpha = Mat::Constant(1, 2, 0.4);
  obs.sigma_obs2 = Vec::Ones(1);
  obs.h = {HKind::Linear};
  obs.fail = {FailKind::Uniform, -10, 10};
  Observation Y;
  Y.Y.resize(1, 2);
  Y.Y << 4.0, -1.0;
  Y.failed = Eigen::MatrixXi::Zero(1, 2);
  CondPosterior post;
  post.obs = &obs;
  post.Y = &Y;
  post.C_tilde = Vec::Zero(1);
  post.B_r = Mat::Identity(1, 1);
  post.f_r = Vec::Zero(1);
  post.Delta_r = Vec::Constant(1, 4.0);

  double best = 1e300, arg = 0;
  int local_minima = 0;
  double prev2 = 1e300, prev1 = 1e300;
  for (int i = 0; i <= 200000; ++i) {
    double x = -10 + 1e-4 * i;
    double L = post.value(Vec::Constant(1, x));
    if (L < best) best = L, arg = x;
    if (i >= 2 && prev1 < prev2 && prev1 < L) ++local_minima;
    prev2 = prev1;
    prev1 = L;
  }
  ASSERT_EQ(local_minima, 2);  // the instance really is bimodal
  ModeResult r = find_mode(post);
  EXPECT_NEAR(r.m[0], arg, 1e-3);
}

TEST(FindMode, DeterministicAndFlagsCap) {
  fixture::FigInstance fig;
  ModeResult a = find_mode(fig.post), b = find_mode(fig.post);
  EXPECT_EQ((a.m - b.m).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.diag.iterations, b.diag.iterations);
  ModeOptions o;
  o.max_iter = 1;
  ModeResult c = find_mode(fig.post, nullptr, o);
  EXPECT_TRUE(c.diag.cap_hit);
  EXPECT_GT(c.diag.grad_norm, 1e-8);
  EXPECT_LE(fig.post.value(c.m), fig.post.value(fig.post.f_r));
}

TEST(FindMode, NonFiniteIsAnError) {
  LinearProblem lp(6);
  lp.post.C_tilde[0] = std::nan("");
  EXPECT_THROW(find_mode(lp.post), NumericalError);
}

TEST(Laplace, QuadraticCovariance) {
  LinearProblem lp(7);
  ModeResult r = find_mode(lp.post);
  Mat S = laplace_covariance(lp.post, r.m);
  EXPECT_LT((S - Mat(lp.precision().inverse())).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Laplace, FlatEnergyGivesPrior) {
  SensorSpec obs;
  obs.alpha = Mat::Ones(3, 1);
  obs.sigma_obs2 = Vec::Ones(3);
  obs.h.assign(3, HKind::Linear);
  obs.fail = {FailKind::Uniform, -10, 10};
  Observation Y;
  Y.Y = Mat::Constant(3, 1, 2.0);
  Y.failed = Eigen::MatrixXi::Ones(3, 1);
  CondPosterior post;
  post.obs = &obs;
  post.Y = &Y;
  post.C_tilde = Vec::Zero(3);
  post.B_r = Mat::Identity(3, 2);
  post.f_r = Vec::Zero(2);
  post.Delta_r = Vec(2);
  post.Delta_r << 3.0, 0.25;
  ModeResult r = find_mode(post);
  Mat S = laplace_covariance(post, r.m);
  EXPECT_LT((S - Mat(post.Delta_r.asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Laplace, NotPositiveDefiniteThrows) {
  fixture::FigInstance fig;
  fig.post.Delta_r = Vec::Constant(2, 100.0);
  // scan the line between the origin and far out for a point with negative curvature
  bool found = false;
  for (int i = 0; i < 400 && !found; ++i) {
    for (int j = 0; j < 400 && !found; ++j) {
      Vec v(2);
      v << -10 + 0.05 * i, -10 + 0.05 * j;
      Mat H;
      fig.post.eval(v, nullptr, nullptr, &H);
      if (Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().minCoeff() < -1e-3) {
        EXPECT_THROW(laplace_covariance(fig.post, v), NumericalError);
        found = true;
      }
    }
  }
  EXPECT_TRUE(found);
}

TEST(Laplace, TraceBoundWhenCertified) {
  fixture::FigInstance fig;
  UnimodalityCertificate cert = certify_instance(fig.post, fig.grid, 0.0);
  ASSERT_TRUE(std::isfinite(cert.delta_star));
  for (double frac : {0.2, 0.5, 0.9}) {
    fig.post.Delta_r = Vec::Constant(2, frac * cert.delta_star);
    ModeResult r = find_mode(fig.post);
    Mat S = laplace_covariance(fig.post, r.m);
    EXPECT_LE(S.trace(), fig.post.Delta_r.sum() * (1 + 1e-8)) << frac;

    // Sigma*_rr <= Sigma_rr <= diag(Delta_rr)
    GaussianProposal q{r.m, S, 1};
    Rng rng(11);
    ConditionalGaussian cg = conditional_gaussian_split(q, Vec::Constant(1, rng.normal()));
    Mat Srr = q.Sigma_rr();
    Mat Drr = Mat::Constant(1, 1, fig.post.Delta_r[1]);
    for (int k = 0; k < 100; ++k) {
      Vec z = Vec::Constant(1, rng.normal());
      EXPECT_GE(z.dot(Srr * z) - z.dot(cg.Sigma * z), -1e-8);
      EXPECT_GE(z.dot(Drr * z) - z.dot(Srr * z), -1e-8);
    }
  }
}

TEST(ConditionalSplit, IndependentBlocks) {
  GaussianProposal q;
  q.m = Vec(3);
  q.m << 1, 2, 3;
  q.Sigma = Mat::Zero(3, 3);
  q.Sigma.diagonal() << 2, 3, 4;
  q.M_s = 1;
  ConditionalGaussian cg = conditional_gaussian_split(q, Vec::Constant(1, 9.0));
  EXPECT_LT((cg.m - q.m_r()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((cg.Sigma - q.Sigma_rr()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ConditionalSplit, AtBlockMeanReturnsBlockMean) {
  Rng rng(12);
  GaussianProposal q{Vec::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); }), random_spd(4, rng), 2};
  ConditionalGaussian cg = conditional_gaussian_split(q, q.m_s());
  EXPECT_LT((cg.m - q.m_r()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ConditionalSplit, MatchesMonteCarloMoments) {
  Rng rng(13);
  GaussianProposal q{Vec::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); }), random_spd(4, rng), 2};
  Mat L = q.Sigma.llt().matrixL();
  const int n = 1000000;
  Vec mean = Vec::Zero(4);
  Mat second = Mat::Zero(4, 4);
  for (int i = 0; i < n; ++i) {
    Vec x = q.m + L * Vec::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); });
    mean += x;
    second += x * x.transpose();
  }
  mean /= n;
  Mat cov = second / n - mean * mean.transpose();
  GaussianProposal emp{mean, cov, 2};
  Vec x_rs(2);
  x_rs << 0.7, -0.4;
  ConditionalGaussian exact = conditional_gaussian_split(q, x_rs);
  ConditionalGaussian mc = conditional_gaussian_split(emp, x_rs);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(mc.m[k], exact.m[k], 0.02 * std::max(1.0, std::abs(exact.m[k])));
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l)
      EXPECT_NEAR(mc.Sigma(k, l), exact.Sigma(k, l), 0.02 * exact.Sigma.diagonal().maxCoeff());
}

TEST(ConditionalSplit, SingularBlockThrows) {
  GaussianProposal q;
  q.m = Vec::Zero(3);
  q.Sigma = Mat::Identity(3, 3);
  q.Sigma(0, 0) = 0.0;
  q.M_s = 1;
  EXPECT_THROW(conditional_gaussian_split(q, Vec::Zero(1)), NumericalError);
}

TEST(LogNormal, MatchesDiagonalForm) {
  Vec x(2), m(2), d(2);
  x << 1, 2;
  m << 0.5, -1;
  d << 2, 3;
  EXPECT_NEAR(log_normal_pdf(x, m, Mat(d.asDiagonal())), log_normal_pdf_diag(x, m, d), 1e-13);
  EXPECT_NEAR(log_normal_pdf_diag(Vec::Zero(1), Vec::Zero(1), Vec::Ones(1)), -0.5 * std::log(2 * M_PI), 1e-15);
}
