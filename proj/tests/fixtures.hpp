#pragma once

#include "pfeis/config.hpp"
#include "pfeis/unimodality.hpp"

namespace pfeis::fixture {

// Residual problem of the worked certificate example (v_s = v_1 = -3.2).
// Not copyable: post points into model and Y.
struct FigInstance {
  LdssModel model;
  Observation Y;
  CondPosterior post;
  GridSpec grid;

  FigInstance();
  FigInstance(const FigInstance&) = delete;
  FigInstance& operator=(const FigInstance&) = delete;
};

inline Mat fig_basis_raw() {
  Mat B(3, 3);
  B.col(0) << -0.27, 0.96, -0.02;
  B.col(1) << 0.33, 0.11, 0.94;
  B.col(2) << 0.90, 0.24, -0.35;
  return B;
}

inline FigInstance::FigInstance() {
  model.a = 1.0;
  model.B = nearest_orthogonal(fig_basis_raw());
  model.delta_nu = Vec::Ones(3);
  model.delta_nu[0] = 5.4;
  model.C0 = Vec::Zero(3);
  model.obs.alpha.resize(3, 2);
  model.obs.alpha << 0.1, 0.4, 0.1, 0.4, 0.1, 0.4;
  model.obs.sigma_obs2 = Vec::Ones(3);
  model.obs.h.assign(3, HKind::Linear);
  model.obs.fail = {FailKind::Uniform, -10.0, 10.0};
  Y.Y.resize(3, 2);
  Y.Y << 5.36, 0.59, -2.25, -1.60, -0.68, 0.35;
  Y.failed = Eigen::MatrixXi::Zero(3, 2);
  post.obs = &model.obs;
  post.Y = &Y;
  post.C_tilde = model.B.col(0) * -3.2;
  post.B_r = model.B.rightCols(2);
  post.f_r = Vec::Zero(2);
  post.Delta_r = Vec::Ones(2);
  grid = GridSpec::default_for(post.f_r, 5.4);
}

inline LdssModel linear_model(int M, double sigma2, double delta, double a = 1.0, int J = 1) {
  LdssModel m;
  m.a = a;
  m.B = Mat::Identity(M, M);
  m.delta_nu = Vec::Constant(M, delta);
  m.C0 = Vec::Zero(M);
  m.obs = SensorSpec::linear_gaussian(M, J, sigma2);
  return m;
}

}  // namespace pfeis::fixture
