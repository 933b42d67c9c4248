#pragma once

#include "pfeis/ldss_model.hpp"

namespace pfeis {

// L(v_r) = E_Y(C_tilde + B_r v_r) + sum_p (v_r - f_r)_p^2 / (2 Delta_r,p)
struct CondPosterior {
  const SensorSpec* obs = nullptr;
  const Observation* Y = nullptr;
  Vec C_tilde;
  Mat B_r;
  Vec f_r;
  Vec Delta_r;

  int dim() const { return static_cast<int>(f_r.size()); }
  Vec state(const Vec& v_r) const { return C_tilde + B_r * v_r; }

  double value(const Vec& v_r) const;
  // Any of L, grad, hess may be null.
  void eval(const Vec& v_r, double* L, Vec* grad, Mat* hess) const;
  // Energy part only, in residual coordinates.
  void energy_eval(const Vec& v_r, double* E, Vec* grad, Mat* hess) const;
};

double neg_log_cond_posterior(const CondPosterior& spec, const Vec& v_r);

struct ModeDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;
  bool cap_hit = false;
  int descent_steps = 0;  // iterations where the Hessian was not PD
};

struct ModeResult {
  Vec m;
  ModeDiagnostics diag;
};

struct ModeOptions {
  double grad_tol = 1e-8;
  int max_iter = 200;
  double armijo_c = 1e-4;
};

// Safeguarded Newton from f_r (or from *init). Throws NumericalError if L is
// not finite at the starting point or an iterate becomes non-finite.
ModeResult find_mode(const CondPosterior& spec, const Vec* init = nullptr,
                     const ModeOptions& opt = {});

// Inverse Hessian at m, symmetrized, eigenvalues floored at 1e-12 * max(Delta_r).
// Throws NumericalError when the Hessian at m is not positive definite.
Mat laplace_covariance(const CondPosterior& spec, const Vec& m, int* repairs = nullptr);

struct GaussianProposal {
  Vec m;
  Mat Sigma;
  int M_s = 0;  // leading block is the sampled residual part (r_s), the rest is r_r

  Vec m_s() const { return m.head(M_s); }
  Vec m_r() const { return m.tail(m.size() - M_s); }
  Mat Sigma_ss() const { return Sigma.topLeftCorner(M_s, M_s); }
  Mat Sigma_rr() const {
    const int r = static_cast<int>(m.size()) - M_s;
    return Sigma.bottomRightCorner(r, r);
  }
  Mat Sigma_rs() const {
    const int r = static_cast<int>(m.size()) - M_s;
    return Sigma.bottomLeftCorner(r, M_s);
  }
};

struct ConditionalGaussian {
  Vec m;
  Mat Sigma;
};

// Moments of the r_r block given x_rs.
ConditionalGaussian conditional_gaussian_split(const GaussianProposal& q, const Vec& x_rs);

double log_normal_pdf(const Vec& x, const Vec& mean, const Mat& Sigma);
double log_normal_pdf_diag(const Vec& x, const Vec& mean, const Vec& var);

}  // namespace pfeis
