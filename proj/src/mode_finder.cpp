#include "pfeis/mode_finder.hpp"

#include <cmath>
#include <limits>

#include "pfeis/errors.hpp"

namespace pfeis {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void CondPosterior::energy_eval(const Vec& v_r, double* E, Vec* grad, Mat* hess) const {
  const bool derivs = grad != nullptr || hess != nullptr;
  EnergyTerms et = energy_terms(*obs, *Y, state(v_r), derivs);
  if (E) *E = et.E;
  if (grad) *grad = B_r.transpose() * et.grad;
  if (hess) *hess = B_r.transpose() * et.hess_diag.asDiagonal() * B_r;
}

void CondPosterior::eval(const Vec& v_r, double* L, Vec* grad, Mat* hess) const {
  double E = 0.0;
  energy_eval(v_r, &E, grad, hess);
  Vec d = v_r - f_r;
  if (L) *L = E + 0.5 * d.cwiseProduct(d).cwiseQuotient(Delta_r).sum();
  if (grad) *grad += d.cwiseQuotient(Delta_r);
  if (hess) hess->diagonal() += Delta_r.cwiseInverse();
}

double CondPosterior::value(const Vec& v_r) const {
  double L = 0.0;
  eval(v_r, &L, nullptr, nullptr);
  return L;
}

double neg_log_cond_posterior(const CondPosterior& spec, const Vec& v_r) { return spec.value(v_r); }

ModeResult find_mode(const CondPosterior& spec, const Vec* init, const ModeOptions& opt) {
  for (int p = 0; p < spec.dim(); ++p)
    if (!(spec.Delta_r[p] > 0.0)) throw NumericalError("find_mode: residual variances must be > 0");
  ModeResult res;
  Vec v = init ? *init : spec.f_r;
  double L;
  Vec g;
  Mat H;
  spec.eval(v, &L, &g, &H);
  if (!std::isfinite(L)) throw NumericalError("find_mode: L is not finite at the initial guess");

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) break;
    Vec d;
    Eigen::LLT<Mat> llt(H);
    if (llt.info() == Eigen::Success) {
      d = -llt.solve(g);
    }
    if (d.size() == 0 || !d.allFinite() || g.dot(d) >= 0.0) {
      // scaled steepest descent: the prior variances set the natural step size
      d = -spec.Delta_r.cwiseProduct(g);
      ++res.diag.descent_steps;
    }
    const double slope = g.dot(d);
    double step = 1.0;
    double L_new = 0.0;
    Vec v_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      v_new = v + step * d;
      L_new = spec.value(v_new);
      if (std::isfinite(L_new) && L_new <= L + opt.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease at working precision
    v = v_new;
    spec.eval(v, &L, &g, &H);
    if (!v.allFinite() || !std::isfinite(L)) throw NumericalError("find_mode: non-finite iterate");
  }
  res.m = v;
  res.diag.iterations = it;
  res.diag.grad_norm = g.lpNorm<Eigen::Infinity>();
  res.diag.cap_hit = it >= opt.max_iter && res.diag.grad_norm >= opt.grad_tol;
  return res;
}

Mat laplace_covariance(const CondPosterior& spec, const Vec& m, int* repairs) {
  Mat H;
  spec.eval(m, nullptr, nullptr, &H);
  if (!H.allFinite()) throw NumericalError("laplace_covariance: non-finite Hessian");
  H = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const Vec& lam = es.eigenvalues();
  if (!(lam.minCoeff() > 0.0))
    throw NumericalError("laplace_covariance: Hessian at the mode is not positive definite");
  const double floor = 1e-12 * spec.Delta_r.maxCoeff();
  Vec inv = lam.cwiseInverse();
  int fixed = 0;
  for (int k = 0; k < inv.size(); ++k) {
    if (inv[k] < floor) {
      inv[k] = floor;
      ++fixed;
    }
  }
  if (repairs) *repairs += fixed;
  Mat S = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (S + S.transpose());
}

ConditionalGaussian conditional_gaussian_split(const GaussianProposal& q, const Vec& x_rs) {
  if (x_rs.size() != q.M_s) throw ConfigError("conditional_gaussian_split: x_rs has wrong length");
  ConditionalGaussian out;
  if (q.M_s == 0) {
    out.m = q.m_r();
    out.Sigma = q.Sigma_rr();
    return out;
  }
  Mat Sss = q.Sigma_ss();
  Eigen::LLT<Mat> llt(Sss);
  if (llt.info() != Eigen::Success || Sss.diagonal().minCoeff() <= 0.0)
    throw NumericalError("conditional_gaussian_split: Sigma_ss is singular");
  Mat Srs = q.Sigma_rs();
  out.m = q.m_r() + Srs * llt.solve(x_rs - q.m_s());
  out.Sigma = q.Sigma_rr() - Srs * llt.solve(Srs.transpose());
  out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose());
  return out;
}

double log_normal_pdf(const Vec& x, const Vec& mean, const Mat& Sigma) {
  Eigen::LLT<Mat> llt(Sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("log_normal_pdf: covariance not PD");
  Vec z = llt.matrixL().solve(x - mean);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (x.size() * kLog2Pi + logdet + z.squaredNorm());
}

double log_normal_pdf_diag(const Vec& x, const Vec& mean, const Vec& var) {
  double s = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    double d = x[k] - mean[k];
    s += -0.5 * (kLog2Pi + std::log(var[k])) - d * d / (2.0 * var[k]);
  }
  return s;
}

}  // namespace pfeis
