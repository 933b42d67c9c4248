#include "pfeis/ldss_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfeis/errors.hpp"

namespace pfeis {

void LdssModel::validate() const {
  const int m = M();
  if (m < 1 || B.cols() != m) throw ConfigError("model.B: must be square and non-empty");
  if (delta_nu.size() != m) throw ConfigError("model.delta_nu: length must equal M");
  if (C0.size() != m) throw ConfigError("model.C0: length must equal M");
  if (!(a > 0.0 && a <= 1.0)) throw ConfigError("model.a: must satisfy 0 < a <= 1");
  for (int p = 0; p < m; ++p)
    if (!(delta_nu[p] >= 0.0) || !std::isfinite(delta_nu[p]))
      throw ConfigError("model.delta_nu: entries must be finite and >= 0");
  double orth = (B.transpose() * B - Mat::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(orth <= 1e-10))
    throw ConfigError("model.B: columns are not orthonormal (max |B'B - I| = " +
                      std::to_string(orth) + "); set \"orthonormalize\": true");
  if (obs.M() != m) throw ConfigError("sensors: node count must equal M");
  obs.validate();
}

EigenBasis eigen_basis(const Mat& Sigma_n) {
  if (Sigma_n.rows() != Sigma_n.cols() || Sigma_n.rows() == 0)
    throw ConfigError("eigen_basis: matrix must be square");
  if ((Sigma_n - Sigma_n.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw ConfigError("eigen_basis: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma_n);
  const int m = static_cast<int>(Sigma_n.rows());
  EigenBasis out;
  out.B.resize(m, m);
  out.delta_nu.resize(m);
  for (int k = 0; k < m; ++k) {
    int src = m - 1 - k;  // solver sorts ascending
    Vec col = es.eigenvectors().col(src);
    for (int p = 0; p < m; ++p) {
      if (std::abs(col[p]) > 1e-12) {
        if (col[p] < 0) col = -col;
        break;
      }
    }
    out.B.col(k) = col;
    out.delta_nu[k] = std::max(0.0, es.eigenvalues()[src]);
  }
  return out;
}

Mat householder_basis(const Vec& first_row) {
  const int m = static_cast<int>(first_row.size());
  double n = first_row.norm();
  if (!(n > 0)) throw ConfigError("householder basis: first row must be nonzero");
  Vec u = first_row / n;
  Vec w = -u;
  w[0] += 1.0;
  double ww = w.squaredNorm();
  if (ww < 1e-30) return Mat::Identity(m, m);
  return Mat::Identity(m, m) - 2.0 * w * w.transpose() / ww;
}

Mat nearest_orthogonal(const Mat& B) {
  Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Vec propagate_velocity(const LdssModel& model, const Vec& v_prev, const Vec& noise) {
  if (v_prev.size() != model.M() || noise.size() != model.M())
    throw ConfigError("propagate_velocity: dimension mismatch");
  return model.a * v_prev + noise;
}

Vec propagate_state(const LdssModel& model, const Vec& C_prev, const Vec& v) {
  if (C_prev.size() != model.M() || v.size() != model.M())
    throw ConfigError("propagate_state: dimension mismatch");
  return C_prev + model.B * v;
}

Trajectory simulate(const LdssModel& model, int T, std::uint64_t seed, std::uint64_t run) {
  if (T < 1) throw ConfigError("simulate: T must be >= 1");
  const int m = model.M();
  Trajectory tr;
  tr.C.resize(T + 1, m);
  tr.v.resize(T + 1, m);
  tr.Y.resize(T + 1);
  tr.C.row(0) = model.C0.transpose();
  tr.v.row(0).setZero();
  Vec sd = model.delta_nu.cwiseSqrt();
  for (int t = 1; t <= T; ++t) {
    Rng rng = Rng::stream(seed, {kDomainSimulate, run, static_cast<std::uint64_t>(t)});
    Vec noise(m);
    for (int p = 0; p < m; ++p) noise[p] = sd[p] * rng.normal();
    Vec v = propagate_velocity(model, tr.v.row(t - 1).transpose(), noise);
    Vec C = propagate_state(model, tr.C.row(t - 1).transpose(), v);
    tr.v.row(t) = v.transpose();
    tr.C.row(t) = C.transpose();
    tr.Y[t] = sample_observation(model.obs, C, rng);
  }
  return tr;
}

std::vector<int> StatePartition::residual() const {
  std::vector<int> r = rs;
  r.insert(r.end(), rr.begin(), rr.end());
  return r;
}

void StatePartition::validate(int M) const {
  std::vector<int> all = s;
  all.insert(all.end(), rs.begin(), rs.end());
  all.insert(all.end(), rr.begin(), rr.end());
  if (static_cast<int>(all.size()) != M)
    throw ConfigError("partition: K + M_rs + M_rr must equal M");
  std::sort(all.begin(), all.end());
  for (int k = 0; k < M; ++k)
    if (all[k] != k) throw ConfigError("partition: index sets must be disjoint and cover 1..M");
}

StatePartition StatePartition::make(int M, const std::vector<int>& s, const std::vector<int>& rr) {
  StatePartition part;
  part.s = s;
  part.rr = rr;
  for (int k = 0; k < M; ++k) {
    bool used = std::find(s.begin(), s.end(), k) != s.end() ||
                std::find(rr.begin(), rr.end(), k) != rr.end();
    if (!used) part.rs.push_back(k);
  }
  part.validate(M);
  return part;
}

Mat select_columns(const Mat& A, const std::vector<int>& idx) {
  Mat out(A.rows(), idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out.col(k) = A.col(idx[k]);
  return out;
}

Vec select(const Vec& x, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out[k] = x[idx[k]];
  return out;
}

}  // namespace pfeis
