#include "pfeis/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "pfeis/errors.hpp"
#include "pfeis/heuristics.hpp"

namespace pfeis {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Rng particle_rng(const StepContext& ctx, int i) {
  return Rng::stream(ctx.seed, {kDomainFilter, ctx.salt, ctx.run, static_cast<std::uint64_t>(ctx.t),
                                static_cast<std::uint64_t>(i)});
}

struct Proposal {
  Vec C, v;
  double logw = kNegInf;
  ModeDiagnostics diag;
  bool used_mode = false;
  bool fallback = false;
  int repairs = 0;
};

struct Ctx {
  const LdssModel& model;
  const Observation& Y;
};

// Sampled coordinates first, then the conditional posterior on the residual.
// mt_only: PF-MT (residual is all mode tracked, no IS correction).
Proposal propose(const Ctx& c, const StatePartition& part, const Vec& C_prev, const Vec& v_prev,
                 Rng& rng, bool mt_only) {
  const LdssModel& model = c.model;
  Proposal out;
  Vec f = model.a * v_prev;
  out.v = f;
  for (int k : part.s) out.v[k] = f[k] + std::sqrt(model.delta_nu[k]) * rng.normal();
  std::vector<int> sampled = part.s;
  std::vector<int> r = part.residual();
  if (mt_only) {
    sampled.insert(sampled.end(), part.rs.begin(), part.rs.end());
    for (int k : part.rs) out.v[k] = f[k] + std::sqrt(model.delta_nu[k]) * rng.normal();
    r = part.rr;
  }
  if (r.empty()) {
    out.C = C_prev + model.B * out.v;
    out.logw = ol_loglik(model.obs, c.Y, out.C);
    return out;
  }

  Vec Ctilde = C_prev;
  for (int k : sampled) Ctilde += model.B.col(k) * out.v[k];
  CondPosterior spec;
  spec.obs = &model.obs;
  spec.Y = &c.Y;
  spec.C_tilde = Ctilde;
  spec.B_r = select_columns(model.B, r);
  spec.f_r = select(f, r);
  spec.Delta_r = select(model.delta_nu, r);
  const int Mrs = mt_only ? 0 : part.M_rs();

  // draws for the residual are taken up front so a fallback consumes the same stream
  Vec z(r.size());
  for (int k = 0; k < z.size(); ++k) z[k] = rng.normal();

  Vec x_r;
  double logq = 0.0;
  bool ok = false;
  try {
    ModeResult mr = find_mode(spec);
    out.diag = mr.diag;
    out.used_mode = true;
    if (mt_only) {
      x_r = mr.m;
      logq = 0.0;
    } else {
      Mat Sigma = laplace_covariance(spec, mr.m, &out.repairs);
      GaussianProposal q{mr.m, Sigma, Mrs};
      if (part.M_rr() == 0) {
        Eigen::LLT<Mat> llt(Sigma);
        if (llt.info() != Eigen::Success) throw NumericalError("Sigma_IS is not PD");
        x_r = mr.m + llt.matrixL() * z;
      } else {
        x_r.resize(r.size());
        if (Mrs > 0) {
          Eigen::LLT<Mat> llt(q.Sigma_ss());
          if (llt.info() != Eigen::Success) throw NumericalError("Sigma_ss is not PD");
          x_r.head(Mrs) = q.m_s() + llt.matrixL() * z.head(Mrs);
        }
        ConditionalGaussian cg = conditional_gaussian_split(q, x_r.head(Mrs));
        x_r.tail(part.M_rr()) = cg.m;
      }
      logq = log_normal_pdf(x_r, mr.m, Sigma);
    }
    ok = x_r.allFinite() && std::isfinite(logq);
  } catch (const NumericalError&) {
    ok = false;
  }

  double logprior = 0.0;
  if (ok) {
    logprior = log_normal_pdf_diag(x_r, spec.f_r, spec.Delta_r);
  } else {
    // STP proposal for the residual: prior and proposal densities cancel
    out.fallback = true;
    x_r.resize(r.size());
    for (int k = 0; k < z.size(); ++k) x_r[k] = spec.f_r[k] + std::sqrt(spec.Delta_r[k]) * z[k];
    logq = 0.0;
  }
  for (size_t k = 0; k < r.size(); ++k) out.v[r[k]] = x_r[k];
  out.C = Ctilde + spec.B_r * x_r;
  out.logw = ol_loglik(model.obs, c.Y, out.C) + logprior - logq;
  return out;
}

// Normalizes log-weights into set.w, records mean and N_eff, then resamples.
template <class ProposeFn>
StepStats weight_and_resample(ParticleSet& set, const LdssModel& model, const StepContext& ctx,
                              ProposeFn&& fn) {
  const int N = set.N();
  const int M = model.M();
  Mat C(M, N), V(M, N);
  Vec lw(N);
  StepStats st;
  for (int i = 0; i < N; ++i) {
    Rng rng = particle_rng(ctx, i);
    Proposal p = fn(i, rng);
    if (!p.C.allFinite() || !p.v.allFinite()) throw NumericalError("non-finite particle state");
    C.col(i) = p.C;
    V.col(i) = p.v;
    double prev = set.w[i] > 0.0 ? std::log(set.w[i]) : kNegInf;
    lw[i] = std::isnan(p.logw) ? kNegInf : prev + p.logw;
    if (p.used_mode) {
      st.mode_iterations += p.diag.iterations;
      st.cap_hits += p.diag.cap_hit ? 1 : 0;
      st.descent_steps += p.diag.descent_steps;
    }
    st.repairs += p.repairs;
    st.fallbacks += p.fallback ? 1 : 0;
  }
  double mx = lw.maxCoeff();
  Vec w(N);
  if (!std::isfinite(mx)) {
    st.degenerate = true;
    w.setConstant(1.0 / N);
  } else {
    for (int i = 0; i < N; ++i) w[i] = std::exp(lw[i] - mx);
    w /= w.sum();
  }
  set.C = C;
  set.v = V;
  set.w = w;
  st.mean = posterior_mean(set);
  st.n_eff = effective_size(w);

  Rng rr = Rng::stream(ctx.seed, {kDomainResample, ctx.salt, ctx.run, static_cast<std::uint64_t>(ctx.t)});
  std::vector<int> idx = resample(w, N, ctx.scheme, rr);
  Mat C2(M, N), V2(M, N);
  for (int i = 0; i < N; ++i) {
    C2.col(i) = C.col(idx[i]);
    V2.col(i) = V.col(idx[i]);
  }
  set.C = std::move(C2);
  set.v = std::move(V2);
  set.w.setConstant(1.0 / N);
  return st;
}

}  // namespace

std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::Original: return "PF_ORIGINAL";
    case FilterKind::Doucet: return "PF_DOUCET";
    case FilterKind::EIS: return "PF_EIS";
    case FilterKind::MT: return "PF_MT";
    case FilterKind::EIS_MT: return "PF_EIS_MT";
    case FilterKind::OrigKDim: return "PF_ORIG_KDIM";
  }
  return "?";
}

FilterKind parse_filterkind(const std::string& s) {
  for (FilterKind k : {FilterKind::Original, FilterKind::Doucet, FilterKind::EIS, FilterKind::MT,
                       FilterKind::EIS_MT, FilterKind::OrigKDim})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown filter kind '" + s + "'");
}

std::string to_string(Resampling r) { return r == Resampling::Systematic ? "systematic" : "multinomial"; }

Resampling parse_resampling(const std::string& s) {
  if (s == "systematic") return Resampling::Systematic;
  if (s == "multinomial") return Resampling::Multinomial;
  throw ConfigError("unknown resampling scheme '" + s + "'");
}

void FilterSpec::validate(int M) const {
  part.validate(M);
  switch (kind) {
    case FilterKind::Original:
      if (part.K() != M) throw ConfigError("filter '" + name + "': PF_ORIGINAL requires K = M");
      break;
    case FilterKind::Doucet:
      if (part.K() != 0 || part.M_rr() != 0)
        throw ConfigError("filter '" + name + "': PF_DOUCET requires K = 0 and M_rr = 0");
      break;
    case FilterKind::EIS:
      if (part.M_rr() != 0) throw ConfigError("filter '" + name + "': PF_EIS has no mode-tracked block");
      if (!onfly && (part.K() < 1 || part.K() >= M))
        throw ConfigError("filter '" + name + "': PF_EIS requires 1 <= K < M");
      break;
    case FilterKind::MT:
    case FilterKind::EIS_MT:
      if (part.M_rr() < 1) throw ConfigError("filter '" + name + "': mode tracking requires M_rr >= 1");
      break;
    case FilterKind::OrigKDim:
      if (part.K() < 1) throw ConfigError("filter '" + name + "': PF_ORIG_KDIM requires K >= 1");
      break;
  }
  if (onfly && (onfly_K < 1 || onfly_K >= M))
    throw ConfigError("filter '" + name + "': onfly K must satisfy 1 <= K < M");
}

FilterSpec FilterSpec::original(int M, std::string name) {
  std::vector<int> all(M);
  for (int k = 0; k < M; ++k) all[k] = k;
  return {std::move(name), FilterKind::Original, StatePartition::make(M, all)};
}

FilterSpec FilterSpec::doucet(int M, std::string name) {
  return {std::move(name), FilterKind::Doucet, StatePartition::make(M, {})};
}

FilterSpec FilterSpec::eis(int M, const std::vector<int>& s, std::string name) {
  return {std::move(name), FilterKind::EIS, StatePartition::make(M, s)};
}

FilterSpec FilterSpec::mt(int M, const std::vector<int>& s, std::string name) {
  std::vector<int> rr;
  for (int k = 0; k < M; ++k)
    if (std::find(s.begin(), s.end(), k) == s.end()) rr.push_back(k);
  return {std::move(name), FilterKind::MT, StatePartition::make(M, s, rr)};
}

FilterSpec FilterSpec::eis_mt(int M, const std::vector<int>& s, const std::vector<int>& rr,
                              std::string name) {
  return {std::move(name), FilterKind::EIS_MT, StatePartition::make(M, s, rr)};
}

FilterSpec FilterSpec::orig_kdim(int M, const std::vector<int>& s, std::string name) {
  return {std::move(name), FilterKind::OrigKDim, StatePartition::make(M, s)};
}

ParticleSet init_particles(const LdssModel& model, int N) {
  if (N < 1) throw ConfigError("N must be >= 1");
  ParticleSet set;
  set.C = model.C0.replicate(1, N);
  set.v = Mat::Zero(model.M(), N);
  set.w = Vec::Constant(N, 1.0 / N);
  return set;
}

std::vector<int> resample(const Vec& weights, int N, Resampling scheme, Rng& rng) {
  const int n = static_cast<int>(weights.size());
  double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("resample: weights are all zero");
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += weights[i] / total;
    cdf[i] = acc;
  }
  cdf[n - 1] = 1.0;
  std::vector<int> idx(N);
  if (scheme == Resampling::Systematic) {
    double u0 = rng.uniform() / N;
    int j = 0;
    for (int i = 0; i < N; ++i) {
      double u = u0 + static_cast<double>(i) / N;
      while (j < n - 1 && cdf[j] <= u) ++j;
      idx[i] = j;
    }
  } else {
    for (int i = 0; i < N; ++i) {
      double u = rng.uniform();
      idx[i] = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      idx[i] = std::min(idx[i], n - 1);
    }
  }
  return idx;
}

double effective_size(const Vec& weights) { return 1.0 / weights.squaredNorm(); }

Vec posterior_mean(const ParticleSet& set) { return set.C * set.w; }

StepStats pf_original_step(ParticleSet& set, const LdssModel& model, const Observation& Y,
                           const StepContext& ctx) {
  StatePartition all = FilterSpec::original(model.M()).part;
  Ctx c{model, Y};
  StepStats st = weight_and_resample(set, model, ctx, [&](int i, Rng& rng) {
    return propose(c, all, set.C.col(i), set.v.col(i), rng, false);
  });
  st.K_used = model.M();
  return st;
}

StepStats pf_eis_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                      const Observation& Y, const StepContext& ctx) {
  if (part.M_rr() != 0) throw ConfigError("pf_eis_step: partition has a mode-tracked block");
  Ctx c{model, Y};
  StepStats st = weight_and_resample(set, model, ctx, [&](int i, Rng& rng) {
    return propose(c, part, set.C.col(i), set.v.col(i), rng, false);
  });
  st.K_used = part.K();
  return st;
}

StepStats pf_eis_mt_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                         const Observation& Y, const StepContext& ctx) {
  Ctx c{model, Y};
  StepStats st = weight_and_resample(set, model, ctx, [&](int i, Rng& rng) {
    return propose(c, part, set.C.col(i), set.v.col(i), rng, false);
  });
  st.K_used = part.K();
  return st;
}

StepStats pf_mt_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                     const Observation& Y, const StepContext& ctx) {
  Ctx c{model, Y};
  StepStats st = weight_and_resample(set, model, ctx, [&](int i, Rng& rng) {
    return propose(c, part, set.C.col(i), set.v.col(i), rng, true);
  });
  st.K_used = part.K() + part.M_rs();
  return st;
}

StepStats pf_orig_kdim_step(ParticleSet& set, const LdssModel& model, const StatePartition& part,
                            const Observation& Y, const StepContext& ctx) {
  StepStats st = weight_and_resample(set, model, ctx, [&](int i, Rng& rng) {
    Proposal p;
    Vec f = model.a * set.v.col(i);
    p.v = f;
    for (int k : part.s) p.v[k] = f[k] + std::sqrt(model.delta_nu[k]) * rng.normal();
    p.C = set.C.col(i) + model.B * p.v;
    p.logw = ol_loglik(model.obs, Y, p.C);
    return p;
  });
  st.K_used = part.K();
  return st;
}

StepStats filter_step(ParticleSet& set, const LdssModel& model, const FilterSpec& spec,
                      const Observation& Y, const StepContext& ctx) {
  switch (spec.kind) {
    case FilterKind::Original: return pf_original_step(set, model, Y, ctx);
    case FilterKind::Doucet: return pf_eis_step(set, model, StatePartition::make(model.M(), {}), Y, ctx);
    case FilterKind::EIS: {
      if (!spec.onfly) return pf_eis_step(set, model, spec.part, Y, ctx);
      double thr = spec.onfly_threshold > 0.0 ? spec.onfly_threshold : onfly_default_threshold(model.M());
      std::optional<int> p0 = onfly_select(Y.Y, model.obs.sigma_obs2, thr);
      std::vector<int> s;
      if (p0) s = choose_vts_single(model.B, model.delta_nu, *p0, spec.onfly_K);
      return pf_eis_step(set, model, StatePartition::make(model.M(), s), Y, ctx);
    }
    case FilterKind::MT: return pf_mt_step(set, model, spec.part, Y, ctx);
    case FilterKind::EIS_MT: return pf_eis_mt_step(set, model, spec.part, Y, ctx);
    case FilterKind::OrigKDim: return pf_orig_kdim_step(set, model, spec.part, Y, ctx);
  }
  throw ConfigError("unknown filter kind");
}

FilterRun run_filter(const LdssModel& model, const FilterSpec& spec, const std::vector<Observation>& Y,
                     int N, std::uint64_t seed, std::uint64_t run, Resampling scheme,
                     std::uint64_t salt) {
  spec.validate(model.M());
  const int T = static_cast<int>(Y.size()) - 1;
  FilterRun out;
  out.means.resize(T + 1, model.M());
  out.means.row(0) = model.C0.transpose();
  ParticleSet set = init_particles(model, N);
  for (int t = 1; t <= T; ++t) {
    StepContext ctx{seed, run, t, scheme, salt};
    StepStats st = filter_step(set, model, spec, Y[t], ctx);
    out.means.row(t) = st.mean.transpose();
    out.stats.push_back(std::move(st));
  }
  return out;
}

KalmanResult kalman_filter(const LdssModel& model, const std::vector<Observation>& Y) {
  const int M = model.M();
  const SensorSpec& obs = model.obs;
  if (obs.alpha.cwiseAbs().maxCoeff() > 0.0) throw ConfigError("kalman_filter: requires alpha = 0");
  for (HKind h : obs.h)
    if (h != HKind::Linear) throw ConfigError("kalman_filter: requires linear sensors");
  const int J = obs.J();
  const int n = 2 * M;
  Mat F = Mat::Zero(n, n);
  F.topLeftCorner(M, M).setIdentity();
  F.topRightCorner(M, M) = model.a * model.B;
  F.bottomRightCorner(M, M) = model.a * Mat::Identity(M, M);
  Mat G(n, M);
  G.topRows(M) = model.B;
  G.bottomRows(M).setIdentity();
  Mat Q = G * model.delta_nu.asDiagonal() * G.transpose();
  Mat H = Mat::Zero(M * J, n);
  Vec R(M * J);
  for (int p = 0; p < M; ++p)
    for (int j = 0; j < J; ++j) {
      H(p * J + j, p) = 1.0;
      R[p * J + j] = obs.sigma_obs2[p];
    }

  KalmanResult out;
  Vec x = Vec::Zero(n);
  x.head(M) = model.C0;
  Mat P = Mat::Zero(n, n);
  out.means.push_back(x);
  out.covs.push_back(P);
  for (size_t t = 1; t < Y.size(); ++t) {
    x = F * x;
    P = F * P * F.transpose() + Q;
    Vec y(M * J);
    for (int p = 0; p < M; ++p)
      for (int j = 0; j < J; ++j) y[p * J + j] = Y[t].Y(p, j);
    Mat S = H * P * H.transpose();
    S.diagonal() += R;
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) throw NumericalError("kalman_filter: innovation covariance is not PD");
    Mat K = llt.solve(H * P).transpose();
    x += K * (y - H * x);
    P = P - K * H * P;
    P = 0.5 * (P + P.transpose());
    out.means.push_back(x);
    out.covs.push_back(P);
  }
  return out;
}

Mat rbpf_oracle(const LdssModel& model, const std::vector<int>& s, const std::vector<Observation>& Y,
                int N, std::uint64_t seed, std::uint64_t run, std::uint64_t salt) {
  const int M = model.M();
  const SensorSpec& obs = model.obs;
  const int J = obs.J();
  StatePartition part = StatePartition::make(M, s);
  const std::vector<int> r = part.residual();
  const int Mr = static_cast<int>(r.size());
  Mat Br = select_columns(model.B, r);
  Vec Dr = select(model.delta_nu, r);

  // nodes that see the marginalized coordinates
  std::vector<int> lin_nodes, other_nodes;
  for (int p = 0; p < M; ++p) {
    if (Br.row(p).cwiseAbs().maxCoeff() > 1e-12) {
      if (obs.h[p] != HKind::Linear || obs.alpha.row(p).cwiseAbs().maxCoeff() > 0.0)
        throw ConfigError("rbpf_oracle: nodes coupled to the marginalized block must be linear and failure-free");
      lin_nodes.push_back(p);
    } else {
      other_nodes.push_back(p);
    }
  }
  const int nz = 2 * Mr;  // [S_r; v_r], S_r = running sum of v_r
  Mat F = Mat::Zero(nz, nz);
  F.topLeftCorner(Mr, Mr).setIdentity();
  F.topRightCorner(Mr, Mr) = model.a * Mat::Identity(Mr, Mr);
  F.bottomRightCorner(Mr, Mr) = model.a * Mat::Identity(Mr, Mr);
  Mat G(nz, Mr);
  G.topRows(Mr).setIdentity();
  G.bottomRows(Mr).setIdentity();
  Mat Q = G * Dr.asDiagonal() * G.transpose();
  const int ny = static_cast<int>(lin_nodes.size()) * J;
  Mat H = Mat::Zero(ny, nz);
  Vec R(ny);
  for (size_t q = 0; q < lin_nodes.size(); ++q)
    for (int j = 0; j < J; ++j) {
      H.row(q * J + j).head(Mr) = Br.row(lin_nodes[q]);
      R[q * J + j] = obs.sigma_obs2[lin_nodes[q]];
    }

  const int T = static_cast<int>(Y.size()) - 1;
  Mat means(T + 1, M);
  means.row(0) = model.C0.transpose();
  // per particle: Cs = C0 + B_s S_s, v (full, only s entries meaningful), Kalman (z, P)
  Mat Cs = model.C0.replicate(1, N);
  Mat V = Mat::Zero(M, N);
  std::vector<Vec> z(N, Vec::Zero(nz));
  std::vector<Mat> P(N, Mat::Zero(nz, nz));
  for (int t = 1; t <= T; ++t) {
    Vec lw(N);
    Mat Cs_new(M, N), V_new(M, N);
    std::vector<Vec> z_new(N);
    std::vector<Mat> P_new(N);
    StepContext ctx{seed, run, t, Resampling::Systematic, salt};
    for (int i = 0; i < N; ++i) {
      Rng rng = particle_rng(ctx, i);
      Vec v = model.a * V.col(i);
      for (int k : s) v[k] = model.a * V(k, i) + std::sqrt(model.delta_nu[k]) * rng.normal();
      Vec c = Cs.col(i);
      for (int k : s) c += model.B.col(k) * v[k];
      double l = 0.0;
      for (int p : other_nodes) l += node_loglik(obs, Y[t], p, c[p]);
      Vec zp = F * z[i];
      Mat Pp = F * P[i] * F.transpose() + Q;
      if (ny > 0) {
        Vec y(ny), base(ny);
        for (size_t q = 0; q < lin_nodes.size(); ++q)
          for (int j = 0; j < J; ++j) {
            y[q * J + j] = Y[t].Y(lin_nodes[q], j);
            base[q * J + j] = c[lin_nodes[q]];
          }
        Mat S = H * Pp * H.transpose();
        S.diagonal() += R;
        Vec innov = y - base - H * zp;
        l += log_normal_pdf(innov, Vec::Zero(ny), S);
        Eigen::LLT<Mat> llt(S);
        Mat K = llt.solve(H * Pp).transpose();
        zp += K * innov;
        Pp -= K * H * Pp;
        Pp = 0.5 * (Pp + Pp.transpose());
      }
      lw[i] = l;
      Cs_new.col(i) = c;
      V_new.col(i) = v;
      for (int k = 0; k < Mr; ++k) V_new(r[k], i) = zp[Mr + k];
      z_new[i] = zp;
      P_new[i] = Pp;
    }
    double mx = lw.maxCoeff();
    Vec w(N);
    if (!std::isfinite(mx))
      w.setConstant(1.0 / N);
    else {
      for (int i = 0; i < N; ++i) w[i] = std::exp(lw[i] - mx);
      w /= w.sum();
    }
    Vec mean = Vec::Zero(M);
    for (int i = 0; i < N; ++i) mean += w[i] * (Cs_new.col(i) + Br * z_new[i].head(Mr));
    means.row(t) = mean.transpose();
    Rng rr = Rng::stream(seed, {kDomainResample, salt, run, static_cast<std::uint64_t>(t)});
    std::vector<int> idx = resample(w, N, Resampling::Systematic, rr);
    for (int i = 0; i < N; ++i) {
      Cs.col(i) = Cs_new.col(idx[i]);
      V.col(i) = V_new.col(idx[i]);
      z[i] = z_new[idx[i]];
      P[i] = P_new[idx[i]];
    }
  }
  return means;
}

}  // namespace pfeis
