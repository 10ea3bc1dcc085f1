#include "lcmvp/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>

namespace lcmvp::likelihood {

using corrconstrain::CholDerivs;
using corrconstrain::CorrBounds;
using corrconstrain::CorrChol;
using corrconstrain::n_raw;

namespace {

constexpr int kMaxT = 32;
constexpr double kLogQFloor = -690.77552789821371;  // log(1e-300)
constexpr double kUClampLo = 1e-12;
constexpr double kUClampHi = 1.0 - 1e-12;
const double kNegInf = -std::numeric_limits<double>::infinity();

void check_tests(int T) {
  if (T < 1 || T > kMaxT) throw std::invalid_argument("n_tests out of supported range");
}

}  // namespace

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::ci: return "ci";
    case ModelKind::lt: return "lt";
    case ModelKind::mvp: return "mvp";
  }
  throw std::logic_error("unknown ModelKind");
}

ModelKind model_from_string(const std::string& s) {
  if (s == "ci") return ModelKind::ci;
  if (s == "lt") return ModelKind::lt;
  if (s == "mvp") return ModelKind::mvp;
  throw std::invalid_argument("unknown model '" + s + "' (expected ci, lt or mvp)");
}

void BinaryDataset::validate() const {
  if (n_subjects < 1 || n_tests < 2) throw std::invalid_argument("BinaryDataset: need N >= 1, T >= 2");
  if (y.rows() != n_subjects || y.cols() != n_tests)
    throw std::invalid_argument("BinaryDataset: y shape mismatch");
  for (int n = 0; n < n_subjects; ++n)
    for (int t = 0; t < n_tests; ++t)
      if (y(n, t) != 0 && y(n, t) != 1) throw std::invalid_argument("BinaryDataset: entries must be 0/1");
}

SummaryAccuracy summary_accuracy_lt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int T = static_cast<int>(a.cols());
  SummaryAccuracy out;
  out.se.resize(T);
  out.sp.resize(T);
  for (int t = 0; t < T; ++t) {
    out.se[t] = math::phi(a(1, t) / std::sqrt(1.0 + b(1, t) * b(1, t)));
    out.sp[t] = math::phi(-a(0, t) / std::sqrt(1.0 + b(0, t) * b(0, t)));
  }
  return out;
}

SummaryAccuracy summary_accuracy_mvp(const Eigen::MatrixXd& beta) {
  const int T = static_cast<int>(beta.cols());
  SummaryAccuracy out;
  out.se.resize(T);
  out.sp.resize(T);
  for (int t = 0; t < T; ++t) {
    out.se[t] = math::phi(beta(1, t));
    out.sp[t] = math::phi(-beta(0, t));
  }
  return out;
}

double theta_jacobian_log(double b) { return -0.5 * std::log1p(b * b); }

LtAsMvp lt_as_mvp(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int T = static_cast<int>(a.cols());
  if (b.minCoeff() <= 0.0) throw std::invalid_argument("lt_as_mvp: b must be positive");
  LtAsMvp out;
  out.beta.resize(2, T);
  for (int d = 0; d < 2; ++d) {
    Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(T, T);
    for (int i = 0; i < T; ++i) {
      const double si = std::sqrt(1.0 + b(d, i) * b(d, i));
      out.beta(d, i) = a(d, i) / si;
      for (int j = 0; j < i; ++j) {
        const double sj = std::sqrt(1.0 + b(d, j) * b(d, j));
        omega(i, j) = omega(j, i) = b(d, i) * b(d, j) / (si * sj);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success) throw std::runtime_error("lt_as_mvp: correlation not PD");
    out.chol[static_cast<size_t>(d)] = CorrChol{T, Eigen::MatrixXd(llt.matrixL()), 0.0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// pattern aggregation (CI and GH-marginal likelihoods depend on y only
// through the response pattern)

namespace {

std::map<uint32_t, long> pattern_counts(const BinaryDataset& data) {
  check_tests(data.n_tests);
  std::map<uint32_t, long> counts;
  for (int n = 0; n < data.n_subjects; ++n) {
    uint32_t mask = 0;
    for (int t = 0; t < data.n_tests; ++t)
      if (data.y(n, t)) mask |= (1u << t);
    ++counts[mask];
  }
  return counts;
}

}  // namespace

double ci_loglik(const Eigen::MatrixXd& beta, double prev, const BinaryDataset& data) {
  const int T = data.n_tests;
  check_tests(T);
  const double lp1 = -math::log1p_exp(math::logit(prev));   // log(1-p)
  const double lp2 = -math::log1p_exp(-math::logit(prev));  // log p
  Eigen::MatrixXd lpos(2, T), lneg(2, T);
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t) {
      lpos(d, t) = math::log_phi(beta(d, t));
      lneg(d, t) = math::log_phi(-beta(d, t));
    }
  double total = 0.0;
  for (const auto& [mask, count] : pattern_counts(data)) {
    double la1 = 0.0, la2 = 0.0;
    for (int t = 0; t < T; ++t) {
      const bool pos = (mask >> t) & 1u;
      la1 += pos ? lpos(0, t) : lneg(0, t);
      la2 += pos ? lpos(1, t) : lneg(1, t);
    }
    total += static_cast<double>(count) * math::logsumexp2(lp1 + la1, lp2 + la2);
  }
  return total;
}

// ---------------------------------------------------------------------------
// GHK kernels

namespace {

struct GhkStash {
  double z[kMaxT];
  double eta[kMaxT];
  double logq[kMaxT];
  double lphi_eta[kMaxT];
  double lphi_z[kMaxT];
  double u[kMaxT];
};

// Forward sweep on the log scale; q floored at 1e-300. The truncated-normal
// inverse CDF goes through the small-tail side (s = q*u or q*(1-u)) so no
// precision is lost forming 1 - small.
double ghk_forward(const double* beta, const Eigen::MatrixXd& L, const int* y, const double* u,
                   int T, GhkStash* stash) {
  double z[kMaxT];
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    double m = beta[t];
    for (int k = 0; k < t; ++k) m += L(t, k) * z[k];
    const double eta = -m / L(t, t);
    double logq, ls, zt;
    if (y[t]) {
      logq = std::max(math::log_phi(-eta), kLogQFloor);
      ls = logq + std::log1p(-u[t]);
      zt = -math::inv_phi(std::exp(std::max(ls, -744.0)));
    } else {
      logq = std::max(math::log_phi(eta), kLogQFloor);
      ls = logq + std::log(u[t]);
      zt = math::inv_phi(std::exp(std::max(ls, -744.0)));
    }
    z[t] = zt;
    total += logq;
    if (stash) {
      stash->z[t] = zt;
      stash->eta[t] = eta;
      stash->logq[t] = logq;
      stash->lphi_eta[t] = math::norm_logpdf(eta);
      stash->lphi_z[t] = math::norm_logpdf(zt);
      stash->u[t] = u[t];
    }
  }
  return total;
}

// Reverse sweep of d(log prod q)/d(beta, L, u), scaled by weight and
// accumulated into the outputs. zbar[s] carries d(logA)/d(z_s) through all
// later conditional means.
void ghk_reverse(const Eigen::MatrixXd& L, const int* y, const GhkStash& s, int T, double weight,
                 double* gbeta, Eigen::MatrixXd& gL, double* gu) {
  double zbar[kMaxT];
  std::fill(zbar, zbar + T, 0.0);
  for (int t = T - 1; t >= 0; --t) {
    const double inv_ltt = 1.0 / L(t, t);
    double dlogq_deta, dz_deta;
    if (y[t]) {
      dlogq_deta = -std::exp(s.lphi_eta[t] - s.logq[t]);
      dz_deta = (1.0 - s.u[t]) * std::exp(s.lphi_eta[t] - s.lphi_z[t]);
    } else {
      dlogq_deta = std::exp(s.lphi_eta[t] - s.logq[t]);
      dz_deta = s.u[t] * std::exp(s.lphi_eta[t] - s.lphi_z[t]);
    }
    const double dz_du = std::exp(s.logq[t] - s.lphi_z[t]);
    const double etabar = dlogq_deta + zbar[t] * dz_deta;
    gu[t] += weight * zbar[t] * dz_du;
    gbeta[t] += weight * (-etabar * inv_ltt);
    gL(t, t) += weight * (-etabar * s.eta[t] * inv_ltt);
    for (int k = 0; k < t; ++k) {
      gL(t, k) += weight * (-etabar * s.z[k] * inv_ltt);
      zbar[k] += -etabar * L(t, k) * inv_ltt;
    }
  }
}

}  // namespace

GhkResult ghk_class_prob(const Eigen::VectorXd& beta_d, const CorrChol& chol_d,
                         const Eigen::VectorXi& y_n, const Eigen::VectorXd& u_n) {
  const int T = chol_d.dim;
  check_tests(T);
  if (beta_d.size() != T || y_n.size() != T || u_n.size() != T)
    throw std::invalid_argument("ghk_class_prob: dimension mismatch");
  int yb[kMaxT];
  double ub[kMaxT];
  for (int t = 0; t < T; ++t) {
    yb[t] = y_n[t];
    if (!(u_n[t] > 0.0 && u_n[t] < 1.0)) throw std::invalid_argument("ghk_class_prob: u outside (0,1)");
    ub[t] = u_n[t];
  }
  GhkStash stash;
  GhkResult out;
  out.logprob = ghk_forward(beta_d.data(), chol_d.L, yb, ub, T, &stash);
  out.prob = std::exp(out.logprob);
  out.z = Eigen::Map<Eigen::VectorXd>(stash.z, T);
  return out;
}

double lcmvp_loglik(const MvpParams& params, const BinaryDataset& data) {
  const int T = data.n_tests;
  check_tests(T);
  const double zeta = math::logit(params.prev);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);
  int yb[kMaxT];
  double ub[kMaxT];
  double total = 0.0;
  const Eigen::VectorXd b1 = params.beta.row(0).transpose();
  const Eigen::VectorXd b2 = params.beta.row(1).transpose();
  for (int n = 0; n < data.n_subjects; ++n) {
    for (int t = 0; t < T; ++t) {
      yb[t] = data.y(n, t);
      ub[t] = params.u(n, t);
    }
    const double la1 = ghk_forward(b1.data(), params.chol[0].L, yb, ub, T, nullptr);
    const double la2 = ghk_forward(b2.data(), params.chol[1].L, yb, ub, T, nullptr);
    total += math::logsumexp2(lp1 + la1, lp2 + la2);
  }
  return total;
}

// ---------------------------------------------------------------------------
// unconstrained parameterizations

MvpParams mvp_unpack(const Eigen::VectorXd& x, const CorrBounds& bounds1, const CorrBounds& bounds2,
                     int n_subjects) {
  const int T = bounds1.dim;
  const int m = n_raw(T);
  if (bounds2.dim != T) throw std::invalid_argument("mvp_unpack: class bounds dims differ");
  if (x.size() != mvp_dim(T, n_subjects)) throw std::invalid_argument("mvp_unpack: bad x length");
  MvpParams p;
  p.prev = math::sigmoid(x[0]);
  p.beta.resize(2, T);
  p.beta.row(0) = x.segment(1, T).transpose();
  p.beta.row(1) = x.segment(1 + T, T).transpose();
  p.chol[0] = corrconstrain::chol_from_raw(x.segment(1 + 2 * T, m), bounds1);
  p.chol[1] = corrconstrain::chol_from_raw(x.segment(1 + 2 * T + m, m), bounds2);
  p.u.resize(n_subjects, T);
  for (int n = 0; n < n_subjects; ++n)
    for (int t = 0; t < T; ++t)
      p.u(n, t) = std::clamp(math::sigmoid(x[1 + 2 * T + 2 * m + n * T + t]), kUClampLo, kUClampHi);
  return p;
}

LatentTraitParams lt_unpack(const Eigen::VectorXd& x, int n_tests, int n_subjects) {
  if (x.size() != lt_dim(n_tests, n_subjects)) throw std::invalid_argument("lt_unpack: bad x length");
  LatentTraitParams p;
  p.prev = math::sigmoid(x[0]);
  p.a.resize(2, n_tests);
  p.b.resize(2, n_tests);
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < n_tests; ++t) {
      p.a(d, t) = x[1 + d * n_tests + t];
      p.b(d, t) = std::exp(x[1 + 2 * n_tests + d * n_tests + t]);
    }
  p.gamma = x.segment(1 + 4 * n_tests, n_subjects);
  return p;
}

double mvp_value_grad(const Eigen::VectorXd& x, const CorrBounds& bounds1,
                      const CorrBounds& bounds2, const BinaryDataset& data, bool with_jacobians,
                      Eigen::VectorXd* grad) {
  const int T = bounds1.dim;
  const int m = n_raw(T);
  const int N = data.n_subjects;
  check_tests(T);
  if (bounds2.dim != T) throw std::invalid_argument("mvp_value_grad: class bounds dims differ");
  if (N > 0 && data.n_tests != T) throw std::invalid_argument("mvp_value_grad: data/bounds T mismatch");
  const int dim = mvp_dim(T, N);
  if (x.size() != dim) throw std::invalid_argument("mvp_value_grad: bad x length");
  if (grad) grad->setZero(dim);

  const double zeta = x[0];
  const double p = math::sigmoid(zeta);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);

  thread_local CholDerivs cd1, cd2;
  thread_local corrconstrain::CorrChol ch1, ch2;
  const Eigen::VectorXd raw1 = x.segment(1 + 2 * T, m);
  const Eigen::VectorXd raw2 = x.segment(1 + 2 * T + m, m);
  try {
    if (grad) {
      corrconstrain::chol_from_raw_with_derivs(raw1, bounds1, cd1);
      corrconstrain::chol_from_raw_with_derivs(raw2, bounds2, cd2);
    } else {
      ch1 = corrconstrain::chol_from_raw(raw1, bounds1);
      ch2 = corrconstrain::chol_from_raw(raw2, bounds2);
    }
  } catch (const corrconstrain::InfeasibleBoundsError&) {
    // outside the parameterization's domain: reject
    return kNegInf;
  }
  const Eigen::MatrixXd& L1 = grad ? cd1.L : ch1.L;
  const Eigen::MatrixXd& L2 = grad ? cd2.L : ch2.L;
  const double logJ1 = grad ? cd1.log_jacobian : ch1.log_jacobian;
  const double logJ2 = grad ? cd2.log_jacobian : ch2.log_jacobian;

  double value = 0.0;
  double gzeta = 0.0;
  if (with_jacobians) {
    value += logJ1 + logJ2 + lp1 + lp2;  // log p(1-p) for the logit map
    gzeta += 1.0 - 2.0 * p;
  }

  thread_local Eigen::MatrixXd gL1, gL2;
  if (grad) {
    gL1.setZero(T, T);
    gL2.setZero(T, T);
  }

  const double* beta1 = x.data() + 1;
  const double* beta2 = x.data() + 1 + T;
  const int vbase = 1 + 2 * T + 2 * m;
  int yb[kMaxT];
  double ub[kMaxT], gu[kMaxT];
  bool clamped[kMaxT];
  GhkStash st1, st2;
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < T; ++t) {
      yb[t] = data.y(n, t);
      const double s = math::sigmoid(x[vbase + n * T + t]);
      clamped[t] = s < kUClampLo || s > kUClampHi;
      ub[t] = std::clamp(s, kUClampLo, kUClampHi);
    }
    const double la1 = ghk_forward(beta1, L1, yb, ub, T, grad ? &st1 : nullptr);
    const double la2 = ghk_forward(beta2, L2, yb, ub, T, grad ? &st2 : nullptr);
    const double t1 = lp1 + la1;
    const double t2 = lp2 + la2;
    const double log_s = math::logsumexp2(t1, t2);
    value += log_s;
    if (with_jacobians)
      for (int t = 0; t < T; ++t) value += std::log(ub[t]) + std::log1p(-ub[t]);
    if (grad) {
      const double w2 = std::exp(t2 - log_s);
      const double w1 = std::exp(t1 - log_s);
      gzeta += w2 * (1.0 - p) - w1 * p;
      std::fill(gu, gu + T, 0.0);
      ghk_reverse(L1, yb, st1, T, w1, grad->data() + 1, gL1, gu);
      ghk_reverse(L2, yb, st2, T, w2, grad->data() + 1 + T, gL2, gu);
      for (int t = 0; t < T; ++t) {
        double gv = 0.0;
        if (!clamped[t]) {
          gv = gu[t] * ub[t] * (1.0 - ub[t]);
          if (with_jacobians) gv += 1.0 - 2.0 * ub[t];
        }
        (*grad)[vbase + n * T + t] = gv;
      }
    }
  }

  if (grad) {
    (*grad)[0] = gzeta;
    for (int k = 0; k < m; ++k) {
      double g1 = with_jacobians ? cd1.dlogJ[k] : 0.0;
      double g2 = with_jacobians ? cd2.dlogJ[k] : 0.0;
      for (int i = 0; i < T; ++i)
        for (int j = 0; j <= i; ++j) {
          g1 += gL1(i, j) * cd1.dL[static_cast<size_t>(k)](i, j);
          g2 += gL2(i, j) * cd2.dL[static_cast<size_t>(k)](i, j);
        }
      (*grad)[1 + 2 * T + k] = g1;
      (*grad)[1 + 2 * T + m + k] = g2;
    }
  }
  return value;
}

Eigen::VectorXd lcmvp_grad(const Eigen::VectorXd& x, const CorrBounds& bounds1,
                           const CorrBounds& bounds2, const BinaryDataset& data) {
  Eigen::VectorXd g;
  mvp_value_grad(x, bounds1, bounds2, data, true, &g);
  return g;
}

double lt_value_grad(const Eigen::VectorXd& x, const BinaryDataset& data, bool with_jacobians,
                     Eigen::VectorXd* grad) {
  const int T = data.n_tests;
  const int N = data.n_subjects;
  check_tests(T);
  const int dim = lt_dim(T, N);
  if (x.size() != dim) throw std::invalid_argument("lt_value_grad: bad x length");
  if (grad) grad->setZero(dim);

  const double zeta = x[0];
  const double p = math::sigmoid(zeta);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);

  double a[2][kMaxT], b[2][kMaxT];
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t) {
      a[d][t] = x[1 + d * T + t];
      b[d][t] = std::exp(x[1 + 2 * T + d * T + t]);
    }

  double value = 0.0;
  double gzeta = 0.0;
  if (with_jacobians) {
    value += lp1 + lp2;
    gzeta += 1.0 - 2.0 * p;
    for (int d = 0; d < 2; ++d)
      for (int t = 0; t < T; ++t) value += x[1 + 2 * T + d * T + t];  // log b, exp-map Jacobian
  }

  const int gbase = 1 + 4 * T;
  double lq[2][kMaxT];  // per class/test log Bernoulli at this subject
  double hz[2][kMaxT];  // d log Bernoulli / d (a + b*gamma)
  for (int n = 0; n < N; ++n) {
    const double g = x[gbase + n];
    double la[2] = {0.0, 0.0};
    for (int d = 0; d < 2; ++d)
      for (int t = 0; t < T; ++t) {
        const double arg = a[d][t] + b[d][t] * g;
        const double lpos = math::log_phi(arg);
        const double lneg = math::log_phi(-arg);
        if (data.y(n, t)) {
          lq[d][t] = lpos;
          hz[d][t] = std::exp(math::norm_logpdf(arg) - lpos);
        } else {
          lq[d][t] = lneg;
          hz[d][t] = -std::exp(math::norm_logpdf(arg) - lneg);
        }
        la[d] += lq[d][t];
      }
    const double t1 = lp1 + la[0];
    const double t2 = lp2 + la[1];
    const double log_s = math::logsumexp2(t1, t2);
    value += log_s + math::norm_logpdf(g);
    if (grad) {
      const double w[2] = {std::exp(t1 - log_s), std::exp(t2 - log_s)};
      gzeta += w[1] * (1.0 - p) - w[0] * p;
      double gg = -g;
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t) {
          const double gq = w[d] * hz[d][t];
          (*grad)[1 + d * T + t] += gq;
          (*grad)[1 + 2 * T + d * T + t] += gq * g * b[d][t];
          gg += gq * b[d][t];
        }
      (*grad)[gbase + n] = gg;
    }
  }
  if (grad) {
    (*grad)[0] = gzeta;
    if (with_jacobians)
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t) (*grad)[1 + 2 * T + d * T + t] += 1.0;
  }
  return value;
}

PatternCounts aggregate_patterns(const BinaryDataset& data) {
  PatternCounts pat;
  pat.n_tests = data.n_tests;
  for (const auto& [mask, count] : pattern_counts(data)) pat.counts.emplace_back(mask, count);
  return pat;
}

double ci_value_grad(const Eigen::VectorXd& x, const BinaryDataset& data, bool with_jacobians,
                     Eigen::VectorXd* grad) {
  return ci_value_grad(x, aggregate_patterns(data), with_jacobians, grad);
}

double ci_value_grad(const Eigen::VectorXd& x, const PatternCounts& pat, bool with_jacobians,
                     Eigen::VectorXd* grad) {
  const int T = pat.n_tests;
  check_tests(T);
  const int dim = ci_dim(T);
  if (x.size() != dim) throw std::invalid_argument("ci_value_grad: bad x length");
  if (grad) grad->setZero(dim);

  const double zeta = x[0];
  const double p = math::sigmoid(zeta);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);

  double lpos[2][kMaxT], lneg[2][kMaxT], hpos[2][kMaxT], hneg[2][kMaxT];
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t) {
      const double bt = x[1 + d * T + t];
      lpos[d][t] = math::log_phi(bt);
      lneg[d][t] = math::log_phi(-bt);
      hpos[d][t] = std::exp(math::norm_logpdf(bt) - lpos[d][t]);
      hneg[d][t] = -std::exp(math::norm_logpdf(bt) - lneg[d][t]);
    }

  double value = 0.0;
  double gzeta = 0.0;
  if (with_jacobians) {
    value += lp1 + lp2;
    gzeta += 1.0 - 2.0 * p;
  }
  for (const auto& [mask, count] : pat.counts) {
    const double cnt = static_cast<double>(count);
    double la[2] = {0.0, 0.0};
    for (int d = 0; d < 2; ++d)
      for (int t = 0; t < T; ++t) la[d] += ((mask >> t) & 1u) ? lpos[d][t] : lneg[d][t];
    const double t1 = lp1 + la[0];
    const double t2 = lp2 + la[1];
    const double log_s = math::logsumexp2(t1, t2);
    value += cnt * log_s;
    if (grad) {
      const double w[2] = {std::exp(t1 - log_s), std::exp(t2 - log_s)};
      gzeta += cnt * (w[1] * (1.0 - p) - w[0] * p);
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t)
          (*grad)[1 + d * T + t] += cnt * w[d] * (((mask >> t) & 1u) ? hpos[d][t] : hneg[d][t]);
    }
  }
  if (grad) (*grad)[0] = gzeta;
  return value;
}

double lt_conditional_loglik(const LatentTraitParams& params, const BinaryDataset& data) {
  const int T = data.n_tests;
  const int N = data.n_subjects;
  Eigen::VectorXd x(lt_dim(T, N));
  x[0] = math::logit(params.prev);
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t) {
      x[1 + d * T + t] = params.a(d, t);
      x[1 + 2 * T + d * T + t] = std::log(params.b(d, t));
    }
  x.segment(1 + 4 * T, N) = params.gamma;
  return lt_value_grad(x, data, false, nullptr);
}

double lt_marginal_loglik_gh(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double prev,
                             const BinaryDataset& data, int nodes) {
  const int T = data.n_tests;
  check_tests(T);
  if (nodes < 16) throw std::invalid_argument("lt_marginal_loglik_gh: nodes >= 16 required");
  const auto [xs, ws] = math::gauss_hermite(nodes);
  const double zeta = math::logit(prev);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);

  // per (class, test, node) log Bernoulli pieces; gamma = sqrt(2)*x_i
  std::vector<double> lpos(static_cast<size_t>(2 * T * nodes)), lneg(lpos.size());
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < nodes; ++i) {
        const double arg = a(d, t) + b(d, t) * math::kSqrt2 * xs[i];
        lpos[static_cast<size_t>((d * T + t) * nodes + i)] = math::log_phi(arg);
        lneg[static_cast<size_t>((d * T + t) * nodes + i)] = math::log_phi(-arg);
      }
  const double log_norm = -0.5 * std::log(M_PI);

  double total = 0.0;
  std::vector<double> acc(static_cast<size_t>(nodes));
  for (const auto& [mask, count] : pattern_counts(data)) {
    double li[2];
    for (int d = 0; d < 2; ++d) {
      for (int i = 0; i < nodes; ++i) {
        double s = std::log(ws[i]) + log_norm;
        for (int t = 0; t < T; ++t)
          s += ((mask >> t) & 1u) ? lpos[static_cast<size_t>((d * T + t) * nodes + i)]
                                  : lneg[static_cast<size_t>((d * T + t) * nodes + i)];
        acc[static_cast<size_t>(i)] = s;
      }
      li[d] = math::logsumexp(acc.data(), nodes);
    }
    total += static_cast<double>(count) * math::logsumexp2(lp1 + li[0], lp2 + li[1]);
  }
  return total;
}

// ---------------------------------------------------------------------------
// oracles

double orthant_closed_bvn(double rho) { return 0.25 + std::asin(rho) / (2.0 * M_PI); }

double bvn_orthant(double a1, double a2, double rho) {
  const double s = std::sqrt(std::max(1.0 - rho * rho, 1e-14));
  const double lo = std::max(a1, -9.0);
  const double hi = 9.0;
  if (lo >= hi) return 0.0;
  static const auto rule = math::gauss_legendre01(500);
  const auto& [xs, ws] = rule;
  const double width = hi - lo;
  double sum = 0.0;
  for (int i = 0; i < xs.size(); ++i) {
    const double z = lo + width * xs[i];
    sum += ws[i] * math::norm_pdf(z) * math::phi((rho * z - a2) / s);
  }
  return width * sum;
}

double exact_pattern_prob(const Eigen::VectorXd& beta_d, const CorrChol& chol_d,
                          const Eigen::VectorXi& y, int gh_nodes) {
  const int T = chol_d.dim;
  check_tests(T);
  if (T > 4) throw std::invalid_argument("exact_pattern_prob: supported for T <= 4");
  int yb[kMaxT];
  for (int t = 0; t < T; ++t) yb[t] = y[t];
  if (T == 1) {
    const double q = yb[0] ? math::phi(beta_d[0]) : math::phi(-beta_d[0]);
    return q;
  }
  const auto [xs, ws] = math::gauss_hermite(gh_nodes);
  const int naxes = T - 1;
  // odometer over the tensor grid; u_t = Phi(sqrt(2) x_i), weight prod w_i / pi^(naxes/2)
  std::vector<int> idx(static_cast<size_t>(naxes), 0);
  double ub[kMaxT];
  ub[T - 1] = 0.5;  // unused by the integrand (q_T needs no uniform)
  double sum = 0.0;
  for (;;) {
    double wprod = 1.0;
    for (int ax = 0; ax < naxes; ++ax) {
      const int i = idx[static_cast<size_t>(ax)];
      wprod *= ws[i];
      ub[ax] = std::clamp(math::phi(math::kSqrt2 * xs[i]), 1e-15, 1.0 - 1e-15);
    }
    sum += wprod * std::exp(ghk_forward(beta_d.data(), chol_d.L, yb, ub, T, nullptr));
    int ax = 0;
    while (ax < naxes && ++idx[static_cast<size_t>(ax)] == gh_nodes) {
      idx[static_cast<size_t>(ax)] = 0;
      ++ax;
    }
    if (ax == naxes) break;
  }
  return sum / std::pow(M_PI, 0.5 * naxes);
}

double mvp_exact_loglik(const Eigen::MatrixXd& beta, double prev,
                        const std::array<CorrChol, 2>& chol, const BinaryDataset& data,
                        int gh_nodes) {
  const int T = data.n_tests;
  const double zeta = math::logit(prev);
  const double lp1 = -math::log1p_exp(zeta);
  const double lp2 = -math::log1p_exp(-zeta);
  double total = 0.0;
  for (const auto& [mask, count] : pattern_counts(data)) {
    Eigen::VectorXi y(T);
    for (int t = 0; t < T; ++t) y[t] = (mask >> t) & 1u;
    const double p1 = exact_pattern_prob(beta.row(0).transpose(), chol[0], y, gh_nodes);
    const double p2 = exact_pattern_prob(beta.row(1).transpose(), chol[1], y, gh_nodes);
    total += static_cast<double>(count) *
             math::logsumexp2(lp1 + std::log(p1), lp2 + std::log(p2));
  }
  return total;
}

double tetrachoric(long n11, long n10, long n01, long n00) {
  const double n = static_cast<double>(n11 + n10 + n01 + n00);
  if (n <= 0) throw std::invalid_argument("tetrachoric: empty table");
  const double clampv = 1e-12;
  const double p1 = std::clamp(static_cast<double>(n11 + n10) / n, clampv, 1.0 - clampv);
  const double p2 = std::clamp(static_cast<double>(n11 + n01) / n, clampv, 1.0 - clampv);
  const double p11 = static_cast<double>(n11) / n;
  const double a1 = math::inv_phi(1.0 - p1);
  const double a2 = math::inv_phi(1.0 - p2);
  double lo = -0.9999, hi = 0.9999;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bvn_orthant(a1, a2, mid) < p11)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace lcmvp::likelihood
