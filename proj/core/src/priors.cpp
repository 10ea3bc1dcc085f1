#include "lcmvp/priors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace lcmvp::priors {

using corrconstrain::CorrBounds;
using corrconstrain::LkjSpec;
using likelihood::ModelKind;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUClampLo = 1e-12;
constexpr double kUClampHi = 1.0 - 1e-12;

double normal_logpdf(double x, double m, double sd) {
  const double z = (x - m) / sd;
  return -math::kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

}  // namespace

void AccuracyPrior::validate() const {
  if (mean.rows() != 2 || sd.rows() != 2 || mean.cols() != sd.cols() || mean.cols() < 1)
    throw std::invalid_argument("AccuracyPrior: mean/sd must both be 2 x T");
  if ((sd.array() <= 0.0).any()) throw std::invalid_argument("AccuracyPrior: sd must be positive");
}

double BMarginal::logpdf(double b) const {
  if (shape <= 0.0 || scale <= 0.0) throw std::invalid_argument("BMarginal: nonpositive hyperparameter");
  if (b <= 0.0) return kNegInf;
  if (family == BFamily::gamma)
    return (shape - 1.0) * std::log(b) - b / scale - shape * std::log(scale) - std::lgamma(shape);
  const double t = std::pow(b / scale, shape);
  return std::log(shape / scale) + (shape - 1.0) * (std::log(b) - std::log(scale)) - t;
}

double BMarginal::dlogpdf_db(double b) const {
  if (family == BFamily::gamma) return (shape - 1.0) / b - 1.0 / scale;
  return (shape - 1.0) / b - shape * std::pow(b / scale, shape) / b;
}

double BMarginal::sample(math::Rng& rng) const {
  return family == BFamily::gamma ? rng.gamma(shape, scale) : rng.weibull(shape, scale);
}

void PriorSet::validate() const {
  accuracy.validate();
  if (model == ModelKind::mvp && !corr) throw std::invalid_argument("PriorSet: mvp set needs a correlation prior");
  if (model == ModelKind::lt && !b) throw std::invalid_argument("PriorSet: lt set needs a loading prior");
  if (corr) {
    const int T = static_cast<int>(accuracy.mean.cols());
    for (const auto& bd : corr->bounds) {
      if (bd.dim != T) throw std::invalid_argument("PriorSet: correlation bounds dim != T");
      bd.validate();
    }
  }
}

namespace {

AccuracyPrior reference_test_accuracy(int dgm_id, int T = 5) {
  AccuracyPrior acc;
  acc.mean = Eigen::MatrixXd::Zero(2, T);
  acc.sd = Eigen::MatrixXd::Ones(2, T);
  if (dgm_id <= 3) {
    acc.mean(0, 0) = -2.33;
    acc.sd(0, 0) = 0.50;
    acc.mean(1, 0) = 0.385;
    acc.sd(1, 0) = 0.45;
  } else {
    acc.mean(0, 0) = -1.30;
    acc.sd(0, 0) = 0.50;
    acc.mean(1, 0) = 1.30;
    acc.sd(1, 0) = 0.50;
  }
  return acc;
}

CorrBounds mixed_bounds(int T) {
  // pairs involving the reference test stay free; all others positive
  CorrBounds b = CorrBounds::positive_bounds(T);
  for (int j = 1; j < T; ++j) {
    b.lb(0, j) = b.lb(j, 0) = -1.0;
  }
  return b;
}

PriorSet mvp_set(const std::string& name, CorrPriorKind kind, double eta1, double eta2,
                 const AccuracyPrior& acc) {
  const int T = static_cast<int>(acc.mean.cols());
  PriorSet s;
  s.name = name;
  s.model = ModelKind::mvp;
  s.accuracy = acc;
  CorrPriorSpec c;
  c.kind = kind;
  c.lkj = {LkjSpec{eta1, kind != CorrPriorKind::lkj}, LkjSpec{eta2, kind != CorrPriorKind::lkj}};
  switch (kind) {
    case CorrPriorKind::lkj:
      c.bounds = {CorrBounds::free_bounds(T), CorrBounds::free_bounds(T)};
      break;
    case CorrPriorKind::trunc:
      c.bounds = {CorrBounds::positive_bounds(T), CorrBounds::positive_bounds(T)};
      break;
    case CorrPriorKind::mixed:
      c.bounds = {mixed_bounds(T), mixed_bounds(T)};
      break;
  }
  s.corr = c;
  return s;
}

PriorSet lt_set(const std::string& name, const BMarginal& b1, const BMarginal& b2,
                const AccuracyPrior& acc) {
  PriorSet s;
  s.name = name;
  s.model = ModelKind::lt;
  s.accuracy = acc;
  s.b = BPrior{{b1, b2}};
  return s;
}

}  // namespace

std::vector<PriorSet> builtin_prior_sets(int dgm_id, ModelKind model) {
  if (dgm_id < 1 || dgm_id > 5) throw std::invalid_argument("builtin_prior_sets: dgm_id must be 1..5");
  const AccuracyPrior acc = reference_test_accuracy(dgm_id);
  std::vector<PriorSet> out;
  switch (model) {
    case ModelKind::ci: {
      PriorSet s;
      s.name = "default";
      s.model = ModelKind::ci;
      s.accuracy = acc;
      out.push_back(std::move(s));
      break;
    }
    case ModelKind::mvp:
      out.push_back(mvp_set("LKJ(10,1.5)", CorrPriorKind::lkj, 10.0, 1.5, acc));
      out.push_back(mvp_set("LKJ(24,4)", CorrPriorKind::lkj, 24.0, 4.0, acc));
      out.push_back(mvp_set("TruncLKJ(10,1.5)", CorrPriorKind::trunc, 10.0, 1.5, acc));
      out.push_back(mvp_set("TruncLKJ(24,4)", CorrPriorKind::trunc, 24.0, 4.0, acc));
      out.push_back(mvp_set("mixedLKJ(10,1.5)", CorrPriorKind::mixed, 10.0, 1.5, acc));
      out.push_back(mvp_set("mixedLKJ(24,4)", CorrPriorKind::mixed, 24.0, 4.0, acc));
      break;
    case ModelKind::lt:
      out.push_back(lt_set("Gamma(1,1)", BMarginal{BFamily::gamma, 1.0, 1.0},
                           BMarginal{BFamily::gamma, 1.0, 1.0}, acc));
      out.push_back(lt_set("Weibull(1.59,0.468)", BMarginal{BFamily::weibull, 1.59, 0.468},
                           BMarginal{BFamily::weibull, 1.45, 0.881}, acc));
      out.push_back(lt_set("Weibull(1.52,0.633)", BMarginal{BFamily::weibull, 1.52, 0.633},
                           BMarginal{BFamily::weibull, 1.33, 1.25}, acc));
      break;
  }
  return out;
}

namespace {

// prevalence block shared by all models: uniform on p, logit transform
double prevalence_term(double zeta, double* gzeta) {
  const double p = math::sigmoid(zeta);
  if (gzeta) *gzeta += 1.0 - 2.0 * p;
  return -math::log1p_exp(zeta) - math::log1p_exp(-zeta);
}

double accuracy_block(const Eigen::VectorXd& x, const AccuracyPrior& acc, int T,
                      Eigen::VectorXd* grad) {
  double v = 0.0;
  for (int d = 0; d < 2; ++d)
    for (int t = 0; t < T; ++t) {
      const int idx = 1 + d * T + t;
      const double m = acc.mean(d, t), sd = acc.sd(d, t);
      v += normal_logpdf(x[idx], m, sd);
      if (grad) (*grad)[idx] += -(x[idx] - m) / (sd * sd);
    }
  return v;
}

}  // namespace

double log_prior(const Eigen::VectorXd& x, const PriorSet& set, int n_tests, int n_subjects,
                 Eigen::VectorXd* grad) {
  set.validate();
  const int T = n_tests;
  if (static_cast<int>(set.accuracy.mean.cols()) != T)
    throw std::invalid_argument("log_prior: prior set is for a different number of tests");

  int dim = 0;
  switch (set.model) {
    case ModelKind::ci: dim = likelihood::ci_dim(T); break;
    case ModelKind::lt: dim = likelihood::lt_dim(T, n_subjects); break;
    case ModelKind::mvp: dim = likelihood::mvp_dim(T, n_subjects); break;
  }
  if (x.size() != dim) throw std::invalid_argument("log_prior: x length does not match model layout");
  if (grad) grad->setZero(dim);

  double gzeta = 0.0;
  double value = prevalence_term(x[0], &gzeta);

  switch (set.model) {
    case ModelKind::ci:
      value += accuracy_block(x, set.accuracy, T, grad);
      break;

    case ModelKind::mvp: {
      value += accuracy_block(x, set.accuracy, T, grad);
      const int m = corrconstrain::n_raw(T);
      for (int d = 0; d < 2; ++d) {
        const int base = 1 + 2 * T + d * m;
        const Eigen::VectorXd raw = x.segment(base, m);
        const double eta = set.corr->lkj[static_cast<size_t>(d)].eta;
        try {
          if (grad) {
            corrconstrain::CholDerivs cd;
            corrconstrain::chol_from_raw_with_derivs(raw, set.corr->bounds[static_cast<size_t>(d)], cd);
            value += corrconstrain::lkj_log_density(corrconstrain::CorrChol{T, cd.L, cd.log_jacobian}, eta);
            value += cd.log_jacobian;
            for (int k = 0; k < m; ++k) {
              double g = cd.dlogJ[k];
              for (int i = 1; i < T; ++i)
                g += 2.0 * (eta - 1.0) * cd.dL[static_cast<size_t>(k)](i, i) / cd.L(i, i);
              (*grad)[base + k] += g;
            }
          } else {
            const auto ch = corrconstrain::chol_from_raw(raw, set.corr->bounds[static_cast<size_t>(d)]);
            value += corrconstrain::lkj_log_density(ch, eta) + ch.log_jacobian;
          }
        } catch (const corrconstrain::InfeasibleBoundsError&) {
          if (grad) grad->setZero(dim);
          return kNegInf;
        }
      }
      const int vbase = 1 + 2 * T + 2 * m;
      for (int i = 0; i < n_subjects * T; ++i) {
        const double s = math::sigmoid(x[vbase + i]);
        const bool clamped = s < kUClampLo || s > kUClampHi;
        const double u = std::clamp(s, kUClampLo, kUClampHi);
        value += std::log(u) + std::log1p(-u);
        if (grad) (*grad)[vbase + i] += clamped ? 0.0 : 1.0 - 2.0 * u;
      }
      break;
    }

    case ModelKind::lt: {
      for (int d = 0; d < 2; ++d) {
        const BMarginal& bm = set.b->per_class[static_cast<size_t>(d)];
        for (int t = 0; t < T; ++t) {
          const int ia = 1 + d * T + t;
          const int il = 1 + 2 * T + d * T + t;
          const double a = x[ia];
          const double lb = x[il];
          const double b = std::exp(lb);
          const double inv_s = 1.0 / std::sqrt(1.0 + b * b);
          const double theta = a * inv_s;
          const double m = set.accuracy.mean(d, t), sd = set.accuracy.sd(d, t);
          value += normal_logpdf(theta, m, sd) + likelihood::theta_jacobian_log(b);
          value += bm.logpdf(b) + lb;  // exp-map Jacobian
          if (grad) {
            const double dln = -(theta - m) / (sd * sd);
            (*grad)[ia] += dln * inv_s;
            const double b2 = b * b;
            (*grad)[il] += dln * (-a * b2 * inv_s * inv_s * inv_s)  // d theta / d log b
                           - b2 * inv_s * inv_s                    // theta-map Jacobian
                           + bm.dlogpdf_db(b) * b + 1.0;
          }
        }
      }
      break;
    }
  }

  if (grad) (*grad)[0] += gzeta;
  return value;
}

Eigen::VectorXd implied_corr_samples(const BMarginal& bp, int n, math::Rng& rng) {
  if (n < 1) throw std::invalid_argument("implied_corr_samples: n >= 1 required");
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const double b1 = bp.sample(rng);
    const double b2 = bp.sample(rng);
    out[i] = b1 * b2 / std::sqrt((1.0 + b1 * b1) * (1.0 + b2 * b2));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weibull equivalence fitting

namespace {

// Binned Gaussian KDE on [0,1] with reflection at both boundaries, so mass
// near the edges is not smeared outside the support.
class ReflectedKde {
 public:
  ReflectedKde(const double* xs, int n, int grid = 2048) : grid_(grid), dens_(grid, 0.0) {
    std::vector<double> sorted(xs, xs + n);
    std::sort(sorted.begin(), sorted.end());
    math::Welford w;
    for (double v : sorted) w.add(v);
    const double sd = std::sqrt(w.variance());
    const double iqr = sorted[static_cast<size_t>(0.75 * (n - 1))] -
                       sorted[static_cast<size_t>(0.25 * (n - 1))];
    double spread = std::min(sd, iqr / 1.34);
    if (spread <= 0.0) spread = std::max(sd, 1e-4);
    h_ = std::max(0.9 * spread * std::pow(static_cast<double>(n), -0.2), 1e-4);

    std::vector<double> counts(static_cast<size_t>(grid), 0.0);
    const double gw = 1.0 / grid;
    for (int i = 0; i < n; ++i) {
      int b = static_cast<int>(xs[i] * grid);
      b = std::clamp(b, 0, grid - 1);
      counts[static_cast<size_t>(b)] += 1.0;
    }
    const int radius = std::min(grid - 1, static_cast<int>(std::ceil(5.0 * h_ * grid)));
    std::vector<double> kern(static_cast<size_t>(radius) + 1);
    for (int r = 0; r <= radius; ++r) {
      const double d = r * gw;
      kern[static_cast<size_t>(r)] = std::exp(-0.5 * d * d / (h_ * h_));
    }
    // reflected index: fold j into [0, grid) about the two boundaries
    auto fold = [grid](int j) {
      const int period = 2 * grid;
      j = ((j % period) + period) % period;
      return j < grid ? j : period - 1 - j;
    };
    for (int b = 0; b < grid; ++b) {
      if (counts[static_cast<size_t>(b)] == 0.0) continue;
      const double c = counts[static_cast<size_t>(b)];
      dens_[static_cast<size_t>(b)] += c * kern[0];
      for (int r = 1; r <= radius; ++r) {
        dens_[static_cast<size_t>(fold(b - r))] += c * kern[static_cast<size_t>(r)];
        dens_[static_cast<size_t>(fold(b + r))] += c * kern[static_cast<size_t>(r)];
      }
    }
    const double norm = 1.0 / (n * h_ * std::sqrt(2.0 * M_PI));
    for (double& v : dens_) v *= norm;
  }

  double log_density(double x) const {
    int b = static_cast<int>(x * grid_);
    b = std::clamp(b, 0, grid_ - 1);
    return std::log(std::max(dens_[static_cast<size_t>(b)], 1e-12));
  }

 private:
  int grid_;
  double h_;
  std::vector<double> dens_;
};

// Nelder-Mead on R^2, minimizing f. Returns best point found.
Eigen::Vector2d nelder_mead2(const std::function<double(const Eigen::Vector2d&)>& f,
                             Eigen::Vector2d start, int max_evals, double* best_f) {
  std::array<Eigen::Vector2d, 3> pts = {start, start + Eigen::Vector2d(0.2, 0.0),
                                        start + Eigen::Vector2d(0.0, 0.2)};
  std::array<double, 3> fv;
  int evals = 0;
  for (int i = 0; i < 3; ++i) fv[static_cast<size_t>(i)] = (++evals, f(pts[static_cast<size_t>(i)]));
  while (evals < max_evals) {
    std::array<int, 3> ord = {0, 1, 2};
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[static_cast<size_t>(a)] < fv[static_cast<size_t>(b)]; });
    const int lo = ord[0], mid = ord[1], hi = ord[2];
    if (std::abs(fv[static_cast<size_t>(hi)] - fv[static_cast<size_t>(lo)]) < 1e-8) break;
    const Eigen::Vector2d centroid = 0.5 * (pts[static_cast<size_t>(lo)] + pts[static_cast<size_t>(mid)]);
    const Eigen::Vector2d xr = centroid + (centroid - pts[static_cast<size_t>(hi)]);
    const double fr = (++evals, f(xr));
    if (fr < fv[static_cast<size_t>(lo)]) {
      const Eigen::Vector2d xe = centroid + 2.0 * (centroid - pts[static_cast<size_t>(hi)]);
      const double fe = (++evals, f(xe));
      if (fe < fr) { pts[static_cast<size_t>(hi)] = xe; fv[static_cast<size_t>(hi)] = fe; }
      else { pts[static_cast<size_t>(hi)] = xr; fv[static_cast<size_t>(hi)] = fr; }
    } else if (fr < fv[static_cast<size_t>(mid)]) {
      pts[static_cast<size_t>(hi)] = xr;
      fv[static_cast<size_t>(hi)] = fr;
    } else {
      const Eigen::Vector2d xc = centroid + 0.5 * (pts[static_cast<size_t>(hi)] - centroid);
      const double fc = (++evals, f(xc));
      if (fc < fv[static_cast<size_t>(hi)]) { pts[static_cast<size_t>(hi)] = xc; fv[static_cast<size_t>(hi)] = fc; }
      else {
        for (int i : {mid, hi}) {
          pts[static_cast<size_t>(i)] = pts[static_cast<size_t>(lo)] + 0.5 * (pts[static_cast<size_t>(i)] - pts[static_cast<size_t>(lo)]);
          fv[static_cast<size_t>(i)] = (++evals, f(pts[static_cast<size_t>(i)]));
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (fv[static_cast<size_t>(i)] < fv[static_cast<size_t>(best)]) best = i;
  *best_f = fv[static_cast<size_t>(best)];
  return pts[static_cast<size_t>(best)];
}

}  // namespace

BMarginal fit_equivalent_weibull(const Eigen::VectorXd& corr_target_samples, std::uint64_t seed) {
  const int n = static_cast<int>(corr_target_samples.size());
  if (n < 1000) throw std::invalid_argument("fit_equivalent_weibull: >= 1000 samples required");
  for (int i = 0; i < n; ++i)
    if (!(corr_target_samples[i] > 0.0 && corr_target_samples[i] < 1.0))
      throw std::invalid_argument("fit_equivalent_weibull: samples must lie in (0,1)");

  // common random numbers: one fixed uniform stream reused by every
  // objective evaluation keeps the surface smooth in (shape, scale)
  constexpr int kPairs = 20000;
  std::vector<double> us(2 * kPairs);
  {
    math::Rng rng(math::splitmix64(seed));
    for (double& u : us) u = rng.uniform();
  }

  std::vector<double> implied(kPairs);
  auto neg_loglik = [&](const Eigen::Vector2d& p) {
    const double k = std::exp(p[0]);
    const double lam = std::exp(p[1]);
    if (!(k > 0.05 && k < 50.0 && lam > 1e-4 && lam < 1e4)) return 1e100;
    for (int i = 0; i < kPairs; ++i) {
      const double b1 = lam * std::pow(-std::log1p(-us[static_cast<size_t>(2 * i)]), 1.0 / k);
      const double b2 = lam * std::pow(-std::log1p(-us[static_cast<size_t>(2 * i + 1)]), 1.0 / k);
      implied[static_cast<size_t>(i)] = b1 * b2 / std::sqrt((1.0 + b1 * b1) * (1.0 + b2 * b2));
    }
    const ReflectedKde kde(implied.data(), kPairs);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += kde.log_density(corr_target_samples[i]);
    return -ll / n;
  };

  const std::array<Eigen::Vector2d, 2> starts = {Eigen::Vector2d(std::log(1.5), std::log(0.7)),
                                                 Eigen::Vector2d(std::log(1.0), std::log(1.2))};
  Eigen::Vector2d best = starts[0];
  double best_f = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    double f = 0.0;
    const Eigen::Vector2d p = nelder_mead2(neg_loglik, s, 240, &f);
    if (f < best_f) {
      best_f = f;
      best = p;
    }
  }
  if (!std::isfinite(best_f) || best_f >= 1e100)
    throw std::runtime_error("fit_equivalent_weibull: no interior optimum found");
  return BMarginal{BFamily::weibull, std::exp(best[0]), std::exp(best[1])};
}

}  // namespace lcmvp::priors
