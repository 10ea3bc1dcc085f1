#include "lcmvp/targets.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lcmvp/math.hpp"

namespace lcmvp::sampler {

using corrconstrain::CorrBounds;
using corrconstrain::n_raw;
using likelihood::ModelKind;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> coordinate_names(const std::string& stem, int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

// names for the raw-layout lower triangle (i>j), printed with sorted indices
std::vector<std::string> omega_names(const std::string& stem, int T) {
  std::vector<std::string> out;
  for (int i = 1; i < T; ++i)
    for (int j = 0; j < i; ++j)
      out.push_back(stem + "_" + std::to_string(j + 1) + std::to_string(i + 1));
  return out;
}

void append_omega_lower(const Eigen::MatrixXd& omega, Eigen::VectorXd& dst, int& pos) {
  const int T = static_cast<int>(omega.rows());
  for (int i = 1; i < T; ++i)
    for (int j = 0; j < i; ++j) dst[pos++] = omega(i, j);
}

}  // namespace

StdNormalTarget::StdNormalTarget(int dim) : dim_(dim), names_(coordinate_names("x", dim)) {
  if (dim < 1) throw std::invalid_argument("StdNormalTarget: dim >= 1 required");
}

double StdNormalTarget::value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  grad = -x;
  return -0.5 * x.squaredNorm();
}

Eigen::VectorXd StdNormalTarget::initial_point() const { return Eigen::VectorXd::Zero(dim_); }

CorrPriorTarget::CorrPriorTarget(double eta, int n_tests, CorrBounds bounds)
    : eta_(eta), n_tests_(n_tests), bounds_(std::move(bounds)), names_(omega_names("omega", n_tests)) {
  if (bounds_.dim != n_tests_) throw std::invalid_argument("CorrPriorTarget: bounds dim mismatch");
  bounds_.validate();
}

double CorrPriorTarget::value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  const int m = n_raw(n_tests_);
  grad.setZero(m);
  try {
    corrconstrain::CholDerivs cd;
    corrconstrain::chol_from_raw_with_derivs(x, bounds_, cd);
    for (int k = 0; k < m; ++k) {
      double g = cd.dlogJ[k];
      for (int i = 1; i < n_tests_; ++i)
        g += 2.0 * (eta_ - 1.0) * cd.dL[static_cast<size_t>(k)](i, i) / cd.L(i, i);
      grad[k] = g;
    }
    return corrconstrain::lkj_log_density(corrconstrain::CorrChol{n_tests_, cd.L, cd.log_jacobian},
                                          eta_) +
           cd.log_jacobian;
  } catch (const corrconstrain::InfeasibleBoundsError&) {
    return kNegInf;
  }
}

Eigen::VectorXd CorrPriorTarget::initial_point() const {
  return Eigen::VectorXd::Constant(n_raw(n_tests_), 0.001);
}

Eigen::VectorXd CorrPriorTarget::derived(const Eigen::VectorXd& x) const {
  const auto ch = corrconstrain::chol_from_raw(x, bounds_);
  Eigen::VectorXd out(n_raw(n_tests_));
  int pos = 0;
  append_omega_lower(ch.omega(), out, pos);
  return out;
}

// ---------------------------------------------------------------------------

ModelTarget::ModelTarget(ModelKind model, likelihood::BinaryDataset data, priors::PriorSet prior,
                         bool prior_only)
    : model_(model), data_(std::move(data)), prior_(std::move(prior)), prior_only_(prior_only) {
  if (prior_.model != model_) throw std::invalid_argument("ModelTarget: prior set is for another model");
  prior_.validate();
  n_tests_ = static_cast<int>(prior_.accuracy.mean.cols());
  if (!prior_only_) {
    data_.validate();
    if (data_.n_tests != n_tests_)
      throw std::invalid_argument("ModelTarget: data and prior disagree on the number of tests");
  }
  n_eff_ = prior_only_ ? 0 : data_.n_subjects;
  if (model_ == ModelKind::ci && n_eff_ > 0)
    pattern_counts_ = likelihood::aggregate_patterns(data_);
  switch (model_) {
    case ModelKind::ci: dim_ = likelihood::ci_dim(n_tests_); break;
    case ModelKind::lt: dim_ = likelihood::lt_dim(n_tests_, n_eff_); break;
    case ModelKind::mvp: dim_ = likelihood::mvp_dim(n_tests_, n_eff_); break;
  }
  for (const auto& n : coordinate_names("se", n_tests_)) names_.push_back(n);
  for (const auto& n : coordinate_names("sp", n_tests_)) names_.push_back(n);
  names_.push_back("prev");
  if (model_ != ModelKind::ci) {
    for (const auto& n : omega_names("omega1", n_tests_)) names_.push_back(n);
    for (const auto& n : omega_names("omega2", n_tests_)) names_.push_back(n);
  }
}

double ModelTarget::value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  grad.setZero(dim_);
  Eigen::VectorXd gp;
  double v = priors::log_prior(x, prior_, n_tests_, n_eff_, &gp);
  if (!std::isfinite(v)) return kNegInf;
  grad = gp;
  if (prior_only_ || n_eff_ == 0) return v;
  thread_local Eigen::VectorXd gl;
  double lv = 0.0;
  switch (model_) {
    case ModelKind::ci:
      lv = likelihood::ci_value_grad(x, pattern_counts_, false, &gl);
      break;
    case ModelKind::lt:
      lv = likelihood::lt_value_grad(x, data_, false, &gl);
      break;
    case ModelKind::mvp:
      lv = likelihood::mvp_value_grad(x, prior_.corr->bounds[0], prior_.corr->bounds[1], data_,
                                      false, &gl);
      break;
  }
  if (!std::isfinite(lv)) return kNegInf;
  grad += gl;
  return v + lv;
}

Eigen::VectorXd ModelTarget::initial_point() const {
  const int T = n_tests_;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
  x[0] = math::logit(0.2);
  switch (model_) {
    case ModelKind::ci:
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t) x[1 + d * T + t] = prior_.accuracy.mean(d, t);
      break;
    case ModelKind::mvp: {
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t) x[1 + d * T + t] = prior_.accuracy.mean(d, t);
      const int m = n_raw(T);
      x.segment(1 + 2 * T, 2 * m).setConstant(0.001);
      // v block stays 0: u = 1/2
      break;
    }
    case ModelKind::lt: {
      for (int d = 0; d < 2; ++d) {
        const auto& bm = prior_.b->per_class[static_cast<size_t>(d)];
        const double bmean = bm.family == priors::BFamily::gamma
                                 ? bm.shape * bm.scale
                                 : bm.scale * std::tgamma(1.0 + 1.0 / bm.shape);
        const double b0 = std::max(bmean, 1e-3);
        for (int t = 0; t < T; ++t) {
          x[1 + d * T + t] = prior_.accuracy.mean(d, t) * std::sqrt(1.0 + b0 * b0);
          x[1 + 2 * T + d * T + t] = std::log(b0);
        }
      }
      // gamma block stays 0
      break;
    }
  }
  return x;
}

Eigen::VectorXd ModelTarget::derived(const Eigen::VectorXd& x) const {
  const int T = n_tests_;
  Eigen::VectorXd se(T), sp(T);
  double prev = math::sigmoid(x[0]);
  Eigen::MatrixXd omega1, omega2;

  switch (model_) {
    case ModelKind::ci:
      for (int t = 0; t < T; ++t) {
        sp[t] = math::phi(-x[1 + t]);
        se[t] = math::phi(x[1 + T + t]);
      }
      break;
    case ModelKind::mvp: {
      for (int t = 0; t < T; ++t) {
        sp[t] = math::phi(-x[1 + t]);
        se[t] = math::phi(x[1 + T + t]);
      }
      const int m = n_raw(T);
      omega1 = corrconstrain::chol_from_raw(x.segment(1 + 2 * T, m), prior_.corr->bounds[0]).omega();
      omega2 =
          corrconstrain::chol_from_raw(x.segment(1 + 2 * T + m, m), prior_.corr->bounds[1]).omega();
      break;
    }
    case ModelKind::lt: {
      Eigen::MatrixXd a(2, T), b(2, T);
      for (int d = 0; d < 2; ++d)
        for (int t = 0; t < T; ++t) {
          a(d, t) = x[1 + d * T + t];
          b(d, t) = std::exp(x[1 + 2 * T + d * T + t]);
        }
      const auto acc = likelihood::summary_accuracy_lt(a, b);
      se = acc.se;
      sp = acc.sp;
      const auto conv = likelihood::lt_as_mvp(a, b);
      omega1 = conv.chol[0].omega();
      omega2 = conv.chol[1].omega();
      break;
    }
  }

  // deterministic relabeling keyed on the reference test
  if (se[0] < 1.0 - sp[0]) {
    const Eigen::VectorXd old_se = se;
    for (int t = 0; t < T; ++t) {
      se[t] = 1.0 - sp[t];
      sp[t] = 1.0 - old_se[t];
    }
    prev = 1.0 - prev;
    std::swap(omega1, omega2);
  }

  Eigen::VectorXd out(names_.size());
  int pos = 0;
  for (int t = 0; t < T; ++t) out[pos++] = se[t];
  for (int t = 0; t < T; ++t) out[pos++] = sp[t];
  out[pos++] = prev;
  if (model_ != ModelKind::ci) {
    append_omega_lower(omega1, out, pos);
    append_omega_lower(omega2, out, pos);
  }
  return out;
}

std::unique_ptr<Target> make_target(ModelKind model, const likelihood::BinaryDataset& data,
                                    const priors::PriorSet& prior, bool prior_only) {
  return std::make_unique<ModelTarget>(model, data, prior, prior_only);
}

}  // namespace lcmvp::sampler
