#include "lcmvp/corrconstrain.hpp"

#include <cmath>
#include <string>

namespace lcmvp::corrconstrain {

using math::Dual;

CorrBounds CorrBounds::uniform_bounds(int T, double lo, double hi) {
  CorrBounds b;
  b.dim = T;
  b.lb = Eigen::MatrixXd::Constant(T, T, lo);
  b.ub = Eigen::MatrixXd::Constant(T, T, hi);
  return b;
}

void CorrBounds::validate() const {
  if (dim < 2 || lb.rows() != dim || lb.cols() != dim || ub.rows() != dim || ub.cols() != dim)
    throw std::invalid_argument("CorrBounds: inconsistent dimensions");
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < i; ++j) {
      if (!(lb(i, j) >= -1.0 && ub(i, j) <= 1.0 && lb(i, j) < ub(i, j)))
        throw std::invalid_argument("CorrBounds: need -1 <= lb < ub <= 1 off-diagonal");
      if (lb(i, j) != lb(j, i) || ub(i, j) != ub(j, i))
        throw std::invalid_argument("CorrBounds: bounds must be symmetric");
    }
}

namespace {

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

// Shared construction. Scalar is double or Dual; branching happens on values
// only, so the dual sweep differentiates the same (fixed) branch.
template <class Scalar>
void chol_core(const Scalar* raw, int T, const CorrBounds& bounds,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& L, Scalar& log_jac) {
  using std::log;
  using std::sqrt;
  using math::sigmoid;
  L.setZero(T, T);
  L(0, 0) = Scalar(1.0);
  log_jac = Scalar(0.0);
  int idx = 0;
  for (int i = 1; i < T; ++i) {
    Scalar row_mass(0.0);  // sum of squares of L(i, 0..j-1)
    for (int j = 0; j < i; ++j) {
      Scalar c(0.0);
      for (int k = 0; k < j; ++k) c += L(i, k) * L(j, k);
      const Scalar r = sqrt(Scalar(1.0) - row_mass);
      const Scalar glo = c - r * L(j, j);
      const Scalar ghi = c + r * L(j, j);
      // intersect with the user interval; constants carry zero derivative
      const Scalar lo = value_of(glo) > bounds.lb(i, j) ? glo : Scalar(bounds.lb(i, j));
      const Scalar hi = value_of(ghi) < bounds.ub(i, j) ? ghi : Scalar(bounds.ub(i, j));
      if (!(value_of(lo) < value_of(hi)))
        throw InfeasibleBoundsError("chol_from_raw: empty feasible interval at (" +
                                    std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      const Scalar s = sigmoid(raw[idx]);
      const Scalar w = lo + (hi - lo) * s;
      L(i, j) = (w - c) / L(j, j);
      row_mass += L(i, j) * L(i, j);
      log_jac += log(hi - lo) + log(s) + log(Scalar(1.0) - s);
      ++idx;
    }
    L(i, i) = sqrt(Scalar(1.0) - row_mass);
  }
}

}  // namespace

CorrChol chol_from_raw(const Eigen::VectorXd& raw, const CorrBounds& bounds) {
  bounds.validate();
  const int T = bounds.dim;
  if (raw.size() != n_raw(T)) throw std::invalid_argument("chol_from_raw: raw length != T(T-1)/2");
  CorrChol out;
  out.dim = T;
  chol_core<double>(raw.data(), T, bounds, out.L, out.log_jacobian);
  return out;
}

void chol_from_raw_with_derivs(const Eigen::VectorXd& raw, const CorrBounds& bounds,
                               CholDerivs& out) {
  bounds.validate();
  const int T = bounds.dim;
  const int m = n_raw(T);
  if (raw.size() != m) throw std::invalid_argument("chol_from_raw: raw length != T(T-1)/2");

  std::vector<Dual> draw(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k) draw[static_cast<size_t>(k)] = Dual(raw[k], 0.0);

  out.dL.resize(static_cast<size_t>(m));
  out.dlogJ.resize(m);
  Eigen::Matrix<Dual, Eigen::Dynamic, Eigen::Dynamic> Ld;
  for (int k = 0; k < m; ++k) {
    draw[static_cast<size_t>(k)].d = 1.0;
    Dual log_jac;
    chol_core<Dual>(draw.data(), T, bounds, Ld, log_jac);
    draw[static_cast<size_t>(k)].d = 0.0;
    auto& dLk = out.dL[static_cast<size_t>(k)];
    dLk.setZero(T, T);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j <= i; ++j) dLk(i, j) = Ld(i, j).d;
    out.dlogJ[k] = log_jac.d;
    if (k == m - 1) {
      out.L.resize(T, T);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) out.L(i, j) = Ld(i, j).v;
      out.log_jacobian = log_jac.v;
    }
  }
}

double lkj_log_density(const CorrChol& c, double eta) {
  double s = 0.0;
  for (int k = 1; k < c.dim; ++k) s += std::log(c.L(k, k));
  return 2.0 * (eta - 1.0) * s;
}

CorrChol sample_lkj(double eta, int T, math::Rng& rng) {
  if (!(eta > 0.0) || T < 2) throw std::invalid_argument("sample_lkj: eta > 0 and T >= 2 required");
  CorrChol out;
  out.dim = T;
  out.L.setZero(T, T);
  out.L(0, 0) = 1.0;
  double b = eta + (T - 2) / 2.0;
  const double r = 2.0 * rng.beta(b, b) - 1.0;
  out.L(1, 0) = r;
  out.L(1, 1) = std::sqrt(1.0 - r * r);
  std::vector<double> v;
  for (int m = 2; m < T; ++m) {
    b -= 0.5;
    const double y = rng.beta(m / 2.0, b);
    v.resize(static_cast<size_t>(m));
    double norm2 = 0.0;
    for (int k = 0; k < m; ++k) {
      v[static_cast<size_t>(k)] = rng.normal();
      norm2 += v[static_cast<size_t>(k)] * v[static_cast<size_t>(k)];
    }
    const double scale = std::sqrt(y / norm2);
    for (int k = 0; k < m; ++k) out.L(m, k) = scale * v[static_cast<size_t>(k)];
    out.L(m, m) = std::sqrt(1.0 - y);
  }
  return out;
}

CorrChol sample_trunc_lkj(double eta, int T, math::Rng& rng, long max_attempts) {
  if (!(eta > 0.0) || T < 2)
    throw std::invalid_argument("sample_trunc_lkj: eta > 0 and T >= 2 required");
  for (long attempt = 0; attempt < max_attempts; ++attempt) {
    // onion rows generated in place; a non-positive Omega entry aborts the
    // attempt early (later rows are independent, so this leaves the accepted
    // distribution unchanged)
    CorrChol out;
    out.dim = T;
    out.L.setZero(T, T);
    out.L(0, 0) = 1.0;
    double b = eta + (T - 2) / 2.0;
    const double r = 2.0 * rng.beta(b, b) - 1.0;
    if (r <= 0.0) continue;
    out.L(1, 0) = r;
    out.L(1, 1) = std::sqrt(1.0 - r * r);
    bool ok = true;
    std::vector<double> v;
    for (int m = 2; m < T && ok; ++m) {
      b -= 0.5;
      const double y = rng.beta(m / 2.0, b);
      v.resize(static_cast<size_t>(m));
      double norm2 = 0.0;
      for (int k = 0; k < m; ++k) {
        v[static_cast<size_t>(k)] = rng.normal();
        norm2 += v[static_cast<size_t>(k)] * v[static_cast<size_t>(k)];
      }
      const double scale = std::sqrt(y / norm2);
      for (int k = 0; k < m; ++k) out.L(m, k) = scale * v[static_cast<size_t>(k)];
      out.L(m, m) = std::sqrt(1.0 - y);
      for (int j = 0; j < m; ++j) {
        double om = 0.0;
        for (int k = 0; k <= j; ++k) om += out.L(m, k) * out.L(j, k);
        if (om <= 0.0) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return out;
  }
  throw RejectionBudgetError("sample_trunc_lkj: exceeded " + std::to_string(max_attempts) +
                             " attempts (eta=" + std::to_string(eta) +
                             ", T=" + std::to_string(T) + ")");
}

std::pair<double, double> marginal_beta_params(double eta, int T) {
  const double a = eta - 1.0 + T / 2.0;
  if (!(a > 0.0)) throw std::domain_error("marginal_beta_params: eta - 1 + T/2 must be > 0");
  return {a, a};
}

}  // namespace lcmvp::corrconstrain
