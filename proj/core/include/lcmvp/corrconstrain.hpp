#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lcmvp/math.hpp"

/// Correlation matrices with optional element-wise interval constraints,
/// built through a row-wise Cholesky construction, plus LKJ-family densities
/// and samplers.
namespace lcmvp::corrconstrain {

/// The feasible-interval intersection came up empty: the requested bounds are
/// inconsistent with the entries already fixed by earlier rows.
struct InfeasibleBoundsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rejection sampling exceeded its attempt budget.
struct RejectionBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cholesky factor of a correlation matrix. Every row of L has unit norm,
/// L's diagonal is strictly positive, and omega() = L L^T is positive
/// definite with unit diagonal. log_jacobian is log|det d(omega
/// off-diagonals)/d(raw)| of the transform that produced it (0 for direct
/// samples).
struct CorrChol {
  int dim{0};
  Eigen::MatrixXd L;
  double log_jacobian{0.0};

  Eigen::MatrixXd omega() const { return L * L.transpose(); }
};

/// Per-element [lb, ub] interval for each off-diagonal entry. Diagonal
/// entries are ignored. lb and ub are stored symmetric.
struct CorrBounds {
  int dim{0};
  Eigen::MatrixXd lb, ub;

  static CorrBounds free_bounds(int T) { return uniform_bounds(T, -1.0, 1.0); }
  static CorrBounds positive_bounds(int T) { return uniform_bounds(T, 0.0, 1.0); }
  static CorrBounds uniform_bounds(int T, double lo, double hi);

  void validate() const;
};

struct LkjSpec {
  double eta{1.0};
  bool truncated{false};
};

/// Number of free lower-triangle entries.
inline int n_raw(int T) { return T * (T - 1) / 2; }

/// Map unconstrained raw entries (row-major over the strict lower triangle)
/// to a bounded correlation Cholesky factor. For each position (i,j) the
/// geometrically feasible interval for Omega_ij given all earlier entries is
/// intersected with [lb_ij, ub_ij] and raw_ij is placed inside it by a
/// scaled logistic map; the diagonal takes the remaining row mass.
/// log_jacobian accumulates log(width) + log sigmoid'(raw) per entry (the
/// raw -> off-diagonal map is triangular, so this is the full log|det|).
/// Throws InfeasibleBoundsError when an intersection is empty and
/// std::invalid_argument on dimension mismatch.
CorrChol chol_from_raw(const Eigen::VectorXd& raw, const CorrBounds& bounds);

/// chol_from_raw plus forward-mode derivatives of every L entry and of
/// log_jacobian with respect to each raw coordinate (one dual sweep per
/// coordinate). Output containers are resized on demand and reusable across
/// calls.
struct CholDerivs {
  Eigen::MatrixXd L;
  double log_jacobian{0.0};
  std::vector<Eigen::MatrixXd> dL;  // dL[k](i,j) = dL_ij / draw_k
  Eigen::VectorXd dlogJ;
};
void chol_from_raw_with_derivs(const Eigen::VectorXd& raw, const CorrBounds& bounds,
                               CholDerivs& out);

/// Unnormalized LKJ log density (eta-1)*log det Omega = 2(eta-1)*sum log L_kk.
double lkj_log_density(const CorrChol& c, double eta);

/// Exact LKJ(eta) draw via the onion method, returned in Cholesky form.
CorrChol sample_lkj(double eta, int T, math::Rng& rng);

/// sample_lkj repeated until all off-diagonals are positive. Throws
/// RejectionBudgetError after max_attempts.
CorrChol sample_trunc_lkj(double eta, int T, math::Rng& rng,
                          long max_attempts = 10'000'000);

/// Marginal of any single off-diagonal under LKJ(eta) in dimension T:
/// (Omega_ij + 1)/2 ~ Beta(alpha, alpha) with alpha = eta - 1 + T/2.
std::pair<double, double> marginal_beta_params(double eta, int T);

}  // namespace lcmvp::corrconstrain
