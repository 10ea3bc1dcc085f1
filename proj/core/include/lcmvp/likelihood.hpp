#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lcmvp/corrconstrain.hpp"
#include "lcmvp/math.hpp"

/// Log-likelihoods and manual gradients for the three latent-class models
/// (conditional independence, latent trait, multivariate probit via GHK),
/// the summary-accuracy transforms, and slow exact oracles for testing.
namespace lcmvp::likelihood {

enum class ModelKind { ci, lt, mvp };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

/// N x T matrix of binary test results.
struct BinaryDataset {
  int n_subjects{0};
  int n_tests{0};
  Eigen::MatrixXi y;

  void validate() const;
};

/// Per-test summary accuracy on the probability scale.
struct SummaryAccuracy {
  Eigen::VectorXd se, sp;
};

/// Multivariate-probit parameters on the constrained scale. beta row 0 is
/// the non-diseased class, row 1 the diseased class; u holds the per-subject
/// GHK uniforms (shared across the two class probabilities).
struct MvpParams {
  Eigen::MatrixXd beta;  // 2 x T
  double prev{0.5};
  std::array<corrconstrain::CorrChol, 2> chol;
  Eigen::MatrixXd u;  // N x T, entries strictly inside (0,1)
};

/// Latent-trait parameters: per-class intercepts a and positive loadings b,
/// plus the per-subject standard-normal trait gamma.
struct LatentTraitParams {
  Eigen::MatrixXd a, b;  // 2 x T
  double prev{0.5};
  Eigen::VectorXd gamma;  // N
};

/// Se_t = Phi(a2_t/sqrt(1+b2_t^2)), Sp_t = Phi(-a1_t/sqrt(1+b1_t^2)).
SummaryAccuracy summary_accuracy_lt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Se_t = Phi(beta2_t), Sp_t = Phi(-beta1_t).
SummaryAccuracy summary_accuracy_mvp(const Eigen::MatrixXd& beta);

/// log d(theta)/d(a) = -0.5*log(1+b^2) for theta = a/sqrt(1+b^2).
double theta_jacobian_log(double b);

/// The latent-trait model as a restricted multivariate probit:
/// beta = theta and Omega_ij = b_i b_j / sqrt((1+b_i^2)(1+b_j^2)).
struct LtAsMvp {
  Eigen::MatrixXd beta;  // 2 x T
  std::array<corrconstrain::CorrChol, 2> chol;
};
LtAsMvp lt_as_mvp(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Conditional-independence mixture log-likelihood.
double ci_loglik(const Eigen::MatrixXd& beta, double prev, const BinaryDataset& data);

/// One GHK sweep for one subject and one class. Sequentially builds the
/// conditional mean m_t = beta_t + sum_{s<t} L_ts z_s, takes the interval
/// mass q_t on the side implied by y_t (y=1 means z_t > 0), and sets z_t by
/// the truncated-normal inverse CDF at u_t. prob = prod q_t (also returned
/// on the log scale; q_t floored at 1e-300). Averaged over independent u
/// draws, prob converges to the orthant probability.
struct GhkResult {
  double prob{0.0};
  double logprob{0.0};
  Eigen::VectorXd z;
};
GhkResult ghk_class_prob(const Eigen::VectorXd& beta_d, const corrconstrain::CorrChol& chol_d,
                         const Eigen::VectorXi& y_n, const Eigen::VectorXd& u_n);

/// Two-class mixture log-likelihood, u shared across classes per subject.
double lcmvp_loglik(const MvpParams& params, const BinaryDataset& data);

/// Latent-trait log-likelihood conditional on gamma, including the
/// standard-normal log density of each gamma_n.
double lt_conditional_loglik(const LatentTraitParams& params, const BinaryDataset& data);

/// Marginal latent-trait log-likelihood with gamma integrated out by
/// Gauss-Hermite quadrature.
double lt_marginal_loglik_gh(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double prev,
                             const BinaryDataset& data, int nodes);

// ---------------------------------------------------------------------------
// Unconstrained parameterizations and gradients.
//
// mvp: x = [zeta, beta1(T), beta2(T), raw1(m), raw2(m), v(N*T subject-major)]
//      with prev = sigmoid(zeta), chol_d = chol_from_raw(raw_d, bounds_d),
//      u = sigmoid(v) clamped to [1e-12, 1-1e-12].
// lt:  x = [zeta, a1(T), a2(T), logb1(T), logb2(T), gamma(N)]
// ci:  x = [zeta, beta1(T), beta2(T)]

inline int mvp_dim(int T, int N) { return 1 + 2 * T + 2 * corrconstrain::n_raw(T) + N * T; }
inline int lt_dim(int T, int N) { return 1 + 4 * T + N; }
inline int ci_dim(int T) { return 1 + 2 * T; }

MvpParams mvp_unpack(const Eigen::VectorXd& x, const corrconstrain::CorrBounds& bounds1,
                     const corrconstrain::CorrBounds& bounds2, int n_subjects);
LatentTraitParams lt_unpack(const Eigen::VectorXd& x, int n_tests, int n_subjects);

/// Log-likelihood in the unconstrained parameterization; when
/// with_jacobians is set, all change-of-variable log-Jacobians (logit
/// prevalence, bounded correlations, GHK uniforms / log-b) are added. grad
/// may be null. A raw point whose bound intersection is empty yields -inf.
double mvp_value_grad(const Eigen::VectorXd& x, const corrconstrain::CorrBounds& bounds1,
                      const corrconstrain::CorrBounds& bounds2, const BinaryDataset& data,
                      bool with_jacobians, Eigen::VectorXd* grad);
double lt_value_grad(const Eigen::VectorXd& x, const BinaryDataset& data, bool with_jacobians,
                     Eigen::VectorXd* grad);
double ci_value_grad(const Eigen::VectorXd& x, const BinaryDataset& data, bool with_jacobians,
                     Eigen::VectorXd* grad);

/// Response patterns with multiplicities; the conditional-independence
/// likelihood only depends on the data through these counts, so hot loops
/// should aggregate once and reuse.
struct PatternCounts {
  int n_tests = 0;
  std::vector<std::pair<std::uint32_t, long>> counts;
};
PatternCounts aggregate_patterns(const BinaryDataset& data);
double ci_value_grad(const Eigen::VectorXd& x, const PatternCounts& pat, bool with_jacobians,
                     Eigen::VectorXd* grad);

/// Exact analytic gradient of lcmvp_loglik plus all change-of-variable
/// log-Jacobians, in the unconstrained parameterization.
Eigen::VectorXd lcmvp_grad(const Eigen::VectorXd& x, const corrconstrain::CorrBounds& bounds1,
                           const corrconstrain::CorrBounds& bounds2, const BinaryDataset& data);

// ---------------------------------------------------------------------------
// Exact oracles (slow; intended for tests and small T).

/// P(X1 > a1, X2 > a2) for standard bivariate normal with correlation rho,
/// by 1D quadrature of phi(z) * Phi((rho z - a2)/sqrt(1-rho^2)).
double bvn_orthant(double a1, double a2, double rho);

/// Closed form P(X1 > 0, X2 > 0) = 1/4 + asin(rho)/(2 pi).
double orthant_closed_bvn(double rho);

/// Exact pattern probability P(Y = y | class) for Z ~ N(beta_d, Omega_d), by
/// tensor Gauss-Hermite integration of the GHK integrand over its T-1
/// uniforms (the GHK estimator is unbiased, so this integral is the orthant
/// probability). Practical for T <= 4.
double exact_pattern_prob(const Eigen::VectorXd& beta_d, const corrconstrain::CorrChol& chol_d,
                          const Eigen::VectorXi& y, int gh_nodes = 48);

/// Exact mixture log-likelihood built from exact_pattern_prob (T <= 4).
double mvp_exact_loglik(const Eigen::MatrixXd& beta, double prev,
                        const std::array<corrconstrain::CorrChol, 2>& chol,
                        const BinaryDataset& data, int gh_nodes = 48);

/// Latent-normal correlation from a 2x2 table of counts, by bisection of
/// bvn_orthant against the empirical joint-positive rate.
double tetrachoric(long n11, long n10, long n01, long n00);

}  // namespace lcmvp::likelihood
