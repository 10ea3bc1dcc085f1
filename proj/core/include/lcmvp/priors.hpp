#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcmvp/corrconstrain.hpp"
#include "lcmvp/likelihood.hpp"
#include "lcmvp/math.hpp"

/// Prior densities over the unconstrained parameter spaces, the builtin named
/// prior sets, and the Weibull/LKJ equivalence fitter.
namespace lcmvp::priors {

/// Independent normal priors on the probit-scale accuracy parameters,
/// beta_t^[d] for the probit mixture or theta_t^[d] = a/sqrt(1+b^2) for the
/// latent trait model. Row 0 = non-diseased class, row 1 = diseased.
struct AccuracyPrior {
  Eigen::MatrixXd mean;  ///< 2 x T
  Eigen::MatrixXd sd;    ///< 2 x T, all positive

  void validate() const;
};

enum class BFamily { gamma, weibull };

/// One-class prior on a latent-trait loading b > 0.
/// gamma uses (shape, scale); weibull uses (shape k, scale lambda) with
/// density (k/lambda)(x/lambda)^(k-1) exp(-(x/lambda)^k).
struct BMarginal {
  BFamily family = BFamily::gamma;
  double shape = 1.0;
  double scale = 1.0;

  double logpdf(double b) const;
  double dlogpdf_db(double b) const;
  double sample(math::Rng& rng) const;
};

/// Per-class loading priors (index 0 = non-diseased class).
struct BPrior {
  std::array<BMarginal, 2> per_class;
};

enum class CorrPriorKind { lkj, trunc, mixed };

/// Per-class correlation prior: LKJ shape plus the element-wise bound box
/// that defines its support under the bounded Cholesky parameterization.
struct CorrPriorSpec {
  CorrPriorKind kind = CorrPriorKind::lkj;
  std::array<corrconstrain::LkjSpec, 2> lkj;
  std::array<corrconstrain::CorrBounds, 2> bounds;
};

/// A named, self-consistent prior configuration for one model family.
/// Prevalence always gets a uniform(0,1) prior, expressed on the logit scale.
struct PriorSet {
  std::string name;
  likelihood::ModelKind model = likelihood::ModelKind::ci;
  AccuracyPrior accuracy;
  std::optional<CorrPriorSpec> corr;  ///< required for mvp
  std::optional<BPrior> b;            ///< required for lt

  void validate() const;
};

/// The study's prior configurations for a given data-generating mechanism.
/// Tests 2..T get normal(0,1) accuracy priors; test 1 gets the informative
/// reference-test prior of the DGM group (1-3 vs 4-5). mvp yields the six
/// correlation sets {LKJ, TruncLKJ, mixedLKJ} x {(10,1.5), (24,4)}, lt the
/// three loading sets, ci a single set.
/// Throws std::invalid_argument for ids outside 1..5.
std::vector<PriorSet> builtin_prior_sets(int dgm_id, likelihood::ModelKind model);

/// Complete log prior density over the model's unconstrained vector x
/// (layouts as in likelihood.hpp), including every transform Jacobian:
/// logit-prevalence, bounded-Cholesky correlation map, sigmoid map of the
/// mvp uniforms, and the latent-trait (a, log b) -> (theta, log b) change of
/// variables. Subject-level latent-trait gammas are not priced here; their
/// standard-normal factor belongs to the conditional likelihood.
/// Adding the matching with_jacobians=false likelihood value yields the
/// exact unconstrained posterior density.
/// Returns -inf when x lies outside the correlation bounds' support.
/// If grad is non-null it is resized and filled with the full gradient.
/// Throws std::invalid_argument when x's length does not match set.model or
/// the set lacks the blocks its model family requires.
double log_prior(const Eigen::VectorXd& x, const PriorSet& set, int n_tests, int n_subjects,
                 Eigen::VectorXd* grad = nullptr);

/// Draws n implied within-class correlations b_i b_j / sqrt((1+b_i^2)(1+b_j^2))
/// with b_i, b_j independent from the given class marginal.
Eigen::VectorXd implied_corr_samples(const BMarginal& bp, int n, math::Rng& rng);

/// Finds the Weibull(shape, scale) loading prior whose implied-correlation
/// distribution best matches the given correlation sample (all in (0,1)),
/// by maximum likelihood under a kernel density estimate of the implied
/// distribution (Silverman bandwidth, boundary reflection at 0 and 1).
/// Deterministic given seed. Requires >= 1000 samples.
/// Throws std::runtime_error when the search finds no interior optimum.
BMarginal fit_equivalent_weibull(const Eigen::VectorXd& corr_target_samples,
                                 std::uint64_t seed = 20240901);

}  // namespace lcmvp::priors
