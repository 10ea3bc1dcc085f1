#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "lcmvp/likelihood.hpp"
#include "lcmvp/math.hpp"

/// The five data-generating mechanisms of the simulation study and the
/// ancestral simulator that draws datasets from them.
namespace lcmvp::dgm {

/// A fully specified truth: marginal accuracies, prevalence and per-class
/// latent correlation matrices (index 0 = non-diseased class).
struct DgmSpec {
  int id = 0;
  Eigen::VectorXd true_se;  ///< length T, fractions
  Eigen::VectorXd true_sp;
  double prevalence = 0.20;
  std::array<Eigen::MatrixXd, 2> omega;

  int n_tests() const { return static_cast<int>(true_se.size()); }
};

/// The study's mechanisms: 1 = conditional independence; 2/3 = accuracy set
/// one with varied / highly varied correlations; 4/5 = accuracy set two with
/// the same two correlation structures. Throws std::invalid_argument outside 1..5.
DgmSpec dgm_spec(int id);

/// Latent class means on the probit scale: mu^[2] = inv_phi(Se),
/// mu^[1] = inv_phi(1 - Sp). Rows: class 1, class 2.
Eigen::MatrixXd mu_from_accuracy(const Eigen::VectorXd& se, const Eigen::VectorXd& sp);

/// Ancestral draw: class ~ Bernoulli(prevalence), then Z ~ MVN(mu, omega),
/// y_t = 1{Z_t > 0}. One uniform plus T normals consumed per subject, so the
/// stream is reproducible. If classes is non-null it receives the true class
/// (1 or 2) per subject.
likelihood::BinaryDataset simulate_dataset(const DgmSpec& spec, int n, math::Rng& rng,
                                           std::vector<int>* classes = nullptr);

/// Correlation matrix of I + (b/2)(b/2)^T: the non-diseased structure
/// obtained by halving the diseased loadings.
Eigen::MatrixXd half_b_nondiseased(const Eigen::VectorXd& b);

}  // namespace lcmvp::dgm
