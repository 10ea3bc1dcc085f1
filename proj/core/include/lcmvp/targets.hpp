#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lcmvp/corrconstrain.hpp"
#include "lcmvp/likelihood.hpp"
#include "lcmvp/priors.hpp"
#include "lcmvp/sampler.hpp"

/// Concrete sampler targets: test densities and the three model posteriors.
namespace lcmvp::sampler {

/// Independent standard normals; derived quantities are the coordinates.
class StdNormalTarget final : public Target {
 public:
  explicit StdNormalTarget(int dim);
  int dim() const override { return dim_; }
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd initial_point() const override;
  std::vector<std::string> derived_names() const override { return names_; }
  Eigen::VectorXd derived(const Eigen::VectorXd& x) const override { return x; }

 private:
  int dim_;
  std::vector<std::string> names_;
};

/// LKJ density over one bounded-Cholesky raw block; derived quantities are
/// the correlation entries. Used to check that the bounded parameterization
/// preserves the prior it claims to restrict.
class CorrPriorTarget final : public Target {
 public:
  CorrPriorTarget(double eta, int n_tests, corrconstrain::CorrBounds bounds);
  int dim() const override { return corrconstrain::n_raw(n_tests_); }
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd initial_point() const override;
  std::vector<std::string> derived_names() const override { return names_; }
  Eigen::VectorXd derived(const Eigen::VectorXd& x) const override;

 private:
  double eta_;
  int n_tests_;
  corrconstrain::CorrBounds bounds_;
  std::vector<std::string> names_;
};

/// Posterior (or prior pushforward, when prior_only) of one model family.
/// The unconstrained layouts are those documented in likelihood.hpp; with
/// prior_only the subject-latent blocks are dropped entirely.
/// Derived quantities: se1..seT, sp1..spT, prev, and for mvp/lt the per-class
/// correlation entries omega{1,2}_ij. Draws are deterministically relabeled
/// before deriving: when Se_1 < 1 - Sp_1 the class labels (and prevalence)
/// are swapped, keeping the reference-test identification.
class ModelTarget final : public Target {
 public:
  ModelTarget(likelihood::ModelKind model, likelihood::BinaryDataset data, priors::PriorSet prior,
              bool prior_only = false);
  int dim() const override { return dim_; }
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd initial_point() const override;
  std::vector<std::string> derived_names() const override { return names_; }
  Eigen::VectorXd derived(const Eigen::VectorXd& x) const override;

  likelihood::ModelKind model() const { return model_; }
  int n_tests() const { return n_tests_; }

 private:
  likelihood::ModelKind model_;
  likelihood::BinaryDataset data_;
  likelihood::PatternCounts pattern_counts_;  // ci only; the likelihood needs nothing else
  priors::PriorSet prior_;
  bool prior_only_;
  int n_tests_ = 0;
  int n_eff_ = 0;  // subjects entering the target (0 when prior_only)
  int dim_ = 0;
  std::vector<std::string> names_;
};

/// Builds the posterior target for (model, data, prior); with prior_only the
/// data only fixes T and the likelihood is switched off.
std::unique_ptr<Target> make_target(likelihood::ModelKind model,
                                    const likelihood::BinaryDataset& data,
                                    const priors::PriorSet& prior, bool prior_only = false);

}  // namespace lcmvp::sampler
