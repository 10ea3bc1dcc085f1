#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

/// Adaptive Hamiltonian Monte Carlo over unconstrained parameter vectors,
/// multi-chain execution and convergence diagnostics.
namespace lcmvp::sampler {

struct HmcConfig {
  int n_chains = 4;
  int warmup = 1000;
  int sampling = 1000;
  double target_accept = 0.8;
  int max_steps = 1024;   ///< cap on leapfrog steps per trajectory
  double jitter = 0.5;    ///< uniform +- fraction on the trajectory length
  std::uint64_t seed = 1;
  bool store_draws = false;  ///< keep raw unconstrained draws as well

  void validate() const;
};

/// A differentiable log density plus the derived per-draw summaries the
/// study reports on (accuracies, prevalence, correlations).
class Target {
 public:
  virtual ~Target() = default;
  virtual int dim() const = 0;
  /// log density and gradient at x; may return -inf (gradient then ignored)
  virtual double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
  virtual Eigen::VectorXd initial_point() const = 0;
  virtual std::vector<std::string> derived_names() const = 0;
  /// derived quantities for one draw, after any class relabeling
  virtual Eigen::VectorXd derived(const Eigen::VectorXd& x) const = 0;
};

/// Sampling-phase output. Rows of `derived` (and `draws` when stored) are
/// chain-major: row = chain * n_iter + iter.
struct PosteriorSamples {
  int n_chains = 0;
  int n_iter = 0;
  std::vector<std::string> names;
  Eigen::MatrixXd derived;
  std::vector<std::uint8_t> divergent;  ///< per sampling draw
  Eigen::VectorXd step_size;            ///< per chain, frozen after warmup
  Eigen::MatrixXd mass_diag;            ///< n_chains x dim
  Eigen::MatrixXd draws;                ///< empty unless store_draws

  int column_index(const std::string& name) const;
  /// one derived quantity reshaped to n_iter x n_chains
  Eigen::MatrixXd chain_matrix(int column) const;
};

struct Diagnostics {
  std::vector<std::string> names;
  Eigen::VectorXd ess;
  Eigen::VectorXd rhat;
  long divergences = 0;
  double min_ess = 0.0;
  double max_rhat = 0.0;
  double wall_seconds = 0.0;
  double seconds_to_ess1000 = 0.0;  ///< projected wall time to min ESS 1000
};

using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// One unit-mass leapfrog step: half momentum kick, position drift, half kick.
/// grad_fn returns the gradient of the log density.
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const Eigen::VectorXd& position,
                                                     const Eigen::VectorXd& momentum, double eps,
                                                     const GradFn& grad_fn);

/// Runs cfg.n_chains adaptive HMC chains over the target. Warmup adapts the
/// step size by dual averaging toward cfg.target_accept and a diagonal mass
/// matrix from warmup variances (windowed, doubling schedule); both freeze
/// for the sampling phase. Trajectory lengths are jittered around a base
/// tuned from the warmup scale estimates. Divergence: |Delta H| > 1000 or a
/// non-finite evaluation. Chains run sequentially with per-chain RNG streams
/// derived from cfg.seed, so results are bit-reproducible.
/// Throws std::runtime_error when the initial point has non-finite density
/// or when more than half of all sampling draws diverge.
std::pair<PosteriorSamples, Diagnostics> run_chains(const Target& target, const HmcConfig& cfg);

/// Effective sample size from the autocorrelation sum (initial-monotone
/// positive-pair truncation), pooled across chains. draws is n_iter x n_chains.
/// Constant input returns the draw count by convention. Capped at the draw count.
double ess(const Eigen::MatrixXd& draws);
double ess(const Eigen::VectorXd& series);

/// Split potential scale reduction on half chains; constant input returns 1.
double split_rhat(const Eigen::MatrixXd& draws);

struct Summary {
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

/// Empirical median and central 95% interval of one derived quantity.
Summary summarize(const PosteriorSamples& samples, const std::string& quantity);
/// Same on a raw vector of draws.
Summary quantile_summary(const Eigen::VectorXd& draws);

}  // namespace lcmvp::sampler
