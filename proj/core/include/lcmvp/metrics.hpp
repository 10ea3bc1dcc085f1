#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcmvp/sampler.hpp"

/// Simulation-study performance measures with Monte Carlo standard errors,
/// the adaptive stopping rule and equivalence grouping of configurations.
namespace lcmvp::metrics {

/// One completed (or failed) fit of one simulated dataset.
struct SimRecord {
  int dgm = 0;
  std::string model;
  std::string prior;
  int n_subjects = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  Eigen::MatrixXd se;  ///< T x 3: median, q2.5, q97.5 (fractions)
  Eigen::MatrixXd sp;  ///< T x 3
  sampler::Summary prev;
  double min_ess = 0.0;
  double max_rhat = 0.0;
  long divergences = 0;
  /// in-process only; never serialized, so persisted outputs stay
  /// byte-identical across re-runs
  double wall_seconds = 0.0;

  int n_tests() const { return static_cast<int>(se.rows()); }

  /// Serialization at 6 significant digits; the accumulator must only ever
  /// see round-tripped values so resumed and fresh runs aggregate identically.
  static std::string csv_header(int n_tests);
  std::string csv_row() const;
  static SimRecord from_csv_row(const std::string& line);
};

struct EstStats {
  double value = 0.0;
  double mcse = 0.0;
};

/// rmse = sqrt(mean (est - truth)^2), mcse = rmse / sqrt(2 n).
EstStats rmse_with_mcse(const Eigen::VectorXd& estimates, double truth);
/// bias = mean(est) - truth, mcse = sd(est)/sqrt(n).
EstStats bias(const Eigen::VectorXd& estimates, double truth);
/// intervals: n x 2 (lower, upper); rate of intervals containing truth,
/// mcse = sqrt(rate (1-rate) / n).
EstStats coverage(const Eigen::MatrixXd& intervals, double truth);
/// mean interval width
double width(const Eigen::MatrixXd& intervals);

/// Streaming per-test sums for one study cell. Failed records are counted
/// but excluded from every estimate.
class MetricsAccumulator {
 public:
  MetricsAccumulator(Eigen::VectorXd true_se, Eigen::VectorXd true_sp);

  void add(const SimRecord& rec);

  long n_sim() const { return n_; }
  long n_failed() const { return n_failed_; }
  int n_tests() const { return static_cast<int>(true_se_.size()); }

  EstStats rmse_se(int t) const;
  EstStats rmse_sp(int t) const;
  EstStats bias_se(int t) const;
  EstStats bias_sp(int t) const;
  EstStats coverage_se(int t) const;
  EstStats coverage_sp(int t) const;
  double width_se(int t) const;
  double width_sp(int t) const;

  /// mean across tests of mcse(rmse(Se)): the adaptive stopping quantity
  double mean_mcse_rmse_se() const;

  /// plain across-test means of the per-test metrics (fractions)
  struct CellStats {
    double rmse_se = 0, mcse_rmse_se = 0, rmse_sp = 0, mcse_rmse_sp = 0;
    double bias_se = 0, bias_sp = 0, cvg_se = 0, cvg_sp = 0, width_se = 0, width_sp = 0;
  };
  CellStats cell_stats() const;

 private:
  struct Sums {
    double sum_err = 0, sumsq_err = 0, hits = 0, sum_width = 0;
  };
  Eigen::VectorXd true_se_, true_sp_;
  std::vector<Sums> se_, sp_;
  long n_ = 0;
  long n_failed_ = 0;
};

/// True once n_sim >= nsim_min and the mean across tests of the MCSE of the
/// sensitivity RMSE falls strictly below the threshold.
bool adaptive_stop(const MetricsAccumulator& acc, double threshold = 0.0025, long nsim_min = 30);

/// Partition cells given as (rmse_total, mcse_total) into best group (0) and
/// worse group (1): best = interval value +- 1.96 mcse overlaps the leader's.
/// Invariant to input order. Requires >= 2 cells.
std::vector<int> equivalence_groups(const std::vector<std::pair<double, double>>& cells);

}  // namespace lcmvp::metrics
