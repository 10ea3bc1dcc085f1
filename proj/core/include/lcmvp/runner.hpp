#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcmvp/likelihood.hpp"
#include "lcmvp/metrics.hpp"
#include "lcmvp/priors.hpp"
#include "lcmvp/sampler.hpp"

/// Study orchestration: configuration, cell scheduling, result persistence
/// and report rendering.
namespace lcmvp::runner {

/// Malformed configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Filesystem failure (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StudyConfig {
  std::vector<int> dgms = {1, 2, 3, 4, 5};
  std::vector<int> sample_sizes = {300, 3000};
  std::vector<likelihood::ModelKind> models = {likelihood::ModelKind::ci,
                                               likelihood::ModelKind::lt,
                                               likelihood::ModelKind::mvp};
  /// empty = every builtin set of each model; otherwise a name filter that
  /// also selects from `extra_prior_sets`
  std::vector<std::string> prior_names;
  /// custom sets (e.g. alternative mixedLKJ bound patterns); same-name
  /// entries override builtins
  std::vector<priors::PriorSet> extra_prior_sets;
  long nsim_min = 30;
  long nsim_max = 1000;
  double mcse_threshold = 0.0025;
  double max_failed_fraction = 0.20;
  sampler::HmcConfig hmc;
  std::string out_dir = "study_out";
  std::uint64_t master_seed = 1;
  int workers = 1;

  void validate() const;
  std::string to_json_string() const;
  static StudyConfig from_json_string(const std::string& text);
  static StudyConfig from_file(const std::string& path);
};

/// Config-schema serialization of prior sets (round-trips losslessly).
std::string prior_set_to_json(const priors::PriorSet& set);
priors::PriorSet prior_set_from_json(const std::string& text);

/// Replicate seed stream: hash of master seed, cell key and replicate index.
std::uint64_t replicate_seed(std::uint64_t master, const std::string& cell_key, long replicate);

/// Fits one simulated replicate end to end (simulate, sample, summarize).
/// A sampler failure yields a record with failed=true rather than a throw.
metrics::SimRecord run_replicate(int dgm_id, int n_subjects, const priors::PriorSet& prior,
                                 const sampler::HmcConfig& hmc, std::uint64_t seed, int replicate);

/// Runs every (dgm x N x model x prior) cell with the adaptive stopping rule,
/// appending records.csv as replicates finish (resumable: existing records
/// are reused verbatim) and regenerating summary.csv, report.txt and
/// report.csv from the records. Returns 0, or 1 when any cell had more than
/// max_failed_fraction failed fits. Throws ConfigError / IoError.
int run_study(const StudyConfig& cfg);

/// Rebuilds summary.csv, report.txt and report.csv from an existing
/// records.csv in dir. Throws IoError when there are no records.
void render_report(const std::string& dir);

/// Dataset CSV: header "subject,t1..tT" plus optional trailing "class"
/// column with the simulation truth.
void dataset_to_csv(const likelihood::BinaryDataset& data, const std::string& path,
                    const std::vector<int>* classes = nullptr);
likelihood::BinaryDataset dataset_from_csv(const std::string& path);

}  // namespace lcmvp::runner
