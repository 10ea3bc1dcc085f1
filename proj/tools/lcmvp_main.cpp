// lcmvp: simulate datasets, fit one model, run the full simulation study,
// or re-render reports from persisted records.
//
// Exit codes: 0 success, 1 study completed with degraded cells,
// 2 bad configuration or arguments, 3 filesystem failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lcmvp/dgm.hpp"
#include "lcmvp/math.hpp"
#include "lcmvp/runner.hpp"
#include "lcmvp/sampler.hpp"
#include "lcmvp/targets.hpp"

namespace fs = std::filesystem;
using namespace lcmvp;

namespace {

int env_workers(int fallback) {
  const char* env = std::getenv("LCMVP_THREADS");
  if (!env || !*env) return fallback;
  try {
    const int w = std::stoi(env);
    if (w < 1) throw std::invalid_argument("nonpositive");
    return w;
  } catch (const std::exception&) {
    throw runner::ConfigError("LCMVP_THREADS must be a positive integer");
  }
}

int cmd_simulate(int dgm_id, int n, std::uint64_t seed, const std::string& out, bool with_class) {
  const dgm::DgmSpec spec = dgm::dgm_spec(dgm_id);
  math::Rng rng(seed);
  std::vector<int> classes;
  const auto data = dgm::simulate_dataset(spec, n, rng, with_class ? &classes : nullptr);
  runner::dataset_to_csv(data, out, with_class ? &classes : nullptr);
  std::cout << "wrote " << out << " (" << n << " subjects, " << spec.n_tests() << " tests, dgm "
            << dgm_id << ")\n";
  return 0;
}

priors::PriorSet resolve_prior(const std::string& config_path, likelihood::ModelKind model,
                               int dgm_id, const std::string& prior_name) {
  if (!config_path.empty()) {
    std::ifstream ifs(config_path);
    if (!ifs) throw runner::IoError("cannot open prior config: " + config_path);
    std::stringstream ss;
    ss << ifs.rdbuf();
    priors::PriorSet set = runner::prior_set_from_json(ss.str());
    if (set.model != model)
      throw runner::ConfigError("prior config is for model '" + likelihood::to_string(set.model) +
                                "', not '" + likelihood::to_string(model) + "'");
    return set;
  }
  const auto sets = priors::builtin_prior_sets(dgm_id, model);
  if (prior_name.empty()) return sets.front();
  for (const auto& s : sets)
    if (s.name == prior_name) return s;
  std::string names;
  for (const auto& s : sets) names += (names.empty() ? "" : ", ") + s.name;
  throw runner::ConfigError("unknown prior set '" + prior_name + "' for model " +
                            likelihood::to_string(model) + " (builtin: " + names + ")");
}

int cmd_fit(const std::string& data_path, const std::string& model_name,
            const std::string& prior_name, const std::string& config_path, int dgm_id,
            std::uint64_t seed, const std::string& out_dir, const sampler::HmcConfig& hmc) {
  const likelihood::ModelKind model = likelihood::model_from_string(model_name);
  const auto data = runner::dataset_from_csv(data_path);
  const priors::PriorSet prior = resolve_prior(config_path, model, dgm_id, prior_name);

  sampler::HmcConfig cfg = hmc;
  cfg.seed = seed;
  const auto target = sampler::make_target(model, data, prior);
  const auto [samples, diag] = sampler::run_chains(*target, cfg);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw runner::IoError("cannot create " + out_dir + ": " + ec.message());

  {
    std::ofstream ofs(fs::path(out_dir) / "draws.csv", std::ios::trunc);
    if (!ofs) throw runner::IoError("cannot write draws.csv in " + out_dir);
    ofs << "chain,iter";
    for (const auto& name : samples.names) ofs << ',' << name;
    ofs << '\n';
    for (int c = 0; c < samples.n_chains; ++c)
      for (int i = 0; i < samples.n_iter; ++i) {
        ofs << (c + 1) << ',' << (i + 1);
        const auto row = samples.derived.row(c * samples.n_iter + i);
        for (int k = 0; k < row.size(); ++k) ofs << ',' << math::fmt_g6(row(k));
        ofs << '\n';
      }
  }
  {
    std::ofstream ofs(fs::path(out_dir) / "fit_summary.csv", std::ios::trunc);
    if (!ofs) throw runner::IoError("cannot write fit_summary.csv in " + out_dir);
    ofs << "quantity,median,q025,q975,ess,rhat\n";
    for (size_t k = 0; k < samples.names.size(); ++k) {
      const auto s = sampler::summarize(samples, samples.names[k]);
      ofs << samples.names[k] << ',' << math::fmt_g6(s.median) << ',' << math::fmt_g6(s.q025)
          << ',' << math::fmt_g6(s.q975) << ',' << math::fmt_g6(diag.ess(static_cast<long>(k)))
          << ',' << math::fmt_g6(diag.rhat(static_cast<long>(k))) << '\n';
    }
  }

  std::cout << "fit " << likelihood::to_string(model) << "/" << prior.name << " on "
            << data.n_subjects << " subjects: min ESS " << math::fmt_g6(diag.min_ess)
            << ", max Rhat " << math::fmt_g6(diag.max_rhat) << ", divergences "
            << diag.divergences << " (" << math::fmt_g6(diag.wall_seconds) << "s)\n"
            << "wrote " << out_dir << "/draws.csv and fit_summary.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-class diagnostic accuracy models: simulate / fit / study / report"};
  app.require_subcommand(1);
  int exit_code = 0;

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw one dataset from a data-generating mechanism");
  int sim_dgm = 1, sim_n = 300;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "dataset.csv";
  bool sim_class = false;
  sim->add_option("--dgm", sim_dgm, "mechanism id (1-5)")->required();
  sim->add_option("--n", sim_n, "subjects")->required();
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--out", sim_out, "output csv path");
  sim->add_flag("--with-class", sim_class, "append the true class column");
  sim->callback([&] { exit_code = cmd_simulate(sim_dgm, sim_n, sim_seed, sim_out, sim_class); });

  // fit
  auto* fit = app.add_subcommand("fit", "fit one model/prior to one dataset");
  std::string fit_data, fit_model, fit_prior, fit_config, fit_out = "fit_out";
  int fit_dgm = 1;
  std::uint64_t fit_seed = 1;
  sampler::HmcConfig fit_hmc;
  fit->add_option("--data", fit_data, "dataset csv (from `simulate`)")->required();
  fit->add_option("--model", fit_model, "ci | lt | mvp")->required();
  fit->add_option("--prior", fit_prior, "builtin prior-set name (default: first for the model)");
  fit->add_option("--config", fit_config, "json prior-set file overriding --prior");
  fit->add_option("--dgm", fit_dgm, "mechanism id selecting the builtin prior family (1-5)");
  fit->add_option("--seed", fit_seed, "rng seed");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--chains", fit_hmc.n_chains, "number of chains");
  fit->add_option("--warmup", fit_hmc.warmup, "warmup iterations per chain");
  fit->add_option("--sampling", fit_hmc.sampling, "sampling iterations per chain");
  fit->callback([&] {
    exit_code = cmd_fit(fit_data, fit_model, fit_prior, fit_config, fit_dgm, fit_seed, fit_out,
                        fit_hmc);
  });

  // study
  auto* study = app.add_subcommand("study", "run the simulation study with adaptive stopping");
  std::string study_config, study_out;
  std::vector<int> study_dgms, study_ns;
  std::vector<std::string> study_models, study_priors;
  std::uint64_t study_seed = 0;
  long study_nsim_max = -1;
  int study_workers = 0;
  study->add_option("--config", study_config, "json study config file");
  study->add_option("--dgm", study_dgms, "mechanism ids (overrides config)");
  study->add_option("--n", study_ns, "sample sizes (overrides config)");
  study->add_option("--model", study_models, "models to fit (overrides config)");
  study->add_option("--prior", study_priors, "prior-set name filter (overrides config)");
  study->add_option("--seed", study_seed, "master seed (overrides config)");
  study->add_option("--nsim-max", study_nsim_max, "replicate cap per cell (overrides config)");
  study->add_option("--out", study_out, "output directory (overrides config)");
  study->add_option("--workers", study_workers, "parallel fits per wave (overrides config)");
  study->callback([&] {
    runner::StudyConfig cfg =
        study_config.empty() ? runner::StudyConfig{} : runner::StudyConfig::from_file(study_config);
    if (!study_dgms.empty()) cfg.dgms = study_dgms;
    if (!study_ns.empty()) cfg.sample_sizes = study_ns;
    if (!study_models.empty()) {
      cfg.models.clear();
      for (const auto& m : study_models) cfg.models.push_back(likelihood::model_from_string(m));
    }
    if (!study_priors.empty()) cfg.prior_names = study_priors;
    if (study->count("--seed")) cfg.master_seed = study_seed;
    if (study_nsim_max >= 0) cfg.nsim_max = study_nsim_max;
    if (!study_out.empty()) cfg.out_dir = study_out;
    if (study_workers > 0) cfg.workers = study_workers;
    cfg.workers = env_workers(cfg.workers);
    exit_code = runner::run_study(cfg);
  });

  // report
  auto* rep = app.add_subcommand("report", "re-render summary and report from records.csv");
  std::string rep_dir = "study_out";
  rep->add_option("--out", rep_dir, "study output directory holding records.csv");
  rep->callback([&] {
    runner::render_report(rep_dir);
    std::cout << "wrote " << rep_dir << "/summary.csv, report.txt, report.csv\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const runner::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const runner::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
