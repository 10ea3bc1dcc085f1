#include "lcmvp/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "lcmvp/dgm.hpp"
#include "lcmvp/math.hpp"
#include "lcmvp/targets.hpp"

namespace lcmvp::runner {

namespace fs = std::filesystem;
using json = nlohmann::json;
using likelihood::ModelKind;
using metrics::SimRecord;
using priors::PriorSet;

// ---------------------------------------------------------------------------
// configuration schema

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: expected a matrix (array of rows)");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(static_cast<size_t>(i)).size()) != cols)
      throw ConfigError("config: ragged matrix rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(static_cast<size_t>(i)).at(static_cast<size_t>(c)).get<double>();
  }
  return m;
}

std::string corr_kind_name(priors::CorrPriorKind k) {
  switch (k) {
    case priors::CorrPriorKind::lkj: return "lkj";
    case priors::CorrPriorKind::trunc: return "trunc";
    case priors::CorrPriorKind::mixed: return "mixed";
  }
  throw std::logic_error("unknown CorrPriorKind");
}

priors::CorrPriorKind corr_kind_from(const std::string& s) {
  if (s == "lkj") return priors::CorrPriorKind::lkj;
  if (s == "trunc") return priors::CorrPriorKind::trunc;
  if (s == "mixed") return priors::CorrPriorKind::mixed;
  throw ConfigError("config: unknown correlation prior kind '" + s + "'");
}

json prior_set_to_json_obj(const PriorSet& set) {
  json j;
  j["name"] = set.name;
  j["model"] = likelihood::to_string(set.model);
  j["accuracy"] = {{"mean", matrix_to_json(set.accuracy.mean)}, {"sd", matrix_to_json(set.accuracy.sd)}};
  if (set.corr) {
    json bounds = json::array();
    for (const auto& b : set.corr->bounds)
      bounds.push_back(json{{"lb", matrix_to_json(b.lb)}, {"ub", matrix_to_json(b.ub)}});
    j["corr"] = {{"kind", corr_kind_name(set.corr->kind)},
                 {"eta", {set.corr->lkj[0].eta, set.corr->lkj[1].eta}},
                 {"bounds", std::move(bounds)}};
  }
  if (set.b) {
    json marg = json::array();
    for (const auto& m : set.b->per_class)
      marg.push_back(json{{"family", m.family == priors::BFamily::gamma ? "gamma" : "weibull"},
                          {"shape", m.shape},
                          {"scale", m.scale}});
    j["b"] = std::move(marg);
  }
  return j;
}

PriorSet prior_set_from_json_obj(const json& j) {
  try {
    PriorSet set;
    set.name = j.at("name").get<std::string>();
    set.model = likelihood::model_from_string(j.at("model").get<std::string>());
    set.accuracy.mean = matrix_from_json(j.at("accuracy").at("mean"));
    set.accuracy.sd = matrix_from_json(j.at("accuracy").at("sd"));
    if (j.contains("corr")) {
      const json& jc = j.at("corr");
      priors::CorrPriorSpec c;
      c.kind = corr_kind_from(jc.at("kind").get<std::string>());
      c.lkj[0] = {jc.at("eta").at(0).get<double>(), c.kind != priors::CorrPriorKind::lkj};
      c.lkj[1] = {jc.at("eta").at(1).get<double>(), c.kind != priors::CorrPriorKind::lkj};
      for (int d = 0; d < 2; ++d) {
        corrconstrain::CorrBounds b;
        b.lb = matrix_from_json(jc.at("bounds").at(static_cast<size_t>(d)).at("lb"));
        b.ub = matrix_from_json(jc.at("bounds").at(static_cast<size_t>(d)).at("ub"));
        b.dim = static_cast<int>(b.lb.rows());
        b.validate();
        c.bounds[static_cast<size_t>(d)] = std::move(b);
      }
      set.corr = std::move(c);
    }
    if (j.contains("b")) {
      priors::BPrior bp;
      for (int d = 0; d < 2; ++d) {
        const json& jm = j.at("b").at(static_cast<size_t>(d));
        const std::string fam = jm.at("family").get<std::string>();
        if (fam != "gamma" && fam != "weibull") throw ConfigError("config: unknown b family '" + fam + "'");
        bp.per_class[static_cast<size_t>(d)] = {
            fam == "gamma" ? priors::BFamily::gamma : priors::BFamily::weibull,
            jm.at("shape").get<double>(), jm.at("scale").get<double>()};
      }
      set.b = bp;
    }
    set.validate();
    return set;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed prior set: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: invalid prior set: ") + e.what());
  }
}

}  // namespace

std::string prior_set_to_json(const PriorSet& set) { return prior_set_to_json_obj(set).dump(2); }

PriorSet prior_set_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: prior set parse failure: ") + e.what());
  }
  return prior_set_from_json_obj(j);
}

void StudyConfig::validate() const {
  if (dgms.empty() || sample_sizes.empty() || models.empty())
    throw ConfigError("config: dgms, sample_sizes and models must be non-empty");
  for (int d : dgms)
    if (d < 1 || d > 5) throw ConfigError("config: dgm ids must be in 1..5");
  for (int n : sample_sizes)
    if (n < 1) throw ConfigError("config: sample sizes must be positive");
  // nsim_max below nsim_min is allowed: the cap binds first (smoke runs)
  if (nsim_min < 2 || nsim_max < 1) throw ConfigError("config: need nsim_min >= 2 and nsim_max >= 1");
  if (!(mcse_threshold >= 0.0)) throw ConfigError("config: mcse_threshold must be >= 0");
  if (!(max_failed_fraction >= 0.0 && max_failed_fraction < 1.0))
    throw ConfigError("config: max_failed_fraction must be in [0,1)");
  if (workers < 1) throw ConfigError("config: workers >= 1 required");
  if (out_dir.empty()) throw ConfigError("config: out_dir must be set");
  try {
    hmc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& s : extra_prior_sets) s.validate();
}

std::string StudyConfig::to_json_string() const {
  json j;
  j["dgms"] = dgms;
  j["sample_sizes"] = sample_sizes;
  json ms = json::array();
  for (auto m : models) ms.push_back(likelihood::to_string(m));
  j["models"] = std::move(ms);
  j["priors"] = prior_names;
  json sets = json::array();
  for (const auto& s : extra_prior_sets) sets.push_back(prior_set_to_json_obj(s));
  j["prior_sets"] = std::move(sets);
  j["nsim_min"] = nsim_min;
  j["nsim_max"] = nsim_max;
  j["mcse_threshold"] = mcse_threshold;
  j["max_failed_fraction"] = max_failed_fraction;
  j["hmc"] = {{"n_chains", hmc.n_chains},     {"warmup", hmc.warmup},
              {"sampling", hmc.sampling},     {"target_accept", hmc.target_accept},
              {"max_steps", hmc.max_steps},   {"jitter", hmc.jitter},
              {"store_draws", hmc.store_draws}};
  j["out_dir"] = out_dir;
  j["master_seed"] = master_seed;
  j["workers"] = workers;
  return j.dump(2);
}

StudyConfig StudyConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "dgms",       "sample_sizes",   "models",       "priors",
      "prior_sets", "nsim_min",       "nsim_max",     "mcse_threshold",
      "max_failed_fraction",          "hmc",          "out_dir",
      "master_seed", "workers"};
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ConfigError("config: unknown key '" + item.key() + "'");

  StudyConfig cfg;
  try {
    if (j.contains("dgms")) cfg.dgms = j.at("dgms").get<std::vector<int>>();
    if (j.contains("sample_sizes")) cfg.sample_sizes = j.at("sample_sizes").get<std::vector<int>>();
    if (j.contains("models")) {
      cfg.models.clear();
      for (const auto& m : j.at("models")) cfg.models.push_back(likelihood::model_from_string(m.get<std::string>()));
    }
    if (j.contains("priors")) cfg.prior_names = j.at("priors").get<std::vector<std::string>>();
    if (j.contains("prior_sets"))
      for (const auto& s : j.at("prior_sets")) cfg.extra_prior_sets.push_back(prior_set_from_json_obj(s));
    if (j.contains("nsim_min")) cfg.nsim_min = j.at("nsim_min").get<long>();
    if (j.contains("nsim_max")) cfg.nsim_max = j.at("nsim_max").get<long>();
    if (j.contains("mcse_threshold")) cfg.mcse_threshold = j.at("mcse_threshold").get<double>();
    if (j.contains("max_failed_fraction"))
      cfg.max_failed_fraction = j.at("max_failed_fraction").get<double>();
    if (j.contains("hmc")) {
      const json& h = j.at("hmc");
      static const std::vector<std::string> hknown = {"n_chains",  "warmup",   "sampling",
                                                      "target_accept", "max_steps", "jitter",
                                                      "store_draws"};
      for (const auto& item : h.items())
        if (std::find(hknown.begin(), hknown.end(), item.key()) == hknown.end())
          throw ConfigError("config: unknown hmc key '" + item.key() + "'");
      if (h.contains("n_chains")) cfg.hmc.n_chains = h.at("n_chains").get<int>();
      if (h.contains("warmup")) cfg.hmc.warmup = h.at("warmup").get<int>();
      if (h.contains("sampling")) cfg.hmc.sampling = h.at("sampling").get<int>();
      if (h.contains("target_accept")) cfg.hmc.target_accept = h.at("target_accept").get<double>();
      if (h.contains("max_steps")) cfg.hmc.max_steps = h.at("max_steps").get<int>();
      if (h.contains("jitter")) cfg.hmc.jitter = h.at("jitter").get<double>();
      if (h.contains("store_draws")) cfg.hmc.store_draws = h.at("store_draws").get<bool>();
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

StudyConfig StudyConfig::from_file(const std::string& path) {
  std::ifstream ifs(path);
  if (!ifs) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << ifs.rdbuf();
  return from_json_string(ss.str());
}

// ---------------------------------------------------------------------------
// replicate execution

std::uint64_t replicate_seed(std::uint64_t master, const std::string& cell_key, long replicate) {
  const std::uint64_t cell = math::splitmix64(master ^ math::fnv1a64(cell_key));
  return math::splitmix64(cell + static_cast<std::uint64_t>(replicate));
}

SimRecord run_replicate(int dgm_id, int n_subjects, const PriorSet& prior,
                        const sampler::HmcConfig& hmc, std::uint64_t seed, int replicate) {
  const dgm::DgmSpec spec = dgm::dgm_spec(dgm_id);
  const int T = spec.n_tests();

  SimRecord rec;
  rec.dgm = dgm_id;
  rec.model = likelihood::to_string(prior.model);
  rec.prior = prior.name;
  rec.n_subjects = n_subjects;
  rec.replicate = replicate;
  rec.seed = seed;
  rec.se = Eigen::MatrixXd::Zero(T, 3);
  rec.sp = Eigen::MatrixXd::Zero(T, 3);

  math::Rng rng(seed);
  const likelihood::BinaryDataset data = dgm::simulate_dataset(spec, n_subjects, rng);

  sampler::HmcConfig chain_cfg = hmc;
  chain_cfg.seed = math::splitmix64(seed ^ 0xd1b54a32d192ed03ULL);
  try {
    const auto target = sampler::make_target(prior.model, data, prior, false);
    const auto [samples, diag] = sampler::run_chains(*target, chain_cfg);
    for (int t = 0; t < T; ++t) {
      const auto s = sampler::summarize(samples, "se" + std::to_string(t + 1));
      rec.se.row(t) << s.median, s.q025, s.q975;
      const auto p = sampler::summarize(samples, "sp" + std::to_string(t + 1));
      rec.sp.row(t) << p.median, p.q025, p.q975;
    }
    rec.prev = sampler::summarize(samples, "prev");
    rec.min_ess = diag.min_ess;
    rec.max_rhat = diag.max_rhat;
    rec.divergences = diag.divergences;
    rec.wall_seconds = diag.wall_seconds;
  } catch (const std::runtime_error&) {
    rec.failed = true;
  }
  return rec;
}

// ---------------------------------------------------------------------------
// study loop and reporting

namespace {

struct CellKey {
  int dgm = 0;
  std::string model;
  std::string prior;
  int n = 0;

  std::string str() const {
    return "dgm=" + std::to_string(dgm) + "|model=" + model + "|prior=" + prior +
           "|N=" + std::to_string(n);
  }
  bool operator<(const CellKey& o) const {
    return std::tie(dgm, model, prior, n) < std::tie(o.dgm, o.model, o.prior, o.n);
  }
};

struct CellResult {
  CellKey key;
  long n_sim = 0;
  long n_failed = 0;
  bool degraded = false;
  metrics::MetricsAccumulator::CellStats stats;
};

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream ifs(path);
  if (!ifs) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(ifs, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Loads records.csv tolerantly: a malformed final line (torn write from a
// crash) is dropped and the file truncated to the valid prefix.
std::vector<std::string> load_record_lines(const fs::path& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) return lines;
  std::vector<std::string> body(lines.begin() + 1, lines.end());
  for (size_t i = 0; i < body.size(); ++i) {
    try {
      (void)SimRecord::from_csv_row(body[i]);
    } catch (const std::exception&) {
      if (i + 1 != body.size()) throw IoError("corrupt record at " + path.string() + " line " + std::to_string(i + 2));
      body.pop_back();
      std::ofstream ofs(path, std::ios::trunc);
      if (!ofs) throw IoError("cannot rewrite " + path.string());
      ofs << lines[0] << '\n';
      for (const auto& l : body) ofs << l << '\n';
      break;
    }
  }
  return body;
}

metrics::MetricsAccumulator make_accumulator(int dgm_id) {
  const auto spec = dgm::dgm_spec(dgm_id);
  return metrics::MetricsAccumulator(spec.true_se, spec.true_sp);
}

CellResult summarize_cell(const CellKey& key, const std::vector<SimRecord>& recs,
                          double max_failed_fraction) {
  CellResult out;
  out.key = key;
  auto acc = make_accumulator(key.dgm);
  for (const auto& r : recs) acc.add(r);
  out.n_sim = acc.n_sim();
  out.n_failed = acc.n_failed();
  const long total = out.n_sim + out.n_failed;
  out.degraded = total == 0 || out.n_sim < 2 ||
                 static_cast<double>(out.n_failed) > max_failed_fraction * static_cast<double>(total);
  if (out.n_sim >= 2) out.stats = acc.cell_stats();
  return out;
}

void write_summary_csv(const fs::path& path, const std::vector<CellResult>& cells) {
  std::ofstream ofs(path, std::ios::trunc);
  if (!ofs) throw IoError("cannot write " + path.string());
  ofs << "dgm,model,prior,N,n_sim,rmse_se,mcse_rmse_se,rmse_sp,bias_se,bias_sp,cvg_se,cvg_sp,"
         "width_se,width_sp\n";
  for (const auto& c : cells) {
    const auto& s = c.stats;
    ofs << c.key.dgm << ',' << c.key.model << ',' << math::csv_escape(c.key.prior) << ','
        << c.key.n << ',' << c.n_sim;
    // percent units, matching the study's reporting scale
    for (double v : {s.rmse_se, s.mcse_rmse_se, s.rmse_sp, s.bias_se, s.bias_sp, s.cvg_se,
                     s.cvg_sp, s.width_se, s.width_sp})
      ofs << ',' << math::fmt_g6(100.0 * v);
    ofs << '\n';
  }
}

void write_report(const fs::path& txt_path, const fs::path& csv_path,
                  const std::vector<CellResult>& cells) {
  std::ofstream txt(txt_path, std::ios::trunc);
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!txt || !csv) throw IoError("cannot write report files");

  txt << "model/prior comparison by total accuracy RMSE\n";
  txt << "rule: rmse_total = rmse_se + rmse_sp (percentage points, means across tests);\n";
  txt << "      mcse_total = sqrt(mcse_rmse_se^2 + mcse_rmse_sp^2); best group = every cell\n";
  txt << "      whose rmse_total +- 1.96*mcse_total interval overlaps the leader's interval\n";
  csv << "dgm,N,model,prior,n_sim,rmse_se,rmse_sp,rmse_total,mcse_total,group\n";

  // blocks over (dgm, N) in first-appearance order
  std::vector<std::pair<int, int>> blocks;
  for (const auto& c : cells) {
    const std::pair<int, int> b{c.key.dgm, c.key.n};
    if (std::find(blocks.begin(), blocks.end(), b) == blocks.end()) blocks.push_back(b);
  }
  for (const auto& [dgm_id, n] : blocks) {
    std::vector<const CellResult*> ok;
    std::vector<const CellResult*> bad;
    for (const auto& c : cells)
      if (c.key.dgm == dgm_id && c.key.n == n) (c.degraded ? bad : ok).push_back(&c);

    std::vector<int> group(ok.size(), 0);
    if (ok.size() >= 2) {
      std::vector<std::pair<double, double>> pts;
      for (const auto* c : ok) {
        const double total = 100.0 * (c->stats.rmse_se + c->stats.rmse_sp);
        const double mcse = 100.0 * std::sqrt(c->stats.mcse_rmse_se * c->stats.mcse_rmse_se +
                                              c->stats.mcse_rmse_sp * c->stats.mcse_rmse_sp);
        pts.emplace_back(total, mcse);
      }
      group = metrics::equivalence_groups(pts);
    }

    std::vector<size_t> order(ok.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return ok[a]->stats.rmse_se + ok[a]->stats.rmse_sp < ok[b]->stats.rmse_se + ok[b]->stats.rmse_sp;
    });

    txt << "\nDGM " << dgm_id << ", N=" << n << "\n";
    for (size_t i : order) {
      const auto* c = ok[i];
      const double rse = 100.0 * c->stats.rmse_se;
      const double rsp = 100.0 * c->stats.rmse_sp;
      const double total = rse + rsp;
      const double mcse = 100.0 * std::sqrt(c->stats.mcse_rmse_se * c->stats.mcse_rmse_se +
                                            c->stats.mcse_rmse_sp * c->stats.mcse_rmse_sp);
      const char* g = group[i] == 0 ? "best " : "worse";
      txt << "  " << g << "  " << c->key.model << "/" << c->key.prior << "  rmse_total="
          << math::fmt_g6(total) << " (se " << math::fmt_g6(rse) << ", sp " << math::fmt_g6(rsp)
          << ") mcse " << math::fmt_g6(mcse) << "  n_sim=" << c->n_sim << "\n";
      csv << dgm_id << ',' << n << ',' << c->key.model << ',' << math::csv_escape(c->key.prior)
          << ',' << c->n_sim << ',' << math::fmt_g6(rse) << ',' << math::fmt_g6(rsp) << ',' << math::fmt_g6(total)
          << ',' << math::fmt_g6(mcse) << ',' << (group[i] == 0 ? "best" : "worse") << '\n';
    }
    for (const auto* c : bad) {
      txt << "  degraded  " << c->key.model << "/" << c->key.prior << "  (" << c->n_failed
          << " failed of " << c->n_failed + c->n_sim << ")\n";
      csv << dgm_id << ',' << n << ',' << c->key.model << ',' << math::csv_escape(c->key.prior)
          << ',' << c->n_sim << ",,,,," << "degraded" << '\n';
    }
  }
}

void render_from_records(const fs::path& dir, const std::vector<SimRecord>& records,
                         double max_failed_fraction) {
  if (records.empty()) throw IoError("no records to report in " + dir.string());
  std::vector<CellKey> order;
  std::map<std::string, std::vector<SimRecord>> by_cell;
  for (const auto& r : records) {
    const CellKey key{r.dgm, r.model, r.prior, r.n_subjects};
    auto [it, inserted] = by_cell.try_emplace(key.str());
    if (inserted) order.push_back(key);
    it->second.push_back(r);
  }
  std::vector<CellResult> cells;
  for (const auto& key : order)
    cells.push_back(summarize_cell(key, by_cell.at(key.str()), max_failed_fraction));
  write_summary_csv(dir / "summary.csv", cells);
  write_report(dir / "report.txt", dir / "report.csv", cells);
}

}  // namespace

int run_study(const StudyConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  const fs::path rec_path = fs::path(cfg.out_dir) / "records.csv";

  // resume state: (cell key, replicate) -> raw csv line
  std::map<std::pair<std::string, int>, std::string> existing;
  if (fs::exists(rec_path)) {
    for (const auto& line : load_record_lines(rec_path)) {
      const SimRecord r = SimRecord::from_csv_row(line);
      existing[{CellKey{r.dgm, r.model, r.prior, r.n_subjects}.str(), r.replicate}] = line;
    }
  }

  const bool fresh = !fs::exists(rec_path) || fs::file_size(rec_path) == 0;
  std::ofstream rec_out(rec_path, std::ios::app);
  if (!rec_out) throw IoError("cannot open " + rec_path.string() + " for append");
  if (fresh) rec_out << SimRecord::csv_header(dgm::dgm_spec(cfg.dgms.front()).n_tests()) << '\n';

  bool any_degraded = false;
  std::vector<SimRecord> ingested;

  for (int dgm_id : cfg.dgms) {
    for (int n : cfg.sample_sizes) {
      for (const ModelKind model : cfg.models) {
        std::vector<PriorSet> sets = priors::builtin_prior_sets(dgm_id, model);
        for (const auto& extra : cfg.extra_prior_sets) {
          if (extra.model != model) continue;
          const auto it = std::find_if(sets.begin(), sets.end(),
                                       [&](const PriorSet& s) { return s.name == extra.name; });
          if (it != sets.end())
            *it = extra;
          else
            sets.push_back(extra);
        }
        if (!cfg.prior_names.empty()) {
          std::erase_if(sets, [&](const PriorSet& s) {
            return std::find(cfg.prior_names.begin(), cfg.prior_names.end(), s.name) ==
                   cfg.prior_names.end();
          });
        }

        for (const auto& set : sets) {
          const CellKey key{dgm_id, likelihood::to_string(model), set.name, n};
          const std::string cell_key = key.str();
          auto acc = make_accumulator(dgm_id);
          std::vector<SimRecord> cell_records;
          bool stopped = false;
          const int wave = std::max(1, cfg.workers);

          for (long r = 0; r < cfg.nsim_max && !stopped;) {
            const long r_end = std::min(r + wave, cfg.nsim_max);
            std::vector<std::string> lines(static_cast<size_t>(r_end - r));
            std::vector<std::thread> pool;
            for (long i = r; i < r_end; ++i) {
              const auto it = existing.find({cell_key, static_cast<int>(i)});
              if (it != existing.end()) {
                lines[static_cast<size_t>(i - r)] = it->second;
                continue;
              }
              pool.emplace_back([&, i] {
                const SimRecord rec = run_replicate(dgm_id, n, set, cfg.hmc,
                                                    replicate_seed(cfg.master_seed, cell_key, i),
                                                    static_cast<int>(i));
                lines[static_cast<size_t>(i - r)] = rec.csv_row();
              });
            }
            for (auto& t : pool) t.join();

            for (long i = r; i < r_end; ++i) {
              const std::string& line = lines[static_cast<size_t>(i - r)];
              if (existing.find({cell_key, static_cast<int>(i)}) == existing.end()) {
                rec_out << line << '\n';
                rec_out.flush();
                if (!rec_out) throw IoError("write failure on " + rec_path.string());
              }
              const SimRecord rec = SimRecord::from_csv_row(line);
              acc.add(rec);
              cell_records.push_back(rec);
              ingested.push_back(rec);
              if (metrics::adaptive_stop(acc, cfg.mcse_threshold,
                                         std::min(cfg.nsim_min, cfg.nsim_max))) {
                stopped = true;  // later wave members are speculative; discard
                break;
              }
            }
            r = r_end;
          }

          const auto cell = summarize_cell(key, cell_records, cfg.max_failed_fraction);
          any_degraded = any_degraded || cell.degraded;
        }
      }
    }
  }

  render_from_records(cfg.out_dir, ingested, cfg.max_failed_fraction);
  return any_degraded ? 1 : 0;
}

void render_report(const std::string& dir) {
  const fs::path rec_path = fs::path(dir) / "records.csv";
  if (!fs::exists(rec_path)) throw IoError("no records.csv in " + dir);
  std::vector<SimRecord> records;
  for (const auto& line : load_record_lines(rec_path)) records.push_back(SimRecord::from_csv_row(line));
  render_from_records(dir, records, 0.20);
}

// ---------------------------------------------------------------------------
// dataset CSV

void dataset_to_csv(const likelihood::BinaryDataset& data, const std::string& path,
                    const std::vector<int>* classes) {
  data.validate();
  if (classes && static_cast<int>(classes->size()) != data.n_subjects)
    throw std::invalid_argument("dataset_to_csv: class column length mismatch");
  std::ofstream ofs(path, std::ios::trunc);
  if (!ofs) throw IoError("cannot write " + path);
  ofs << "subject";
  for (int t = 1; t <= data.n_tests; ++t) ofs << ",t" << t;
  if (classes) ofs << ",class";
  ofs << '\n';
  for (int i = 0; i < data.n_subjects; ++i) {
    ofs << (i + 1);
    for (int t = 0; t < data.n_tests; ++t) ofs << ',' << data.y(i, t);
    if (classes) ofs << ',' << (*classes)[static_cast<size_t>(i)];
    ofs << '\n';
  }
}

likelihood::BinaryDataset dataset_from_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) throw IoError("dataset file has no rows: " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(lines[0]);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  if (header.empty() || header[0] != "subject") throw IoError("dataset header must start with 'subject': " + path);
  bool has_class = !header.empty() && header.back() == "class";
  const int T = static_cast<int>(header.size()) - 1 - (has_class ? 1 : 0);
  if (T < 2) throw IoError("dataset needs at least two test columns: " + path);

  likelihood::BinaryDataset data;
  data.n_subjects = static_cast<int>(lines.size()) - 1;
  data.n_tests = T;
  data.y.resize(data.n_subjects, T);
  for (int i = 0; i < data.n_subjects; ++i) {
    std::stringstream ss(lines[static_cast<size_t>(i) + 1]);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (static_cast<int>(fields.size()) < T + 1) throw IoError("short dataset row in " + path);
    for (int t = 0; t < T; ++t) {
      const int v = std::stoi(fields[static_cast<size_t>(t) + 1]);
      if (v != 0 && v != 1) throw IoError("dataset entries must be 0/1 in " + path);
      data.y(i, t) = v;
    }
  }
  data.validate();
  return data;
}

}  // namespace lcmvp::runner
