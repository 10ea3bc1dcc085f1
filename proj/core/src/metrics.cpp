#include "lcmvp/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lcmvp/math.hpp"

namespace lcmvp::metrics {

std::string SimRecord::csv_header(int n_tests) {
  std::ostringstream os;
  os << "dgm,model,prior,N,replicate,seed,failed";
  for (int t = 1; t <= n_tests; ++t)
    os << ",se" << t << "_med,se" << t << "_lo,se" << t << "_hi";
  for (int t = 1; t <= n_tests; ++t)
    os << ",sp" << t << "_med,sp" << t << "_lo,sp" << t << "_hi";
  os << ",prev_med,prev_lo,prev_hi,min_ess,max_rhat,divergences";
  return os.str();
}

std::string SimRecord::csv_row() const {
  std::ostringstream os;
  os << dgm << ',' << math::csv_escape(model) << ',' << math::csv_escape(prior) << ','
     << n_subjects << ',' << replicate << ',' << seed << ',' << (failed ? 1 : 0);
  auto put = [&os](double v) { os << ',' << math::fmt_g6(v); };
  for (int t = 0; t < n_tests(); ++t)
    for (int k = 0; k < 3; ++k) put(se(t, k));
  for (int t = 0; t < n_tests(); ++t)
    for (int k = 0; k < 3; ++k) put(sp(t, k));
  put(prev.median);
  put(prev.q025);
  put(prev.q975);
  put(min_ess);
  put(max_rhat);
  os << ',' << divergences;
  return os.str();
}

SimRecord SimRecord::from_csv_row(const std::string& line) {
  const std::vector<std::string> f = math::csv_split(line);
  // 7 leading fields, 6T quantile fields, 3 prevalence, 3 diagnostics
  if (f.size() < 7 + 6 + 3 + 3 || (f.size() - 13) % 6 != 0)
    throw std::invalid_argument("SimRecord: malformed record row: " + line);
  const int T = static_cast<int>((f.size() - 13) / 6);
  SimRecord r;
  size_t i = 0;
  r.dgm = std::stoi(f[i++]);
  r.model = f[i++];
  r.prior = f[i++];
  r.n_subjects = std::stoi(f[i++]);
  r.replicate = std::stoi(f[i++]);
  r.seed = std::stoull(f[i++]);
  r.failed = std::stoi(f[i++]) != 0;
  r.se.resize(T, 3);
  r.sp.resize(T, 3);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 3; ++k) r.se(t, k) = std::stod(f[i++]);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 3; ++k) r.sp(t, k) = std::stod(f[i++]);
  r.prev.median = std::stod(f[i++]);
  r.prev.q025 = std::stod(f[i++]);
  r.prev.q975 = std::stod(f[i++]);
  r.min_ess = std::stod(f[i++]);
  r.max_rhat = std::stod(f[i++]);
  r.divergences = std::stol(f[i++]);
  return r;
}

// ---------------------------------------------------------------------------

EstStats rmse_with_mcse(const Eigen::VectorXd& estimates, double truth) {
  const int n = static_cast<int>(estimates.size());
  if (n < 2) throw std::invalid_argument("rmse_with_mcse: n >= 2 required");
  const double mse = (estimates.array() - truth).square().mean();
  const double rmse = std::sqrt(mse);
  return {rmse, rmse / std::sqrt(2.0 * n)};
}

EstStats bias(const Eigen::VectorXd& estimates, double truth) {
  const int n = static_cast<int>(estimates.size());
  if (n < 2) throw std::invalid_argument("bias: n >= 2 required");
  const double m = estimates.mean();
  const double var = (estimates.array() - m).square().sum() / (n - 1.0);
  return {m - truth, std::sqrt(var / n)};
}

EstStats coverage(const Eigen::MatrixXd& intervals, double truth) {
  const int n = static_cast<int>(intervals.rows());
  if (n < 2 || intervals.cols() != 2) throw std::invalid_argument("coverage: need n x 2 intervals, n >= 2");
  double hits = 0.0;
  for (int i = 0; i < n; ++i)
    if (intervals(i, 0) <= truth && truth <= intervals(i, 1)) hits += 1.0;
  const double rate = hits / n;
  return {rate, std::sqrt(rate * (1.0 - rate) / n)};
}

double width(const Eigen::MatrixXd& intervals) {
  if (intervals.rows() < 1 || intervals.cols() != 2) throw std::invalid_argument("width: need n x 2 intervals");
  return (intervals.col(1) - intervals.col(0)).mean();
}

// ---------------------------------------------------------------------------

MetricsAccumulator::MetricsAccumulator(Eigen::VectorXd true_se, Eigen::VectorXd true_sp)
    : true_se_(std::move(true_se)), true_sp_(std::move(true_sp)) {
  if (true_se_.size() != true_sp_.size() || true_se_.size() < 1)
    throw std::invalid_argument("MetricsAccumulator: bad truth vectors");
  se_.resize(static_cast<size_t>(true_se_.size()));
  sp_.resize(static_cast<size_t>(true_sp_.size()));
}

void MetricsAccumulator::add(const SimRecord& rec) {
  if (rec.failed) {
    ++n_failed_;
    return;
  }
  if (rec.n_tests() != n_tests()) throw std::invalid_argument("MetricsAccumulator: test-count mismatch");
  for (int t = 0; t < n_tests(); ++t) {
    const double ese = rec.se(t, 0) - true_se_[t];
    se_[static_cast<size_t>(t)].sum_err += ese;
    se_[static_cast<size_t>(t)].sumsq_err += ese * ese;
    se_[static_cast<size_t>(t)].hits +=
        (rec.se(t, 1) <= true_se_[t] && true_se_[t] <= rec.se(t, 2)) ? 1.0 : 0.0;
    se_[static_cast<size_t>(t)].sum_width += rec.se(t, 2) - rec.se(t, 1);

    const double esp = rec.sp(t, 0) - true_sp_[t];
    sp_[static_cast<size_t>(t)].sum_err += esp;
    sp_[static_cast<size_t>(t)].sumsq_err += esp * esp;
    sp_[static_cast<size_t>(t)].hits +=
        (rec.sp(t, 1) <= true_sp_[t] && true_sp_[t] <= rec.sp(t, 2)) ? 1.0 : 0.0;
    sp_[static_cast<size_t>(t)].sum_width += rec.sp(t, 2) - rec.sp(t, 1);
  }
  ++n_;
}

namespace {

EstStats rmse_of(const double sumsq, long n) {
  const double rmse = std::sqrt(sumsq / n);
  return {rmse, rmse / std::sqrt(2.0 * n)};
}

EstStats bias_of(double sum, double sumsq, long n) {
  const double m = sum / n;
  const double var = n > 1 ? (sumsq - sum * sum / n) / (n - 1.0) : 0.0;
  return {m, std::sqrt(std::max(var, 0.0) / n)};
}

EstStats coverage_of(double hits, long n) {
  const double rate = hits / n;
  return {rate, std::sqrt(rate * (1.0 - rate) / n)};
}

}  // namespace

EstStats MetricsAccumulator::rmse_se(int t) const { return rmse_of(se_[static_cast<size_t>(t)].sumsq_err, n_); }
EstStats MetricsAccumulator::rmse_sp(int t) const { return rmse_of(sp_[static_cast<size_t>(t)].sumsq_err, n_); }
EstStats MetricsAccumulator::bias_se(int t) const {
  return bias_of(se_[static_cast<size_t>(t)].sum_err, se_[static_cast<size_t>(t)].sumsq_err, n_);
}
EstStats MetricsAccumulator::bias_sp(int t) const {
  return bias_of(sp_[static_cast<size_t>(t)].sum_err, sp_[static_cast<size_t>(t)].sumsq_err, n_);
}
EstStats MetricsAccumulator::coverage_se(int t) const { return coverage_of(se_[static_cast<size_t>(t)].hits, n_); }
EstStats MetricsAccumulator::coverage_sp(int t) const { return coverage_of(sp_[static_cast<size_t>(t)].hits, n_); }
double MetricsAccumulator::width_se(int t) const { return se_[static_cast<size_t>(t)].sum_width / n_; }
double MetricsAccumulator::width_sp(int t) const { return sp_[static_cast<size_t>(t)].sum_width / n_; }

double MetricsAccumulator::mean_mcse_rmse_se() const {
  if (n_ < 2) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (int t = 0; t < n_tests(); ++t) s += rmse_se(t).mcse;
  return s / n_tests();
}

MetricsAccumulator::CellStats MetricsAccumulator::cell_stats() const {
  if (n_ < 2) throw std::logic_error("MetricsAccumulator: need >= 2 successful fits");
  CellStats c;
  const int T = n_tests();
  for (int t = 0; t < T; ++t) {
    c.rmse_se += rmse_se(t).value;
    c.mcse_rmse_se += rmse_se(t).mcse;
    c.rmse_sp += rmse_sp(t).value;
    c.mcse_rmse_sp += rmse_sp(t).mcse;
    c.bias_se += bias_se(t).value;
    c.bias_sp += bias_sp(t).value;
    c.cvg_se += coverage_se(t).value;
    c.cvg_sp += coverage_sp(t).value;
    c.width_se += width_se(t);
    c.width_sp += width_sp(t);
  }
  c.rmse_se /= T;
  c.mcse_rmse_se /= T;
  c.rmse_sp /= T;
  c.mcse_rmse_sp /= T;
  c.bias_se /= T;
  c.bias_sp /= T;
  c.cvg_se /= T;
  c.cvg_sp /= T;
  c.width_se /= T;
  c.width_sp /= T;
  return c;
}

bool adaptive_stop(const MetricsAccumulator& acc, double threshold, long nsim_min) {
  if (acc.n_sim() < nsim_min) return false;
  return acc.mean_mcse_rmse_se() < threshold;
}

std::vector<int> equivalence_groups(const std::vector<std::pair<double, double>>& cells) {
  if (cells.size() < 2) throw std::invalid_argument("equivalence_groups: >= 2 cells required");
  size_t leader = 0;
  for (size_t i = 1; i < cells.size(); ++i)
    if (cells[i].first < cells[leader].first) leader = i;
  std::vector<int> group(cells.size(), 1);
  for (size_t i = 0; i < cells.size(); ++i) {
    const double gap = std::abs(cells[i].first - cells[leader].first);
    if (gap <= 1.96 * (cells[i].second + cells[leader].second)) group[i] = 0;
  }
  return group;
}

}  // namespace lcmvp::metrics
