#include "lcmvp/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lcmvp/math.hpp"

namespace lcmvp::sampler {

namespace {

const double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void HmcConfig::validate() const {
  if (n_chains < 1) throw std::invalid_argument("HmcConfig: n_chains >= 1 required");
  if (warmup < 1 || sampling < 1) throw std::invalid_argument("HmcConfig: iteration counts must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("HmcConfig: target_accept must be in (0,1)");
  if (max_steps < 1) throw std::invalid_argument("HmcConfig: max_steps >= 1 required");
  if (jitter < 0.0 || jitter >= 1.0) throw std::invalid_argument("HmcConfig: jitter must be in [0,1)");
}

int PosteriorSamples::column_index(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("PosteriorSamples: unknown quantity '" + name + "'");
}

Eigen::MatrixXd PosteriorSamples::chain_matrix(int column) const {
  Eigen::MatrixXd m(n_iter, n_chains);
  for (int c = 0; c < n_chains; ++c)
    for (int i = 0; i < n_iter; ++i) m(i, c) = derived(c * n_iter + i, column);
  return m;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const Eigen::VectorXd& position,
                                                     const Eigen::VectorXd& momentum, double eps,
                                                     const GradFn& grad_fn) {
  Eigen::VectorXd p = momentum + 0.5 * eps * grad_fn(position);
  Eigen::VectorXd q = position + eps * p;
  p += 0.5 * eps * grad_fn(q);
  return {std::move(q), std::move(p)};
}

// ---------------------------------------------------------------------------
// adaptation machinery

namespace {

// Nesterov dual averaging of log step size toward a target acceptance rate.
struct DualAveraging {
  double target = 0.8;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double mu = 0.0, s_bar = 0.0, x = 0.0, x_bar = 0.0;
  long counter = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    s_bar = 0.0;
    x = std::log(eps);
    x_bar = std::log(eps);
    counter = 0;
  }
  double update(double accept_stat) {
    ++counter;
    accept_stat = std::min(accept_stat, 1.0);
    const double eta = 1.0 / (counter + t0);
    s_bar = (1.0 - eta) * s_bar + eta * (target - accept_stat);
    x = mu - s_bar * std::sqrt(static_cast<double>(counter)) / gamma;
    const double w = std::pow(static_cast<double>(counter), -kappa);
    x_bar = (1.0 - w) * x_bar + w * x;
    return std::exp(x);
  }
  double adapted() const { return std::exp(x_bar); }
};

// Warmup layout: fast buffer (step size only), doubling covariance windows,
// terminal fast buffer. Small warmups shrink the buffers proportionally.
struct AdaptSchedule {
  int init_buffer = 0;
  int term_buffer = 0;
  std::vector<int> window_ends;  // exclusive iteration indices of slow-window ends

  explicit AdaptSchedule(int warmup) {
    int init_b = 75, term_b = 50, base = 25;
    if (warmup < init_b + term_b + base) {
      init_b = std::max(1, static_cast<int>(std::lround(0.15 * warmup)));
      term_b = std::max(1, static_cast<int>(std::lround(0.10 * warmup)));
      base = std::max(1, warmup - init_b - term_b);
    }
    init_buffer = init_b;
    term_buffer = term_b;
    const int slow_end = warmup - term_b;
    int cur = init_b;
    int size = base;
    while (cur < slow_end) {
      int next = cur + size;
      if (next >= slow_end || next + 2 * size > slow_end) next = slow_end;
      window_ends.push_back(next);
      cur = next;
      size *= 2;
    }
  }
};

struct ChainState {
  Eigen::VectorXd q, grad;
  double value = 0.0;
};

class ChainRunner {
 public:
  ChainRunner(const Target& target, const HmcConfig& cfg, std::uint64_t chain_seed)
      : target_(target), cfg_(cfg), rng_(chain_seed), dim_(target.dim()) {
    inv_mass_ = Eigen::VectorXd::Ones(dim_);
    sqrt_mass_ = Eigen::VectorXd::Ones(dim_);
    da_.target = cfg.target_accept;
    state_.q = target.initial_point();
    state_.grad.resize(dim_);
    state_.value = target.value_grad(state_.q, state_.grad);
    if (!std::isfinite(state_.value))
      throw std::runtime_error("run_chains: non-finite log density at the initial point");
  }

  void warmup() {
    eps_ = find_reasonable_epsilon();
    da_.restart(eps_);
    const AdaptSchedule sched(cfg_.warmup);
    Eigen::VectorXd wf_mean = Eigen::VectorXd::Zero(dim_);
    Eigen::VectorXd wf_m2 = Eigen::VectorXd::Zero(dim_);
    long wf_n = 0;
    size_t window = 0;
    for (int it = 0; it < cfg_.warmup; ++it) {
      const double astat = transition();
      eps_ = da_.update(astat);
      const bool in_slow = it >= sched.init_buffer && it < cfg_.warmup - sched.term_buffer;
      if (in_slow) {
        ++wf_n;
        const Eigen::VectorXd delta = state_.q - wf_mean;
        wf_mean += delta / static_cast<double>(wf_n);
        wf_m2 += delta.cwiseProduct(state_.q - wf_mean);
      }
      if (window < sched.window_ends.size() && it + 1 == sched.window_ends[window]) {
        if (wf_n >= 2) {
          const double n = static_cast<double>(wf_n);
          const Eigen::VectorXd var = wf_m2 / (n - 1.0);
          const Eigen::VectorXd reg =
              (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0)) * Eigen::ArrayXd::Ones(dim_);
          // kinetic metric M = 1/var so the standardized step is uniform
          // across coordinates; ratio tracks how much the new scale estimate
          // widens the previous standardization and stretches the trajectory
          double ratio = 1.0;
          for (int i = 0; i < dim_; ++i) {
            const double sd = std::sqrt(reg[i]);
            ratio = std::max(ratio, sd * sqrt_mass_[i]);
            sqrt_mass_[i] = 1.0 / sd;
            inv_mass_[i] = reg[i];
          }
          lambda_ = 0.5 * M_PI * std::clamp(ratio, 1.0, 4.0);
        }
        wf_mean.setZero();
        wf_m2.setZero();
        wf_n = 0;
        ++window;
        eps_ = find_reasonable_epsilon();
        da_.restart(eps_);
      }
    }
    eps_ = da_.adapted();
  }

  // returns (derived draws, divergence flags)
  void sample(Eigen::MatrixXd& derived_rows, Eigen::MatrixXd* draw_rows,
              std::vector<std::uint8_t>& div_flags) {
    for (int it = 0; it < cfg_.sampling; ++it) {
      bool div = false;
      transition(&div);
      derived_rows.row(it) = target_.derived(state_.q).transpose();
      if (draw_rows) draw_rows->row(it) = state_.q.transpose();
      div_flags[static_cast<size_t>(it)] = div ? 1 : 0;
    }
  }

  double step_size() const { return eps_; }
  Eigen::VectorXd mass_diag() const { return sqrt_mass_.cwiseProduct(sqrt_mass_); }

 private:
  Eigen::VectorXd sample_momentum() {
    Eigen::VectorXd p(dim_);
    for (int i = 0; i < dim_; ++i) p[i] = sqrt_mass_[i] * rng_.normal();
    return p;
  }

  double kinetic(const Eigen::VectorXd& p) const {
    return 0.5 * p.cwiseProduct(p).dot(inv_mass_);
  }

  int trajectory_steps() {
    const double base = std::clamp(std::lround(lambda_ / eps_), 1L,
                                   static_cast<long>(cfg_.max_steps));
    const double jl = base * (1.0 + cfg_.jitter * (2.0 * rng_.uniform() - 1.0));
    return static_cast<int>(std::clamp(std::lround(jl), 1L, static_cast<long>(cfg_.max_steps)));
  }

  // One Metropolis-adjusted trajectory from the cached state. Returns the
  // acceptance statistic; sets *divergent when |dH| blows up or a non-finite
  // evaluation is hit.
  double transition(bool* divergent = nullptr) {
    const int L = trajectory_steps();
    Eigen::VectorXd p = sample_momentum();
    const double h0 = -state_.value + kinetic(p);
    Eigen::VectorXd q = state_.q;
    Eigen::VectorXd g = state_.grad;
    double v = state_.value;
    bool bad = false;
    for (int l = 0; l < L; ++l) {
      p += 0.5 * eps_ * g;
      q += eps_ * inv_mass_.cwiseProduct(p);
      v = target_.value_grad(q, g);
      if (!std::isfinite(v)) {
        bad = true;
        break;
      }
      p += 0.5 * eps_ * g;
    }
    double astat = 0.0;
    if (!bad) {
      const double h1 = -v + kinetic(p);
      const double dh = h1 - h0;
      if (!std::isfinite(dh) || std::abs(dh) > 1000.0) {
        bad = true;
      } else {
        astat = std::min(1.0, std::exp(-dh));
        if (rng_.uniform() < astat) {
          state_.q = std::move(q);
          state_.grad = std::move(g);
          state_.value = v;
        }
      }
    }
    if (divergent) *divergent = bad;
    return astat;
  }

  // Doubles or halves a unit step until the one-step acceptance crosses 1/2.
  double find_reasonable_epsilon() {
    double eps = 1.0;
    const Eigen::VectorXd p0 = sample_momentum();
    const double h0 = -state_.value + kinetic(p0);
    auto accept_at = [&](double e) {
      Eigen::VectorXd q = state_.q;
      Eigen::VectorXd p = p0;
      Eigen::VectorXd g = state_.grad;
      p += 0.5 * e * g;
      q += e * inv_mass_.cwiseProduct(p);
      Eigen::VectorXd g1(dim_);
      const double v = target_.value_grad(q, g1);
      if (!std::isfinite(v)) return 0.0;
      p += 0.5 * e * g1;
      const double h1 = -v + kinetic(p);
      return std::isfinite(h1) ? std::exp(h0 - h1) : 0.0;
    };
    double a = accept_at(eps);
    const bool grow = a > 0.5;
    for (int i = 0; i < 100; ++i) {
      if (grow) {
        if (a <= 0.5 || eps > 1e3) break;
        eps *= 2.0;
      } else {
        if (a >= 0.5 || eps < 1e-10) break;
        eps *= 0.5;
      }
      a = accept_at(eps);
    }
    return std::clamp(eps, 1e-10, 1e3);
  }

  const Target& target_;
  const HmcConfig& cfg_;
  math::Rng rng_;
  int dim_;
  ChainState state_;
  DualAveraging da_;
  Eigen::VectorXd inv_mass_, sqrt_mass_;
  double eps_ = 1.0;
  double lambda_ = 0.5 * M_PI;  // trajectory length in integration time
};

}  // namespace

std::pair<PosteriorSamples, Diagnostics> run_chains(const Target& target, const HmcConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int dim = target.dim();
  const auto names = target.derived_names();
  const int K = static_cast<int>(names.size());

  PosteriorSamples out;
  out.n_chains = cfg.n_chains;
  out.n_iter = cfg.sampling;
  out.names = names;
  out.derived.resize(cfg.n_chains * cfg.sampling, K);
  out.divergent.assign(static_cast<size_t>(cfg.n_chains * cfg.sampling), 0);
  out.step_size.resize(cfg.n_chains);
  out.mass_diag.resize(cfg.n_chains, dim);
  if (cfg.store_draws) out.draws.resize(cfg.n_chains * cfg.sampling, dim);

  long n_div = 0;
  for (int c = 0; c < cfg.n_chains; ++c) {
    ChainRunner runner(target, cfg,
                       math::splitmix64(cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(c + 1)));
    runner.warmup();
    Eigen::MatrixXd derived_rows(cfg.sampling, K);
    Eigen::MatrixXd draw_rows;
    if (cfg.store_draws) draw_rows.resize(cfg.sampling, dim);
    std::vector<std::uint8_t> div(static_cast<size_t>(cfg.sampling), 0);
    runner.sample(derived_rows, cfg.store_draws ? &draw_rows : nullptr, div);
    out.derived.middleRows(c * cfg.sampling, cfg.sampling) = derived_rows;
    if (cfg.store_draws) out.draws.middleRows(c * cfg.sampling, cfg.sampling) = draw_rows;
    for (int i = 0; i < cfg.sampling; ++i) {
      out.divergent[static_cast<size_t>(c * cfg.sampling + i)] = div[static_cast<size_t>(i)];
      n_div += div[static_cast<size_t>(i)];
    }
    out.step_size[c] = runner.step_size();
    out.mass_diag.row(c) = runner.mass_diag().transpose();
  }
  if (2 * n_div > cfg.n_chains * cfg.sampling)
    throw std::runtime_error("run_chains: more than half of sampling draws diverged");

  Diagnostics diag;
  diag.names = names;
  diag.ess.resize(K);
  diag.rhat.resize(K);
  diag.divergences = n_div;
  diag.min_ess = kInf;
  diag.max_rhat = 0.0;
  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd m = out.chain_matrix(k);
    diag.ess[k] = ess(m);
    diag.rhat[k] = split_rhat(m);
    diag.min_ess = std::min(diag.min_ess, diag.ess[k]);
    diag.max_rhat = std::max(diag.max_rhat, diag.rhat[k]);
  }
  diag.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  diag.seconds_to_ess1000 =
      diag.min_ess > 0.0 ? diag.wall_seconds * 1000.0 / diag.min_ess : kInf;
  return {std::move(out), std::move(diag)};
}

// ---------------------------------------------------------------------------
// diagnostics

namespace {

// biased (1/n) autocovariance of one column at the given lag
double autocov(const Eigen::VectorXd& x, double mean, int lag) {
  const int n = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / n;
}

}  // namespace

double ess(const Eigen::MatrixXd& draws) {
  const int n = static_cast<int>(draws.rows());
  const int M = static_cast<int>(draws.cols());
  if (n < 4 || M < 1) throw std::invalid_argument("ess: need >= 4 draws per chain");
  const double total = static_cast<double>(n) * M;

  Eigen::VectorXd means(M), vars(M);
  for (int c = 0; c < M; ++c) {
    means[c] = draws.col(c).mean();
    vars[c] = autocov(draws.col(c), means[c], 0) * n / (n - 1.0);
  }
  const double mean_var = vars.mean();
  double var_plus = mean_var * (n - 1.0) / n;
  if (M > 1) {
    const double gm = means.mean();
    var_plus += (means.array() - gm).square().sum() / (M - 1.0);
  }
  if (!(var_plus > 0.0) || !std::isfinite(var_plus)) return total;

  auto rho = [&](int lag) {
    double acov = 0.0;
    for (int c = 0; c < M; ++c) acov += autocov(draws.col(c), means[c], lag);
    acov /= M;
    return 1.0 - (mean_var - acov) / var_plus;
  };

  // Geyer initial monotone positive sequence over lag pairs
  double tau = -1.0;
  double prev_pair = kInf;
  for (int k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1e-12);
  return std::min(total / tau, total);
}

double ess(const Eigen::VectorXd& series) {
  return ess(Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(series.data(), series.size(), 1)));
}

double split_rhat(const Eigen::MatrixXd& draws) {
  const int n = static_cast<int>(draws.rows());
  const int M = static_cast<int>(draws.cols());
  if (n < 4 || M < 1) throw std::invalid_argument("split_rhat: need >= 4 draws per chain");
  const int h = n / 2;
  const int M2 = 2 * M;
  Eigen::VectorXd means(M2), vars(M2);
  for (int c = 0; c < M; ++c) {
    const Eigen::VectorXd a = draws.col(c).head(h);
    const Eigen::VectorXd b = draws.col(c).tail(h);
    means[2 * c] = a.mean();
    means[2 * c + 1] = b.mean();
    vars[2 * c] = (a.array() - means[2 * c]).square().sum() / (h - 1.0);
    vars[2 * c + 1] = (b.array() - means[2 * c + 1]).square().sum() / (h - 1.0);
  }
  const double W = vars.mean();
  if (!(W > 0.0) || !std::isfinite(W)) return 1.0;
  const double gm = means.mean();
  const double B_over_n = (means.array() - gm).square().sum() / (M2 - 1.0);
  const double var_plus = W * (h - 1.0) / h + B_over_n;
  return std::sqrt(var_plus / W);
}

Summary quantile_summary(const Eigen::VectorXd& draws) {
  const int n = static_cast<int>(draws.size());
  if (n < 1) throw std::invalid_argument("quantile_summary: empty input");
  std::vector<double> v(draws.data(), draws.data() + n);
  std::sort(v.begin(), v.end());
  auto q = [&](double prob) {
    const double hpos = prob * (n - 1);
    const int lo = static_cast<int>(hpos);
    const int hi = std::min(lo + 1, n - 1);
    return v[static_cast<size_t>(lo)] + (hpos - lo) * (v[static_cast<size_t>(hi)] - v[static_cast<size_t>(lo)]);
  };
  return Summary{q(0.5), q(0.025), q(0.975)};
}

Summary summarize(const PosteriorSamples& samples, const std::string& quantity) {
  const int col = samples.column_index(quantity);
  return quantile_summary(samples.derived.col(col));
}

}  // namespace lcmvp::sampler
