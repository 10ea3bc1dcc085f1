#include <benchmark/benchmark.h>

#include "lcmvp/corrconstrain.hpp"
#include "lcmvp/dgm.hpp"
#include "lcmvp/likelihood.hpp"
#include "lcmvp/math.hpp"
#include "lcmvp/sampler.hpp"

using namespace lcmvp;

namespace {

struct MvpFixture {
  likelihood::BinaryDataset data;
  corrconstrain::CorrBounds bounds1, bounds2;
  Eigen::VectorXd x;

  explicit MvpFixture(int n)
      : bounds1(corrconstrain::CorrBounds::positive_bounds(5)),
        bounds2(corrconstrain::CorrBounds::positive_bounds(5)) {
    math::Rng rng(7);
    data = dgm::simulate_dataset(dgm::dgm_spec(2), n, rng);
    x.resize(likelihood::mvp_dim(5, n));
    for (int k = 0; k < x.size(); ++k) x[k] = 0.3 * rng.normal();
  }
};

void bm_mvp_value(benchmark::State& state) {
  MvpFixture f(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        likelihood::mvp_value_grad(f.x, f.bounds1, f.bounds2, f.data, true, nullptr));
}
BENCHMARK(bm_mvp_value)->Arg(300)->Arg(3000)->Unit(benchmark::kMillisecond);

void bm_mvp_value_grad(benchmark::State& state) {
  MvpFixture f(static_cast<int>(state.range(0)));
  Eigen::VectorXd grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        likelihood::mvp_value_grad(f.x, f.bounds1, f.bounds2, f.data, true, &grad));
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(bm_mvp_value_grad)->Arg(300)->Arg(3000)->Unit(benchmark::kMillisecond);

void bm_chol_from_raw(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  math::Rng rng(11);
  Eigen::VectorXd raw(corrconstrain::n_raw(T));
  for (int k = 0; k < raw.size(); ++k) raw[k] = 0.5 * rng.normal();
  const auto bounds = corrconstrain::CorrBounds::positive_bounds(T);
  for (auto _ : state)
    benchmark::DoNotOptimize(corrconstrain::chol_from_raw(raw, bounds));
}
BENCHMARK(bm_chol_from_raw)->Arg(5)->Arg(10);

void bm_chol_with_derivs(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  math::Rng rng(11);
  Eigen::VectorXd raw(corrconstrain::n_raw(T));
  for (int k = 0; k < raw.size(); ++k) raw[k] = 0.5 * rng.normal();
  const auto bounds = corrconstrain::CorrBounds::positive_bounds(T);
  corrconstrain::CholDerivs cd;
  for (auto _ : state) {
    corrconstrain::chol_from_raw_with_derivs(raw, bounds, cd);
    benchmark::DoNotOptimize(cd);
  }
}
BENCHMARK(bm_chol_with_derivs)->Arg(5)->Arg(10);

void bm_leapfrog(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const sampler::GradFn grad = [](const Eigen::VectorXd& q) { return Eigen::VectorXd(-q); };
  math::Rng rng(13);
  Eigen::VectorXd q(dim), p(dim);
  for (int k = 0; k < dim; ++k) {
    q[k] = rng.normal();
    p[k] = rng.normal();
  }
  for (auto _ : state) {
    auto [qn, pn] = sampler::leapfrog(q, p, 0.1, grad);
    benchmark::DoNotOptimize(qn);
    q.swap(qn);
    p.swap(pn);
  }
}
BENCHMARK(bm_leapfrog)->Arg(50)->Arg(500);

void bm_ess(benchmark::State& state) {
  math::Rng rng(17);
  Eigen::MatrixXd draws(static_cast<int>(state.range(0)), 4);
  double x = 0.0;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < draws.rows(); ++i) {
      x = 0.9 * x + std::sqrt(1.0 - 0.81) * rng.normal();
      draws(i, c) = x;
    }
  for (auto _ : state) benchmark::DoNotOptimize(sampler::ess(draws));
}
BENCHMARK(bm_ess)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
