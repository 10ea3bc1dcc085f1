#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lcmvp/likelihood.hpp"
#include "lcmvp/math.hpp"
#include "lcmvp/priors.hpp"
#include "lcmvp/sampler.hpp"
#include "lcmvp/targets.hpp"
#include "test_util.hpp"

using namespace lcmvp;
using namespace lcmvp::priors;
using likelihood::ModelKind;

namespace {

PriorSet find_set(int dgm, ModelKind model, const std::string& name) {
  for (auto& s : builtin_prior_sets(dgm, model))
    if (s.name == name) return s;
  throw std::runtime_error("no builtin set named " + name);
}

likelihood::BinaryDataset dummy_data(int T) {
  likelihood::BinaryDataset d;
  d.n_subjects = 2;
  d.n_tests = T;
  d.y.setZero(2, T);
  return d;
}

sampler::Summary prior_pushforward(const PriorSet& set, const std::string& quantity,
                                   std::uint64_t seed) {
  const auto target = sampler::make_target(set.model, dummy_data(5), set, /*prior_only=*/true);
  sampler::HmcConfig cfg;
  cfg.n_chains = 2;
  cfg.warmup = 500;
  cfg.sampling = 4000;
  cfg.seed = seed;
  const auto [samples, diag] = sampler::run_chains(*target, cfg);
  // hard bound boxes put -inf just outside the support, so a stray divergent
  // trajectory is expected; more than a handful would bias the quantiles
  REQUIRE(diag.divergences <= 8);
  return sampler::summarize(samples, quantity);
}

}  // namespace

TEST_CASE("loading marginals: densities, derivatives, draws") {
  BMarginal g{BFamily::gamma, 1.0, 1.0};
  CHECK(g.logpdf(1.0) == doctest::Approx(-1.0).epsilon(1e-12));
  BMarginal g23{BFamily::gamma, 2.0, 3.0};
  // gamma(2, 3): x exp(-x/3) / (9 Gamma(2))
  CHECK(g23.logpdf(1.5) == doctest::Approx(std::log(1.5) - 0.5 - std::log(9.0)).epsilon(1e-12));
  BMarginal w{BFamily::weibull, 2.0, 1.0};
  CHECK(w.logpdf(1.0) == doctest::Approx(std::log(2.0) - 1.0).epsilon(1e-12));

  for (const auto& m : {g, g23, w, BMarginal{BFamily::weibull, 1.45, 0.881}}) {
    for (double b : {0.2, 0.7, 1.3, 2.4}) {
      const double h = 1e-6;
      const double fd = (m.logpdf(b + h) - m.logpdf(b - h)) / (2.0 * h);
      CHECK(m.dlogpdf_db(b) == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  math::Rng rng(71);
  math::Welford acc;
  for (int i = 0; i < 200000; ++i) acc.add(g23.sample(rng));
  CHECK(acc.mean == doctest::Approx(6.0).epsilon(0.02));
  CHECK(acc.variance() == doctest::Approx(18.0).epsilon(0.05));
  math::Welford accw;
  for (int i = 0; i < 200000; ++i) accw.add(w.sample(rng));
  CHECK(accw.mean == doctest::Approx(math::kSqrtPi / 2.0).epsilon(0.01));
}

TEST_CASE("builtin prior sets enumerate the study grid") {
  const auto mvp1 = builtin_prior_sets(1, ModelKind::mvp);
  REQUIRE(mvp1.size() == 6);
  const std::vector<std::string> names = {"LKJ(10,1.5)",      "LKJ(24,4)",
                                          "TruncLKJ(10,1.5)", "TruncLKJ(24,4)",
                                          "mixedLKJ(10,1.5)", "mixedLKJ(24,4)"};
  for (size_t i = 0; i < names.size(); ++i) {
    CHECK(mvp1[i].name == names[i]);
    REQUIRE(mvp1[i].corr.has_value());
    CHECK_NOTHROW(mvp1[i].validate());
  }
  CHECK(mvp1[0].corr->lkj[0].eta == 10.0);
  CHECK(mvp1[0].corr->lkj[1].eta == 1.5);
  CHECK(mvp1[3].corr->lkj[0].eta == 24.0);
  CHECK(mvp1[3].corr->lkj[1].eta == 4.0);

  // informative prior on the reference test only
  CHECK(mvp1[0].accuracy.mean(1, 0) == doctest::Approx(0.385));
  CHECK(mvp1[0].accuracy.sd(1, 0) == doctest::Approx(0.45));
  CHECK(mvp1[0].accuracy.mean(0, 0) == doctest::Approx(-2.33));
  CHECK(mvp1[0].accuracy.sd(0, 0) == doctest::Approx(0.50));
  CHECK(mvp1[0].accuracy.mean(1, 1) == 0.0);
  CHECK(mvp1[0].accuracy.sd(1, 1) == 1.0);

  const auto mvp4 = builtin_prior_sets(4, ModelKind::mvp);
  CHECK(mvp4[0].accuracy.mean(1, 0) == doctest::Approx(1.30));
  CHECK(mvp4[0].accuracy.mean(0, 0) == doctest::Approx(-1.30));
  CHECK(mvp4[0].accuracy.sd(1, 0) == doctest::Approx(0.50));

  const auto lt2 = builtin_prior_sets(2, ModelKind::lt);
  REQUIRE(lt2.size() == 3);
  CHECK(lt2[0].name == "Gamma(1,1)");
  CHECK(lt2[1].name == "Weibull(1.59,0.468)");
  CHECK(lt2[2].name == "Weibull(1.52,0.633)");
  REQUIRE(lt2[2].b.has_value());
  CHECK(lt2[2].b->per_class[0].shape == doctest::Approx(1.52));
  CHECK(lt2[2].b->per_class[0].scale == doctest::Approx(0.633));
  CHECK(lt2[2].b->per_class[1].shape == doctest::Approx(1.33));
  CHECK(lt2[2].b->per_class[1].scale == doctest::Approx(1.25));
  CHECK(lt2[1].b->per_class[1].family == BFamily::weibull);
  CHECK(lt2[1].b->per_class[1].shape == doctest::Approx(1.45));

  const auto ci = builtin_prior_sets(3, ModelKind::ci);
  REQUIRE(ci.size() == 1);
  CHECK(ci[0].name == "default");

  CHECK_THROWS_AS((void)builtin_prior_sets(0, ModelKind::ci), std::invalid_argument);
  CHECK_THROWS_AS((void)builtin_prior_sets(6, ModelKind::mvp), std::invalid_argument);
}

TEST_CASE("mixed bound boxes free only the reference-test pairs") {
  const auto set = find_set(1, ModelKind::mvp, "mixedLKJ(10,1.5)");
  for (int d = 0; d < 2; ++d) {
    const auto& b = set.corr->bounds[d];
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < i; ++j) {
        CHECK(b.ub(i, j) == 1.0);
        CHECK(b.lb(i, j) == (j == 0 ? -1.0 : 0.0));
      }
  }
  const auto trunc = find_set(1, ModelKind::mvp, "TruncLKJ(24,4)");
  CHECK(trunc.corr->bounds[0].lb(1, 0) == 0.0);
  const auto lkj = find_set(1, ModelKind::mvp, "LKJ(24,4)");
  CHECK(lkj.corr->bounds[1].lb(1, 0) == -1.0);
}

TEST_CASE("log prior closed form and invariances") {
  const int T = 5;
  PriorSet flat;
  flat.name = "flat";
  flat.model = ModelKind::ci;
  flat.accuracy.mean = Eigen::MatrixXd::Zero(2, T);
  flat.accuracy.sd = Eigen::MatrixXd::Ones(2, T);
  const double v = log_prior(Eigen::VectorXd::Zero(likelihood::ci_dim(T)), flat, T, 0);
  CHECK(v == doctest::Approx(std::log(0.25) + 2 * T * (-math::kLogSqrt2Pi)).epsilon(1e-12));

  // at the identity correlation the LKJ shape drops out
  const auto s1 = find_set(1, ModelKind::mvp, "LKJ(10,1.5)");
  const auto s2 = find_set(1, ModelKind::mvp, "LKJ(24,4)");
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(likelihood::mvp_dim(T, 3));
  CHECK(log_prior(x0, s1, T, 3) == doctest::Approx(log_prior(x0, s2, T, 3)).epsilon(1e-12));

  CHECK_THROWS_AS((void)log_prior(Eigen::VectorXd::Zero(7), s1, T, 3), std::invalid_argument);

  PriorSet broken = s1;
  broken.corr.reset();
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  PriorSet nob = find_set(1, ModelKind::lt, "Gamma(1,1)");
  nob.b.reset();
  CHECK_THROWS_AS(nob.validate(), std::invalid_argument);
  PriorSet badsd = flat;
  badsd.accuracy.sd(0, 0) = 0.0;
  CHECK_THROWS_AS(badsd.validate(), std::invalid_argument);
}

TEST_CASE("log prior is finite except exactly where bounds are infeasible") {
  math::Rng rng(83);
  const int T = 5, N = 3;
  const int m = corrconstrain::n_raw(T);
  // raw vectors that cannot be mapped into the bound box have zero density;
  // everything else must be finite and nothing may produce NaN
  auto corr_feasible = [&](const PriorSet& set, const Eigen::VectorXd& x) {
    if (!set.corr) return true;
    try {
      (void)corrconstrain::chol_from_raw(x.segment(1 + 2 * T, m), set.corr->bounds[0]);
      (void)corrconstrain::chol_from_raw(x.segment(1 + 2 * T + m, m), set.corr->bounds[1]);
      return true;
    } catch (const corrconstrain::InfeasibleBoundsError&) {
      return false;
    }
  };
  int infeasible = 0;
  auto check_finite = [&](const PriorSet& set, int dim, int n_points) {
    for (int i = 0; i < n_points; ++i) {
      Eigen::VectorXd x(dim);
      for (int k = 0; k < dim; ++k) x[k] = rng.normal() * 1.5;
      const double v = log_prior(x, set, T, N);
      REQUIRE(!std::isnan(v));
      if (corr_feasible(set, x)) {
        REQUIRE(std::isfinite(v));
      } else {
        REQUIRE(v == -std::numeric_limits<double>::infinity());
        ++infeasible;
      }
    }
  };
  check_finite(builtin_prior_sets(1, ModelKind::ci)[0], likelihood::ci_dim(T), 1000);
  for (const auto& s : builtin_prior_sets(1, ModelKind::lt))
    check_finite(s, likelihood::lt_dim(T, N), 1200);
  for (const auto& s : builtin_prior_sets(1, ModelKind::mvp))
    check_finite(s, likelihood::mvp_dim(T, N), 900);
  CHECK(infeasible > 0);  // the truncated boxes must actually exercise the -inf branch
}

TEST_CASE("log prior gradients match finite differences") {
  math::Rng rng(97);
  const int T = 5, N = 3;
  std::vector<PriorSet> sets = {builtin_prior_sets(1, ModelKind::ci)[0],
                                find_set(1, ModelKind::lt, "Gamma(1,1)"),
                                find_set(1, ModelKind::lt, "Weibull(1.52,0.633)"),
                                find_set(1, ModelKind::mvp, "LKJ(10,1.5)"),
                                find_set(1, ModelKind::mvp, "TruncLKJ(24,4)"),
                                find_set(1, ModelKind::mvp, "mixedLKJ(10,1.5)")};
  for (const auto& set : sets) {
    int dim = 0;
    switch (set.model) {
      case ModelKind::ci: dim = likelihood::ci_dim(T); break;
      case ModelKind::lt: dim = likelihood::lt_dim(T, N); break;
      case ModelKind::mvp: dim = likelihood::mvp_dim(T, N); break;
    }
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd x(dim);
      for (int k = 0; k < dim; ++k) x[k] = rng.normal() * 0.5;
      Eigen::VectorXd grad;
      (void)log_prior(x, set, T, N, &grad);
      const auto fd = testutil::fd_grad(
          [&](const Eigen::VectorXd& z) { return log_prior(z, set, T, N); }, x);
      INFO("set ", set.name);
      CHECK(testutil::max_rel_err(grad, fd) < 1e-5);
    }
  }
}

TEST_CASE("implied correlation distributions hit the documented anchors") {
  math::Rng rng(113);
  {
    Eigen::VectorXd s = implied_corr_samples(BMarginal{BFamily::gamma, 1.0, 1.0}, 200000, rng);
    std::vector<double> v(s.data(), s.data() + s.size());
    CHECK(testutil::median(v) == doctest::Approx(0.23).scale(1.0).epsilon(0.01));
    CHECK(testutil::quantile(v, 0.975) == doctest::Approx(0.82).scale(1.0).epsilon(0.02));
  }
  {
    Eigen::VectorXd s =
        implied_corr_samples(BMarginal{BFamily::weibull, 1.45, 0.881}, 200000, rng);
    std::vector<double> v(s.data(), s.data() + s.size());
    CHECK(testutil::median(v) == doctest::Approx(0.26).scale(1.0).epsilon(0.01));
    CHECK(testutil::quantile(v, 0.025) == doctest::Approx(0.02).scale(1.0).epsilon(0.01));
    CHECK(testutil::quantile(v, 0.975) == doctest::Approx(0.70).scale(1.0).epsilon(0.02));
  }
  {
    Eigen::VectorXd s =
        implied_corr_samples(BMarginal{BFamily::weibull, 1.52, 0.633}, 200000, rng);
    std::vector<double> v(s.data(), s.data() + s.size());
    CHECK(testutil::median(v) == doctest::Approx(0.17).scale(1.0).epsilon(0.01));
    CHECK(testutil::quantile(v, 0.975) == doctest::Approx(0.54).scale(1.0).epsilon(0.02));
  }
}

TEST_CASE("weibull loading priors equivalent to truncated lkj shapes") {
  math::Rng rng(131);
  auto trunc_samples = [&](double eta, int n) {
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i)
      out[i] = corrconstrain::sample_trunc_lkj(eta, 5, rng).omega()(1, 0);
    return out;
  };

  {
    const Eigen::VectorXd target = trunc_samples(10.0, 20000);
    const BMarginal fit = fit_equivalent_weibull(target);
    CHECK(fit.family == BFamily::weibull);
    CHECK(fit.shape == doctest::Approx(1.52).epsilon(0.15));
    CHECK(fit.scale == doctest::Approx(0.633).epsilon(0.15));
    math::Rng r2(132);
    Eigen::VectorXd implied = implied_corr_samples(fit, 100000, r2);
    std::vector<double> vi(implied.data(), implied.data() + implied.size());
    std::vector<double> vt(target.data(), target.data() + target.size());
    CHECK(testutil::median(vi) == doctest::Approx(testutil::median(vt)).scale(1.0).epsilon(0.02));
  }
  {
    const Eigen::VectorXd target = trunc_samples(1.5, 20000);
    const BMarginal fit = fit_equivalent_weibull(target);
    CHECK(fit.shape == doctest::Approx(1.33).epsilon(0.15));
    CHECK(fit.scale == doctest::Approx(1.25).epsilon(0.15));
  }
  {
    // self consistency: data generated from a weibull loading prior
    math::Rng r3(133);
    const Eigen::VectorXd target =
        implied_corr_samples(BMarginal{BFamily::weibull, 2.0, 1.0}, 20000, r3);
    const BMarginal fit = fit_equivalent_weibull(target);
    CHECK(fit.shape == doctest::Approx(2.0).epsilon(0.10));
    CHECK(fit.scale == doctest::Approx(1.0).epsilon(0.10));
  }
  CHECK_THROWS_AS((void)fit_equivalent_weibull(Eigen::VectorXd::Constant(10, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("prior pushforwards through the model targets match the design anchors") {
  // truncated lkj, eta 10 (class 1) and 1.5 (class 2)
  {
    const auto set = find_set(1, ModelKind::mvp, "TruncLKJ(10,1.5)");
    const auto o1 = prior_pushforward(set, "omega1_12", 2024);
    CHECK(o1.median == doctest::Approx(0.17).scale(1.0).epsilon(0.02));
    CHECK(o1.q025 == doctest::Approx(0.01).scale(1.0).epsilon(0.02));
    CHECK(o1.q975 == doctest::Approx(0.47).scale(1.0).epsilon(0.03));
    const auto o2 = prior_pushforward(set, "omega2_12", 2024);
    CHECK(o2.median == doctest::Approx(0.37).scale(1.0).epsilon(0.02));
    CHECK(o2.q975 == doctest::Approx(0.82).scale(1.0).epsilon(0.03));
  }
  // unrestricted lkj: symmetric about zero
  {
    const auto set = find_set(1, ModelKind::mvp, "LKJ(10,1.5)");
    const auto o1 = prior_pushforward(set, "omega1_12", 2025);
    CHECK(o1.median == doctest::Approx(0.0).scale(1.0).epsilon(0.02));
    CHECK(o1.q975 == doctest::Approx(0.40).scale(1.0).epsilon(0.03));
    CHECK(o1.q025 == doctest::Approx(-0.40).scale(1.0).epsilon(0.03));
    const auto o2 = prior_pushforward(set, "omega2_12", 2025);
    CHECK(o2.q975 == doctest::Approx(0.71).scale(1.0).epsilon(0.03));
  }
  // latent trait gamma(1,1) loadings
  {
    const auto set = find_set(1, ModelKind::lt, "Gamma(1,1)");
    const auto o2 = prior_pushforward(set, "omega2_12", 2026);
    CHECK(o2.median == doctest::Approx(0.23).scale(1.0).epsilon(0.02));
    CHECK(o2.q975 == doctest::Approx(0.82).scale(1.0).epsilon(0.03));
    // reference-test accuracy prior propagates to the probability scale
    const auto se1 = prior_pushforward(set, "se1", 2027);
    CHECK(se1.median == doctest::Approx(math::phi(0.385)).scale(1.0).epsilon(0.02));
    const auto prev = prior_pushforward(set, "prev", 2028);
    CHECK(prev.median == doctest::Approx(0.5).scale(1.0).epsilon(0.02));
    CHECK(prev.q975 == doctest::Approx(0.975).scale(1.0).epsilon(0.01));
  }
}
