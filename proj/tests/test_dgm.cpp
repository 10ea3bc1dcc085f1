#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lcmvp/dgm.hpp"
#include "lcmvp/likelihood.hpp"
#include "lcmvp/math.hpp"
#include "test_util.hpp"

using namespace lcmvp;
using namespace lcmvp::dgm;

namespace {

Eigen::VectorXd study_b() {
  return (Eigen::VectorXd(5) << 0.40, 0.75, 1.10, 0.80, 1.25).finished();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("halved-loading correlation structure") {
  const Eigen::MatrixXd omega = half_b_nondiseased(study_b());
  CHECK(omega(2, 4) == doctest::Approx(0.255).epsilon(2e-3));
  CHECK(omega(0, 1) == doctest::Approx(0.069).epsilon(1e-2));
  CHECK(omega.diagonal().isConstant(1.0));
  CHECK(omega.isApprox(omega.transpose(), 1e-15));
  CHECK_THROWS_AS((void)half_b_nondiseased(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("mechanism specifications are valid and internally consistent") {
  for (int id = 1; id <= 5; ++id) {
    const DgmSpec s = dgm_spec(id);
    CHECK(s.id == id);
    CHECK(s.n_tests() == 5);
    CHECK(s.prevalence == 0.20);
    for (int d = 0; d < 2; ++d) {
      const auto& omega = s.omega[static_cast<size_t>(d)];
      CHECK(omega.rows() == 5);
      CHECK(omega.isApprox(omega.transpose(), 1e-15));
      CHECK(omega.diagonal().isConstant(1.0));
      CHECK(min_eigenvalue(omega) > 0.0);
    }
    CHECK((s.true_se.array() > s.true_se.array() * 0).all());
  }
  CHECK_THROWS_AS((void)dgm_spec(0), std::invalid_argument);
  CHECK_THROWS_AS((void)dgm_spec(6), std::invalid_argument);

  const DgmSpec d1 = dgm_spec(1);
  CHECK(d1.omega[0].isIdentity(1e-15));
  CHECK(d1.omega[1].isIdentity(1e-15));
  CHECK(d1.true_se[0] == 0.65);
  CHECK(d1.true_sp[0] == 0.99);
  CHECK(d1.true_se[4] == 0.70);

  const DgmSpec d4 = dgm_spec(4);
  CHECK(d4.true_se[0] == 0.925);
  CHECK(d4.true_sp[2] == 0.70);
  CHECK(d4.omega[1] == dgm_spec(2).omega[1]);

  // varied structure: rank-one in the loadings, halved loadings below
  const DgmSpec d2 = dgm_spec(2);
  const Eigen::VectorXd b = study_b();
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) {
      const double expect = b[i] * b[j] / std::sqrt((1 + b[i] * b[i]) * (1 + b[j] * b[j]));
      CHECK(d2.omega[1](i, j) == doctest::Approx(expect).scale(1.0).epsilon(1e-3));
    }
  CHECK((d2.omega[0] - half_b_nondiseased(b)).cwiseAbs().maxCoeff() < 1e-3);

  // highly varied structure: exact off-diagonal halving
  const DgmSpec d3 = dgm_spec(3);
  CHECK(d3.omega[1](3, 4) == 0.65);
  CHECK(d3.omega[1](1, 2) == 0.50);
  CHECK(d3.omega[1](0, 4) == 0.10);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j)
      CHECK(d3.omega[0](i, j) == doctest::Approx(0.5 * d3.omega[1](i, j)).epsilon(1e-15));
  CHECK(dgm_spec(5).omega[0] == d3.omega[0]);
}

TEST_CASE("latent class means on the probit scale") {
  const DgmSpec d1 = dgm_spec(1);
  const Eigen::MatrixXd mu = mu_from_accuracy(d1.true_se, d1.true_sp);
  CHECK(mu(1, 0) == doctest::Approx(math::inv_phi(0.65)).epsilon(1e-12));
  CHECK(mu(0, 0) == doctest::Approx(math::inv_phi(0.01)).epsilon(1e-12));
  CHECK(mu(0, 0) == doctest::Approx(-2.3263).epsilon(1e-4));
  CHECK_THROWS_AS((void)mu_from_accuracy(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Constant(2, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)mu_from_accuracy(Eigen::VectorXd::Constant(2, 0.5), Eigen::VectorXd::Ones(3)),
                  std::invalid_argument);
}

TEST_CASE("simulator reproduces its own truth") {
  for (int id : {2, 4}) {
    const DgmSpec spec = dgm_spec(id);
    math::Rng rng(1000 + static_cast<uint64_t>(id));
    std::vector<int> classes;
    const auto data = simulate_dataset(spec, 100000, rng, &classes);
    CHECK_NOTHROW(data.validate());
    REQUIRE(static_cast<int>(classes.size()) == data.n_subjects);

    long n2 = 0;
    Eigen::VectorXd pos1 = Eigen::VectorXd::Zero(5), pos2 = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < data.n_subjects; ++i) {
      REQUIRE((classes[static_cast<size_t>(i)] == 1 || classes[static_cast<size_t>(i)] == 2));
      const bool diseased = classes[static_cast<size_t>(i)] == 2;
      n2 += diseased ? 1 : 0;
      for (int t = 0; t < 5; ++t)
        (diseased ? pos2 : pos1)[t] += data.y(i, t);
    }
    const double frac2 = static_cast<double>(n2) / data.n_subjects;
    CHECK(frac2 == doctest::Approx(0.20).scale(1.0).epsilon(0.005));
    pos2 /= static_cast<double>(n2);
    pos1 /= static_cast<double>(data.n_subjects - n2);
    for (int t = 0; t < 5; ++t) {
      CHECK(pos2[t] == doctest::Approx(spec.true_se[t]).scale(1.0).epsilon(0.012));
      CHECK(pos1[t] == doctest::Approx(1.0 - spec.true_sp[t]).scale(1.0).epsilon(0.012));
    }
  }
}

TEST_CASE("simulated dependence matches the latent correlation") {
  const DgmSpec spec = dgm_spec(3);
  math::Rng rng(77);
  std::vector<int> classes;
  const auto data = simulate_dataset(spec, 150000, rng, &classes);
  long n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (int i = 0; i < data.n_subjects; ++i) {
    if (classes[static_cast<size_t>(i)] != 2) continue;
    const int y3 = data.y(i, 3), y4 = data.y(i, 4);
    n11 += y3 && y4;
    n10 += y3 && !y4;
    n01 += !y3 && y4;
    n00 += !y3 && !y4;
  }
  CHECK(likelihood::tetrachoric(n11, n10, n01, n00) ==
        doctest::Approx(0.65).scale(1.0).epsilon(0.05));
}

TEST_CASE("simulation stream is deterministic in the seed") {
  const DgmSpec spec = dgm_spec(2);
  math::Rng a(42), b(42), c(43);
  std::vector<int> ca, cb;
  const auto da = simulate_dataset(spec, 500, a, &ca);
  const auto db = simulate_dataset(spec, 500, b, &cb);
  const auto dc = simulate_dataset(spec, 500, c);
  CHECK(da.y == db.y);
  CHECK(ca == cb);
  CHECK(da.y != dc.y);
  CHECK_THROWS_AS((void)simulate_dataset(spec, 0, a), std::invalid_argument);
}
