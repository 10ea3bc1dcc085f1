#include "lcmvp/dgm.hpp"

#include <stdexcept>

namespace lcmvp::dgm {

namespace {

Eigen::MatrixXd from_rows(const std::array<std::array<double, 5>, 5>& rows) {
  Eigen::MatrixXd m(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

// printed to the source precision of the study tables
Eigen::MatrixXd varied_diseased() {
  return from_rows({{{1.0, 0.223, 0.275, 0.232, 0.290},
                     {0.223, 1.0, 0.444, 0.375, 0.469},
                     {0.275, 0.444, 1.0, 0.462, 0.578},
                     {0.232, 0.375, 0.462, 1.0, 0.488},
                     {0.290, 0.469, 0.578, 0.488, 1.0}}});
}

Eigen::MatrixXd varied_nondiseased() {
  return from_rows({{{1.0, 0.069, 0.095, 0.073, 0.104},
                     {0.069, 1.0, 0.169, 0.130, 0.186},
                     {0.095, 0.169, 1.0, 0.179, 0.255},
                     {0.073, 0.130, 0.179, 1.0, 0.197},
                     {0.104, 0.186, 0.255, 0.197, 1.0}}});
}

Eigen::MatrixXd highly_varied_diseased() {
  return from_rows({{{1.0, 0.10, 0.10, 0.10, 0.10},
                     {0.10, 1.0, 0.50, 0.25, 0.15},
                     {0.10, 0.50, 1.0, 0.40, 0.35},
                     {0.10, 0.25, 0.40, 1.0, 0.65},
                     {0.10, 0.15, 0.35, 0.65, 1.0}}});
}

Eigen::MatrixXd halved_offdiag(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = 0.5 * m;
  out.diagonal().setOnes();
  return out;
}

}  // namespace

DgmSpec dgm_spec(int id) {
  if (id < 1 || id > 5) throw std::invalid_argument("dgm_spec: id must be 1..5");
  DgmSpec s;
  s.id = id;
  s.prevalence = 0.20;
  if (id <= 3) {
    s.true_se = (Eigen::VectorXd(5) << 0.65, 0.55, 0.60, 0.65, 0.70).finished();
    s.true_sp = (Eigen::VectorXd(5) << 0.99, 0.95, 0.90, 0.90, 0.85).finished();
  } else {
    s.true_se = (Eigen::VectorXd(5) << 0.925, 0.86, 0.87, 0.91, 0.86).finished();
    s.true_sp = (Eigen::VectorXd(5) << 0.95, 0.81, 0.70, 0.67, 0.85).finished();
  }
  switch (id) {
    case 1:
      s.omega = {Eigen::MatrixXd::Identity(5, 5), Eigen::MatrixXd::Identity(5, 5)};
      break;
    case 2:
    case 4:
      s.omega = {varied_nondiseased(), varied_diseased()};
      break;
    default:
      s.omega = {halved_offdiag(highly_varied_diseased()), highly_varied_diseased()};
      break;
  }
  return s;
}

Eigen::MatrixXd mu_from_accuracy(const Eigen::VectorXd& se, const Eigen::VectorXd& sp) {
  const int T = static_cast<int>(se.size());
  if (sp.size() != T) throw std::invalid_argument("mu_from_accuracy: se/sp length mismatch");
  Eigen::MatrixXd mu(2, T);
  for (int t = 0; t < T; ++t) {
    if (!(se[t] > 0.0 && se[t] < 1.0 && sp[t] > 0.0 && sp[t] < 1.0))
      throw std::invalid_argument("mu_from_accuracy: accuracies must lie in (0,1)");
    mu(0, t) = math::inv_phi(1.0 - sp[t]);
    mu(1, t) = math::inv_phi(se[t]);
  }
  return mu;
}

likelihood::BinaryDataset simulate_dataset(const DgmSpec& spec, int n, math::Rng& rng,
                                           std::vector<int>* classes) {
  if (n < 1) throw std::invalid_argument("simulate_dataset: n >= 1 required");
  const int T = spec.n_tests();
  const Eigen::MatrixXd mu = mu_from_accuracy(spec.true_se, spec.true_sp);
  std::array<Eigen::MatrixXd, 2> chol;
  for (int d = 0; d < 2; ++d) {
    Eigen::LLT<Eigen::MatrixXd> llt(spec.omega[static_cast<size_t>(d)]);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("simulate_dataset: omega not PD");
    chol[static_cast<size_t>(d)] = llt.matrixL();
  }

  likelihood::BinaryDataset data;
  data.n_subjects = n;
  data.n_tests = T;
  data.y.resize(n, T);
  if (classes) classes->assign(static_cast<size_t>(n), 0);
  Eigen::VectorXd eps(T);
  for (int i = 0; i < n; ++i) {
    const int d = rng.uniform() < spec.prevalence ? 1 : 0;
    if (classes) (*classes)[static_cast<size_t>(i)] = d + 1;
    for (int t = 0; t < T; ++t) eps[t] = rng.normal();
    const Eigen::VectorXd z =
        mu.row(d).transpose() + chol[static_cast<size_t>(d)] * eps;
    for (int t = 0; t < T; ++t) data.y(i, t) = z[t] > 0.0 ? 1 : 0;
  }
  return data;
}

Eigen::MatrixXd half_b_nondiseased(const Eigen::VectorXd& b) {
  const int T = static_cast<int>(b.size());
  if ((b.array() <= 0.0).any()) throw std::invalid_argument("half_b_nondiseased: b must be positive");
  Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < i; ++j) {
      const double bi = 0.5 * b[i], bj = 0.5 * b[j];
      omega(i, j) = omega(j, i) = bi * bj / std::sqrt((1.0 + bi * bi) * (1.0 + bj * bj));
    }
  return omega;
}

}  // namespace lcmvp::dgm
