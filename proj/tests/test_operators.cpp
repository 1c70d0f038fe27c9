#include <gtest/gtest.h>

#include <random>

#include "rankone/operators.hpp"
#include "rankone/presets.hpp"

using namespace rankone;

namespace {

StageOperator synthetic(std::size_t stage, const Eigen::MatrixXd& m, std::string label) {
  StageOperator op;
  op.stage = stage;
  op.label = std::move(label);
  op.matrix = m;
  const Eigen::VectorXd sums = m.colwise().sum().transpose();
  op.residual = (1.0 - sums.array()).max(0.0).matrix();
  return op;
}

Eigen::MatrixXd cyclic_shift(Eigen::Index h, Eigen::Index z) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(h, h);
  for (Eigen::Index b = 0; b < h; ++b) p(((b + z) % h + h) % h, b) = 1.0;
  return p;
}

void expect_substochastic(const StageOperator& op, double slack = 1e-12) {
  EXPECT_GE(op.matrix.minCoeff(), 0.0);
  for (Eigen::Index b = 0; b < op.levels(); ++b) {
    const double s = op.matrix.col(b).sum() + op.residual(b);
    EXPECT_LE(s, 1.0 + slack);
    EXPECT_GE(s, 1.0 - op.error_ratio - slack);
  }
}

}  // namespace

TEST(Nnls, RecoversIdentityAndTheta) {
  const Eigen::Index h = 6;
  std::vector<StageOperator> dict{identity_operator(0, h), theta_operator(0, h),
                                  synthetic(0, cyclic_shift(h, 1), "T^1")};
  auto rep = nnls_decompose(dict[0], dict);
  EXPECT_NEAR(rep.coefficients[0], 1.0, 1e-12);
  EXPECT_NEAR(rep.coefficients[1], 0.0, 1e-12);
  EXPECT_NEAR(rep.coefficients[2], 0.0, 1e-12);
  EXPECT_LE(rep.residual_norm, 1e-9);

  rep = nnls_decompose(dict[1], dict);
  EXPECT_NEAR(rep.coefficient("Theta"), 1.0, 1e-12);
  EXPECT_LE(rep.residual_norm, 1e-9);
}

TEST(Nnls, HalfIdentityHalfTheta) {
  const Eigen::Index h = 5;
  auto I = identity_operator(0, h);
  auto Th = theta_operator(0, h);
  auto M = synthetic(0, 0.5 * I.matrix + 0.5 * Th.matrix, "M");
  auto rep = nnls_decompose(M, {I, Th});
  EXPECT_NEAR(rep.coefficients[0], 0.5, 1e-6);
  EXPECT_NEAR(rep.coefficients[1], 0.5, 1e-6);
}

TEST(Nnls, RandomConvexCombinationsAreExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Index h = 7;
  std::vector<StageOperator> dict{identity_operator(0, h), theta_operator(0, h)};
  for (int z = 1; z <= 3; ++z) {
    dict.push_back(synthetic(0, cyclic_shift(h, z), "T^" + std::to_string(z)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(dict.size());
    double s = 0.0;
    for (auto& v : w) s += (v = u(rng));
    const double total = u(rng);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h, h);
    for (std::size_t i = 0; i < w.size(); ++i) m += (w[i] / s * total) * dict[i].matrix;
    auto rep = nnls_decompose(synthetic(0, m, "M"), dict);
    EXPECT_LE(rep.residual_norm, 1e-9) << trial;
    EXPECT_LE(rep.total(), 1.0 + 1e-9);
    for (double c : rep.coefficients) EXPECT_GE(c, 0.0);
  }
}

TEST(Nnls, SumCapBinds) {
  // Target 2I is outside the capped cone; best feasible is I.
  const Eigen::Index h = 4;
  auto I = identity_operator(0, h);
  auto rep = nnls_decompose(synthetic(0, 2.0 * I.matrix, "M"), {I, theta_operator(0, h)});
  EXPECT_NEAR(rep.coefficients[0], 1.0, 1e-9);
  EXPECT_NEAR(rep.coefficients[1], 0.0, 1e-9);
  EXPECT_NEAR(rep.total(), 1.0, 1e-9);
}

TEST(Nnls, IterationCap) {
  const Eigen::Index h = 4;
  auto I = identity_operator(0, h);
  try {
    nnls_decompose(I, {I, theta_operator(0, h)}, {.max_iterations = 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.error_class(), ErrorClass::kFitDiverged);
  }
}

TEST(Nnls, LipschitzInTarget) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  const std::size_t j = 2;
  const auto dict = dictionary(cor, j, 2);
  const auto M = markov_matrix(cor, j, 9).to_operator();
  const double base = nnls_decompose(M, dict).residual_norm;
  const double hj = static_cast<double>(M.levels());
  for (int trial = 0; trial < 50; ++trial) {
    const double delta = 1e-3;
    StageOperator P = M;
    for (Eigen::Index a = 0; a < hj; ++a) {
      for (Eigen::Index b = 0; b < hj; ++b) P.matrix(a, b) += delta * u(rng);
    }
    const double r = nnls_decompose(P, dict).residual_norm;
    EXPECT_LE(std::abs(r - base), hj * delta + 1e-12);
  }
}

TEST(MarkovMatrix, ZeroShiftIsIdentity) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  auto m = markov_matrix(cor, 2, 0);
  for (std::size_t a = 0; a < m.levels; ++a) {
    for (std::size_t b = 0; b < m.levels; ++b) {
      EXPECT_EQ(m.entry(a, b), a == b ? 1 : 0);
    }
  }
  expect_substochastic(m.to_operator());
}

TEST(MarkovMatrix, EntriesMatchCorrelations) {
  auto c = realize(presets::ornstein(5, {.cuts = 4, .epsilon = 0.5, .bound = 3, .seed = 2}));
  Correlator cor(c);
  const std::size_t j = 2, K = 4;
  const std::int64_t n = 5;
  auto m = markov_matrix(cor, j, n, K);
  for (std::size_t a = 0; a < m.levels; ++a) {
    for (std::size_t b = 0; b < m.levels; ++b) {
      auto v = cor.correlation(LevelSet::single(j, static_cast<std::int64_t>(a)),
                               LevelSet::single(j, static_cast<std::int64_t>(b)), n, K);
      EXPECT_EQ(m.entry(a, b), v.value / c.level_measure(j));
    }
  }
  expect_substochastic(m.to_operator());
}

TEST(MarkovMatrix, OdometerRigidAtTowerHeights) {
  auto c = realize(presets::odometer(14));
  Correlator cor(c);
  const std::size_t j = 3;
  const auto hj = c.height_i64(j);
  auto m = markov_matrix(cor, j, hj).to_operator();
  EXPECT_LE(max_entry_distance(m, identity_operator(j, hj)), m.error_ratio);
}

TEST(MarkovMatrix, BudgetExceeded) {
  auto c = realize(presets::odometer(14));
  Correlator cor(c);
  try {
    markov_matrix(cor, 13, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.error_class(), ErrorClass::kBudgetExceeded);
  }
}

TEST(Dictionary, ZeroRange) {
  auto c = realize(presets::chacon(5));
  Correlator cor(c);
  auto d = dictionary(cor, 1, 0);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].label, "I");
  EXPECT_EQ(d[1].label, "Theta");
  EXPECT_LE(max_entry_distance(d[2], d[0]), 1e-15);
  for (const auto& op : d) expect_substochastic(op);
}

TEST(Dictionary, ThetaProfile) {
  const Eigen::Index h = 8;
  auto th = theta_operator(0, h);
  Eigen::VectorXd ind = Eigen::VectorXd::Zero(h);
  ind(1) = ind(4) = ind(5) = 1.0;
  const Eigen::VectorXd out = th.matrix * ind;
  for (Eigen::Index a = 0; a < h; ++a) EXPECT_NEAR(out(a), 3.0 / 8.0, 1e-15);
}

TEST(Algebra, AdjointAndCompose) {
  const Eigen::Index h = 5;
  auto I = identity_operator(0, h);
  EXPECT_EQ(adjoint(I).matrix, I.matrix);
  auto P = synthetic(0, cyclic_shift(h, 2), "P");
  EXPECT_EQ(compose(I, P).matrix, P.matrix);
  EXPECT_LE(max_entry_distance(compose(adjoint(P), P), I), 1e-15);
  auto th = theta_operator(0, h);
  EXPECT_LE(max_entry_distance(compose(adjoint(th), th), th), 1e-15);
  EXPECT_THROW(compose(I, identity_operator(1, h)), Error);
  EXPECT_THROW(compose(I, identity_operator(0, h + 1)), Error);
}

TEST(Algebra, ComposePreservesSubstochastic) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  auto a = markov_matrix(cor, 2, 3).to_operator();
  auto b = markov_matrix(cor, 2, -7).to_operator();
  expect_substochastic(compose(a, b), 1e-12);
  expect_substochastic(adjoint(a), 1e-12);
}

TEST(Algebra, RigidityDetector) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index h = 2 + static_cast<Eigen::Index>(rng() % 10);
    const double eps = std::pow(10.0, -1.0 - 4.0 * u(rng));
    // Column-substochastic perturbation of I.
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(h, h);
    for (Eigen::Index b = 0; b < h; ++b) {
      double moved = 0.0;
      for (Eigen::Index a = 0; a < h; ++a) {
        if (a == b) continue;
        const double v = eps * u(rng) / static_cast<double>(h);
        m(a, b) = v;
        moved += v;
      }
      m(b, b) = 1.0 - moved - eps * u(rng) / static_cast<double>(h);
    }
    auto P = synthetic(0, m, "P");
    auto I = identity_operator(0, h);
    const double d = max_entry_distance(P, I);
    EXPECT_LE(max_entry_distance(compose(adjoint(P), P), I),
              2.0 * static_cast<double>(h) * d + 1e-15);
  }
}

TEST(Scan, ZeroTimeIsIdentity) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  auto s = weak_limit_scan(cor, 2, {0}, 1);
  EXPECT_NEAR(s.reports[0].coefficient("I") + s.reports[0].coefficient("T^0"), 1.0, 1e-9);
  EXPECT_EQ(s.rigidity_time, 0);
}

TEST(Scan, OdometerRigidity) {
  auto c = realize(presets::odometer(16));
  Correlator cor(c);
  const std::size_t j = 3;
  std::vector<std::int64_t> times;
  for (std::size_t k = 4; k <= 10; ++k) times.push_back(c.height_i64(k));
  auto s = weak_limit_scan(cor, j, times, 1);
  for (const auto& r : s.reports) {
    EXPECT_GE(r.coefficient("I"), 0.9) << r.time;
  }
  EXPECT_GE(s.rigidity_coefficient, 0.9);
}

TEST(Scan, EmptyTimes) {
  auto c = realize(presets::chacon(4));
  Correlator cor(c);
  EXPECT_THROW(weak_limit_scan(cor, 1, {}, 1), Error);
}
