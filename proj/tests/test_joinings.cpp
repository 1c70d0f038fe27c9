#include <gtest/gtest.h>

#include <random>

#include "rankone/joinings.hpp"
#include "rankone/presets.hpp"

using namespace rankone;

namespace {

Joining random_joining(std::mt19937_64& rng, int terms, std::int64_t zmax, bool with_product) {
  Joining v;
  std::vector<long long> w;
  long long total = 0;
  for (int t = 0; t < terms + (with_product ? 1 : 0); ++t) {
    w.push_back(1 + static_cast<long long>(rng() % 9));
    total += w.back();
  }
  for (int t = 0; t < terms; ++t) {
    const auto z = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(2 * zmax + 1)) - zmax;
    v.diag[z] += Rational(w[static_cast<std::size_t>(t)], total);
  }
  if (with_product) v.product = Rational(w.back(), total);
  return normalized(v);
}

template <class F>
ErrorClass error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.error_class();
  }
  return ErrorClass::kConfig;
}

}  // namespace

TEST(RelativeProduct, Rules) {
  EXPECT_EQ(relative_product(Joining::diagonal(4), Joining::diagonal(4)), Joining::diagonal(0));
  EXPECT_EQ(relative_product(Joining::diagonal(2), Joining::diagonal(-5)), Joining::diagonal(-7));
  const Joining p = Joining::product_measure();
  EXPECT_EQ(relative_product(p, Joining::diagonal(3)), p);
  EXPECT_EQ(relative_product(Joining::diagonal(3), p), p);

  Joining v{{{1, Rational(1, 2)}, {4, Rational(1, 2)}}, 0};
  Joining expect{{{0, Rational(1, 2)}, {3, Rational(1, 4)}, {-3, Rational(1, 4)}}, 0};
  const Joining eta = relative_product(v, v);
  EXPECT_EQ(eta, expect);
  EXPECT_TRUE(eta.relative_product);
}

TEST(RelativeProduct, ExhaustiveSmallShifts) {
  for (std::int64_t a = -20; a <= 20; ++a) {
    for (std::int64_t b = -20; b <= 20; ++b) {
      ASSERT_EQ(relative_product(Joining::diagonal(a), Joining::diagonal(b)),
                Joining::diagonal(b - a));
    }
  }
}

TEST(RelativeProduct, SimplexAndShiftIdentity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Joining v = random_joining(rng, 1 + trial % 5, 12, trial % 3 == 0);
    const Joining w = random_joining(rng, 1 + trial % 4, 12, trial % 4 == 0);
    const auto z = static_cast<std::int64_t>(rng() % 21) - 10;
    const Joining eta = relative_product(v, w);
    EXPECT_EQ(eta.total(), 1);
    EXPECT_EQ(shift(v, z).total(), 1);
    EXPECT_EQ(relative_product(shift(v, z), w), shift(eta, -z));
    EXPECT_EQ(relative_product(v, shift(w, z)), shift(eta, z));
    EXPECT_EQ(shift(shift(v, z), -z), v);
    // Graph component: sum of squared Diag weights.
    Rational sq = 0;
    for (const auto& [a, wa] : v.diag) sq += wa * wa;
    EXPECT_EQ(diagonal_component(relative_product(v, v)), sq);
    EXPECT_GT(diagonal_component(relative_product(v, v)), 0);
  }
}

TEST(Joining, RejectsOffSimplex) {
  EXPECT_EQ(error_of([] { normalized(Joining{{{0, Rational(1, 2)}}, 0}); }),
            ErrorClass::kInvalidArgument);
  EXPECT_EQ(error_of([] { normalized(Joining{{{0, Rational(3, 2)}}, Rational(-1, 2)}); }),
            ErrorClass::kInvalidArgument);
}

TEST(Equivalence, Shifts) {
  EXPECT_EQ(equivalent(Joining::diagonal(2), Joining::diagonal(5), 5), 3);
  EXPECT_EQ(equivalent(Joining::diagonal(2), Joining::diagonal(5), 2), std::nullopt);
  EXPECT_EQ(equivalent(Joining::product_measure(), Joining::diagonal(0), 10), std::nullopt);
  EXPECT_EQ(equivalent(Joining::product_measure(), Joining::product_measure(), 3), 0);
  Joining v{{{1, Rational(1, 3)}, {4, Rational(2, 3)}}, 0};
  EXPECT_EQ(equivalent(v, shift(v, -6), 6), -6);
  Joining u{{{1, Rational(2, 3)}, {4, Rational(1, 3)}}, 0};
  EXPECT_EQ(equivalent(v, u, 20), std::nullopt);
}

TEST(DiagonalComponent, Examples) {
  EXPECT_EQ(diagonal_component(Joining::diagonal(0)), 1);
  EXPECT_EQ(diagonal_component(Joining::product_measure()), 0);
  const Eigen::Index h = 5;
  std::vector<StageOperator> dict{identity_operator(0, h), theta_operator(0, h)};
  StageOperator m = identity_operator(0, h);
  m.matrix = 0.25 * dict[0].matrix + 0.75 * dict[1].matrix;
  EXPECT_NEAR(diagonal_component(m, dict), 0.25, 1e-9);
}

TEST(Evaluate, TrivialCases) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  const auto A = LevelSet::range(2, 2, 9);
  const auto B = LevelSet::of(2, {0, 5, 11});
  auto d = evaluate(cor, Joining::diagonal(0), Rectangle{A, A});
  EXPECT_EQ(d.value, A.measure(c));
  auto p = evaluate(cor, Joining::product_measure(), Rectangle{A, B});
  EXPECT_EQ(p.value, A.measure(c) * B.measure(c));
  EXPECT_EQ(p.error_bound, 0);
}

TEST(Evaluate, LockedMixedJoining) {
  // Independent enumeration of the Chacon name gives 36 pairs at n = 8.
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  Joining v{{{8, Rational(1, 2)}}, Rational(1, 2)};
  auto r = evaluate(cor, v, Rectangle{LevelSet::range(2, 0, 5), LevelSet::range(2, 3, 10)}, 4);
  EXPECT_EQ(r.value, Rational(583767, 2389298));
  EXPECT_EQ(r.error_bound, Rational(85, 2186));
}

TEST(Evaluate, AgreesWithOrbitOracle) {
  auto c = realize(presets::ornstein(5, {.cuts = 4, .epsilon = 0.5, .bound = 3, .seed = 4}));
  Correlator cor(c);
  const auto A = LevelSet::of(2, {0, 1, 7});
  const auto B = LevelSet::range(2, 3, 6);
  Joining v{{{3, Rational(1, 4)}, {-5, Rational(1, 4)}}, Rational(1, 2)};
  const std::size_t K = 4;
  auto r = evaluate(cor, v, Rectangle{A, B}, K);
  const Rational expect = Rational(1, 4) * orbit_oracle_correlation(c, A, B, 3, K) +
                          Rational(1, 4) * orbit_oracle_correlation(c, A, B, -5, K) +
                          Rational(1, 2) * A.measure(c) * B.measure(c);
  EXPECT_EQ(r.value, expect);
}

TEST(Evaluate, Marginals) {
  std::mt19937_64 rng(5);
  auto c = realize(presets::katok(5, {.q = 2, .bound = 2, .seed = 3}));
  Correlator cor(c);
  const std::size_t j = 2;
  const auto h = c.height_i64(j);
  for (int trial = 0; trial < 30; ++trial) {
    const Joining v = random_joining(rng, 3, 6, trial % 2 == 0);
    std::vector<std::int64_t> idx;
    for (std::int64_t l = 0; l < h; ++l) {
      if (rng() % 3 == 0) idx.push_back(l);
    }
    if (idx.empty()) idx.push_back(0);
    const auto A = LevelSet::of(j, idx);
    EXPECT_EQ(evaluate(cor, v, Rectangle{A, WholeSpace{}}).value, A.measure(c));
    EXPECT_EQ(evaluate(cor, v, Rectangle{WholeSpace{}, A}).value, A.measure(c));
  }
  EXPECT_EQ(evaluate(cor, Joining::product_measure(), Rectangle{WholeSpace{}, WholeSpace{}}).value, 1);
}

TEST(Evaluate, ShiftTooLarge) {
  auto c = realize(presets::chacon(3));
  Correlator cor(c);
  const auto A = LevelSet::single(1, 0);
  EXPECT_EQ(error_of([&] { evaluate(cor, Joining::diagonal(40), Rectangle{A, A}, 3); }),
            ErrorClass::kShiftTooLarge);
}

TEST(SymmetrizedMeasure, Examples) {
  auto c = realize(presets::chacon(5));
  const auto A = LevelSet::range(2, 0, 4);
  const auto B = LevelSet::range(2, 6, 9);
  const Rational ma = A.measure(c), mb = B.measure(c);
  EXPECT_EQ(symmetrized_measure(c, Rectangle{A, A}), ma * ma);
  EXPECT_EQ(symmetrized_measure(c, Rectangle{A, B}), 2 * ma * mb);
  EXPECT_EQ(symmetrized_measure(c, Rectangle{WholeSpace{}, B}), 2 * mb - mb * mb);
}

TEST(Columns, ClosedForms) {
  auto c = realize(presets::chacon(7));
  Correlator cor(c);
  const std::size_t j = 3, K = 6;
  const auto h = c.height_i64(j);
  const Rational mb = c.level_measure(j);
  for (std::int64_t k : {0, 1, 5, -4}) {
    auto d = column_measure(cor, Joining::diagonal(k), j, k, K);
    EXPECT_EQ(d.value, Rational(h - std::llabs(k) + 1) * mb) << k;
  }
  EXPECT_EQ(column_measure(cor, Joining::diagonal(0), j, 0, K).value,
            c.coverage(j) + mb);
  EXPECT_EQ(column_measure(cor, Joining::product_measure(), j, 0, K).value,
            Rational(h + 1) * mb * mb);
}

TEST(Strip, DiagonalPasses) {
  auto c = realize(presets::katok(6, {.q = 2, .bound = 2, .seed = 1}));
  Correlator cor(c);
  const std::size_t j = 4;
  const Joining eta = relative_product(Joining::diagonal(3), Joining::diagonal(3));
  for (double eps : {0.05, 0.1, 0.2, 0.5}) {
    auto rep = strip_audit(cor, eta, j, eps);
    EXPECT_TRUE(rep.pass) << eps;
    EXPECT_TRUE(rep.u_pass) << eps;
    // Levels of one tower are disjoint, so only the k = 0 column carries mass.
    const Rational expect = Rational(c.height_i64(j) + 1) * c.level_measure(j);
    EXPECT_EQ(rep.eta_d, expect);
    EXPECT_EQ(rep.margin, expect - Rational(eps) * Rational(eps) * c.coverage(j) * c.coverage(j));
  }
}

TEST(Strip, ProductMeasureExact) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  const std::size_t j = 3;
  const auto h = c.height_i64(j);
  const Rational mb = c.level_measure(j);
  Joining eta = relative_product(Joining::product_measure(), Joining::diagonal(1));
  for (double eps : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    auto rep = strip_audit(cor, eta, j, eps);
    const std::int64_t m = rep.half_width;
    EXPECT_EQ(m, static_cast<std::int64_t>(std::floor(eps * static_cast<double>(h))));
    const Rational expect = mb * mb * Rational((2 * m + 1) * (h + 1) - m * (m + 1));
    EXPECT_EQ(rep.eta_d, expect);
    EXPECT_EQ(rep.pass, expect > rep.bound);
  }
}

TEST(Strip, RequiresRelativeProduct) {
  auto c = realize(presets::chacon(4));
  Correlator cor(c);
  EXPECT_EQ(error_of([&] { strip_audit(cor, Joining::diagonal(0), 2, 0.1); }),
            ErrorClass::kNotRelativeProduct);
}

TEST(Strip, RandomRelativeProductsPass) {
  std::mt19937_64 rng(8);
  auto c = realize(presets::ornstein(5, {.cuts = 5, .epsilon = 0.4, .bound = 3, .seed = 6}));
  Correlator cor(c);
  for (int trial = 0; trial < 20; ++trial) {
    const Joining v = random_joining(rng, 1 + trial % 4, 10, trial % 5 == 0);
    const Joining eta = relative_product(v, v);
    for (double eps : {0.05, 0.1, 0.2, 0.4}) {
      auto rep = strip_audit(cor, eta, 3, eps);
      EXPECT_TRUE(rep.pass) << trial << " " << eps;
    }
  }
}

TEST(Component, DiagonalHasNoProductPart) {
  auto c = realize(presets::ornstein(5, {.cuts = 6, .epsilon = 0.5, .bound = 3, .seed = 2}));
  Correlator cor(c);
  auto rep = mu2_component_audit(cor, Joining::diagonal(0), 3, 0.1);
  EXPECT_EQ(rep.column_weights.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.column_weights.at(0), 1.0);
  EXPECT_EQ(rep.component, 0.0);
}

TEST(Component, OffDiagonalMatchesMixingRatio) {
  auto c = realize(presets::ornstein(5, {.cuts = 6, .epsilon = 0.5, .bound = 3, .seed = 2}));
  Correlator cor(c);
  const std::size_t j = 3;
  const double eps = 0.3;
  const std::int64_t z = strip_half_width(c, j, eps) - 2;
  auto rep = mu2_component_audit(cor, Joining::diagonal(z), j, eps);
  ASSERT_EQ(rep.column_weights.size(), 1u);
  const TestFamily fam = default_family(c, rep.family_stage);
  EXPECT_DOUBLE_EQ(rep.component, mixing_ratio(cor, fam, z, rep.top_stage));
  EXPECT_GE(rep.component, 0.0);
  EXPECT_LE(rep.component, 1.0);
}

TEST(Component, ProductMeasureIsFullComponent) {
  auto c = realize(presets::chacon(6));
  Correlator cor(c);
  auto rep = mu2_component_audit(cor, Joining::product_measure(), 3, 0.2);
  EXPECT_DOUBLE_EQ(rep.component, 1.0);
}

TEST(Component, DegenerateStrip) {
  auto c = realize(presets::odometer(12));
  Correlator cor(c);
  // Returns to B_4 happen at multiples of 16 only; the strip |k| <= 1 misses them.
  EXPECT_EQ(error_of([&] { mu2_component_audit(cor, Joining::diagonal(8), 4, 0.1); }),
            ErrorClass::kDegenerateStrip);
}

TEST(Component, BoundSign) {
  auto c = realize(presets::odometer(12));
  Correlator cor(c);
  ComponentOptions opts;
  opts.alpha = 0.5;
  for (double eps : {0.05, 0.1, 0.2}) {
    auto rep = mu2_component_audit(cor, Joining::diagonal(0), 6, eps, opts);
    EXPECT_DOUBLE_EQ(rep.beta_hat, 1.0);
    EXPECT_GT(rep.bound, 0.0);
    EXPECT_NEAR(rep.bound, 0.5 - eps, 1e-12);
  }
}
