#include <gtest/gtest.h>

#include <random>

#include "rankone/estimators.hpp"
#include "rankone/presets.hpp"

using namespace rankone;

namespace {

std::vector<std::int64_t> random_times(const Construction& c, std::size_t lo_stage,
                                       std::size_t hi_stage, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto lo = c.height_i64(lo_stage);
  const auto span = static_cast<std::uint64_t>(c.height_i64(hi_stage) - lo);
  std::vector<std::int64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(lo + static_cast<std::int64_t>(rng() % span));
  return out;
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

TEST(Family, DefaultShape) {
  auto c = realize(presets::chacon(4));
  auto f = default_family(c, 2);
  ASSERT_EQ(f.sets.size(), 23u);  // 1 of 8, 3 of 4, 6 of 2, 13 singles
  EXPECT_EQ(f.sets[0], LevelSet::range(2, 0, 8));
  EXPECT_EQ(f.sets.back(), LevelSet::single(2, 12));
  EXPECT_EQ(default_family(c, 4, 64).sets.size(), 64u);
}

TEST(Alpha, OdometerIsNotMixing) {
  auto c = realize(presets::odometer(14));
  Correlator cor(c);
  auto fam = default_family(c, 3);
  auto rep = estimate_alpha(cor, fam, {1, 5, 8, 16, 24});
  EXPECT_EQ(rep.exact, 0);
  EXPECT_EQ(rep.caveat, std::string(kEstimateCaveat));
}

TEST(Alpha, ZeroTimeIsDegenerate) {
  auto c = realize(presets::odometer(10));
  Correlator cor(c);
  TestFamily fam{3, {LevelSet::range(3, 0, 2)}, "one set"};
  auto rep = estimate_alpha(cor, fam, {0});
  EXPECT_TRUE(rep.degenerate);
  EXPECT_EQ(rep.exact, 1);
  EXPECT_GT(rep.raw, 1);
}

TEST(Alpha, EmptyRange) {
  auto c = realize(presets::chacon(4));
  Correlator cor(c);
  EXPECT_EQ(error_of([&] { estimate_alpha(cor, default_family(c, 1), {}); }),
            ErrorClass::kEmptyRange);
}

TEST(Alpha, OrnsteinLocked) {
  auto c = realize(presets::ornstein(5));
  Correlator cor(c);
  const std::vector<std::int64_t> times{8379, 7199, 5016, 7474, 7827, 3327};
  auto fam = default_family(c, 1, 3);
  ScanOptions opts;
  opts.top_stage = 5;
  auto rep = estimate_alpha(cor, fam, times, opts);
  EXPECT_EQ(rep.exact, Rational(BigInt(745174923), BigInt(1099511627776LL)));
  ASSERT_EQ(rep.witness_time, 7474);

  // Recompute the witness time from the orbit oracle.
  std::optional<Rational> best;
  const Rational err = correlation_error_bound(c, 7474, 5);
  for (const auto& a : fam.sets) {
    for (const auto& b : fam.sets) {
      const Rational r =
          (orbit_oracle_correlation(c, a, b, 7474, 5) - err) / (a.measure(c) * b.measure(c));
      if (!best || r < *best) best = r;
    }
  }
  EXPECT_EQ(*best, rep.raw);
}

TEST(Alpha, Monotone) {
  auto c = realize(presets::katok(5, {.q = 2, .bound = 3, .seed = 4}));
  Correlator cor(c);
  auto fam = default_family(c, 2, 16);
  auto small = fam;
  small.sets.resize(6);
  std::vector<std::int64_t> t1{40, 61, 77};
  std::vector<std::int64_t> t2{40, 61, 77, 90, 123};
  auto a1 = estimate_alpha(cor, fam, t1);
  EXPECT_LE(estimate_alpha(cor, fam, t2).raw, a1.raw);
  EXPECT_LE(a1.raw, estimate_alpha(cor, small, t1).raw);
  auto r1 = estimate_rho(cor, fam, t1);
  EXPECT_GE(estimate_rho(cor, fam, t2).raw, r1.raw);
}

TEST(Rho, OdometerRigidAtTowerHeight) {
  auto c = realize(presets::odometer(14));
  Correlator cor(c);
  auto rep = estimate_rho(cor, default_family(c, 3), {3, c.height_i64(3)});
  EXPECT_EQ(rep.exact, 1);
  EXPECT_EQ(rep.witness_time, c.height_i64(3));
}

TEST(Rho, ChaconLocked) {
  auto c = realize(presets::chacon(8));
  Correlator cor(c);
  const auto fam = default_family(c, 2);
  const std::vector<std::int64_t> times{c.height_i64(2), c.height_i64(3), c.height_i64(4)};
  auto rep = estimate_rho(cor, fam, times);
  EXPECT_EQ(rep.exact, Rational(490, 729));

  Rational best = -1;
  for (auto n : times) {
    const auto K = default_top_stage(c, 2, n);
    const Rational err = correlation_error_bound(c, n, K);
    std::optional<Rational> worst;
    for (const auto& a : fam.sets) {
      const Rational r = (orbit_oracle_correlation(c, a, a, n, K) + err) / a.measure(c);
      if (!worst || r < *worst) worst = r;
    }
    best = std::max(best, *worst);
  }
  EXPECT_EQ(best, rep.raw);
}

TEST(Rho, PositiveTimesOnly) {
  auto c = realize(presets::chacon(5));
  Correlator cor(c);
  EXPECT_EQ(error_of([&] { estimate_rho(cor, default_family(c, 1), {0, 4}); }),
            ErrorClass::kInvalidArgument);
}

TEST(Mild, OdometerFlagsEverySet) {
  auto c = realize(presets::odometer(14));
  Correlator cor(c);
  auto rep = mild_mixing_audit(cor, default_family(c, 3), {c.height_i64(3)});
  EXPECT_EQ(rep.flagged(), rep.entries.size());
}

TEST(Mild, OrnsteinNoFlagsAtRandomTimes) {
  auto c = realize(presets::ornstein(4));
  Correlator cor(c);
  auto rep = mild_mixing_audit(cor, default_family(c, 1), random_times(c, 2, 3, 16, 1));
  EXPECT_EQ(rep.flagged(), 0u);
}

TEST(Mild, ProductProjection) {
  auto o = realize(presets::ornstein(4));
  auto d = realize(presets::odometer(12));
  Correlator co(o), cd(d);
  const auto times = random_times(o, 2, 3, 6, 3);
  auto rep = product_mild_mixing_audit({&co, &co}, {default_family(o, 1, 8), default_family(o, 1, 8)},
                                       times);
  EXPECT_EQ(rep.product.flagged(), 0u);
  EXPECT_TRUE(rep.projection_consistent);

  auto rig = product_mild_mixing_audit({&cd, &cd}, {default_family(d, 2, 4), default_family(d, 2, 4)},
                                       {d.height_i64(2)});
  EXPECT_EQ(rig.product.flagged(), rig.product.entries.size());
  EXPECT_TRUE(rig.projection_consistent);
}

TEST(Beta, Coverage) {
  EXPECT_EQ(beta_lower_bound(realize(presets::odometer(8)), 5).exact, 1);
  const std::size_t J = 9;
  auto c = realize(presets::chacon(J));
  const Rational top = 1 - Rational(BigInt(1), boost::multiprecision::pow(BigInt(3), static_cast<unsigned>(J + 1)));
  BigInt p = 3;
  for (std::size_t j = 0; j <= J; ++j) {
    EXPECT_EQ(beta_lower_bound(c, j).exact, (1 - Rational(BigInt(1), p)) / top);
    p *= 3;
  }
}

TEST(Beta, FlatPartTrend) {
  auto c = realize(presets::ornstein(5, {.cuts = 16, .epsilon = 0.25, .flat_value = 1, .bound = 3, .seed = 7}));
  double prev = 0.0;
  for (std::size_t j = 0; j < c.max_stage(); ++j) {
    const double v = flat_part_coverage(c, j).value();
    EXPECT_GT(v, prev);
    EXPECT_LE(v, 0.75);
    prev = v;
  }
  EXPECT_NEAR(prev, 0.75, 0.01);
}

TEST(Beta, KatokSquareTrend) {
  auto c = realize(presets::katok(6, {.q = 2, .bound = 2, .seed = 1}));
  double prev = 0.0;
  for (std::size_t j = 0; j < c.max_stage(); ++j) {
    const double v = tensor_square_block_coverage(c, j).value();
    EXPECT_GT(v, prev);
    EXPECT_LE(v, 1.0 / 9.0);
    prev = v;
  }
}

TEST(ProductTower, PairedDisjointness) {
  auto c = realize(presets::ornstein(4, {.cuts = 5, .epsilon = 0.6, .flat_value = 1, .bound = 3, .seed = 2}));
  auto t = pair_with_offset_one(c, presets::paired_cuts(c));
  for (std::size_t j = 0; j <= c.max_stage() && c.height(j) <= 1000; ++j) {
    auto rep = product_beta_tower(c, t, j);
    EXPECT_TRUE(rep.disjoint) << j;
    EXPECT_EQ(rep.height, c.height_i64(j) * (c.height_i64(j) + 1));
    EXPECT_EQ(rep.coverage.exact, c.coverage(j) * t.coverage(j));
  }
  EXPECT_EQ(error_of([&] { product_beta_tower(c, c, 1); }), ErrorClass::kNotPaired);
}

TEST(ProductCorrelation, SingleFactorAndOracle) {
  auto a = realize(presets::chacon(5));
  auto b = realize(presets::katok(4, {.q = 1, .bound = 2, .seed = 9}));
  Correlator ca(a), cb(b);
  const auto A1 = LevelSet::range(1, 0, 2), B1 = LevelSet::of(1, {1, 3});
  const auto A2 = LevelSet::range(1, 1, 3), B2 = LevelSet::single(1, 0);
  auto single = product_correlation({&ca}, {A1}, {B1}, 5, {3});
  auto direct = ca.correlation(A1, B1, 5, 3);
  EXPECT_EQ(single.value, direct.value);
  EXPECT_EQ(single.error_bound, direct.error_bound);

  for (std::int64_t n : {-7, 0, 3, 11}) {
    auto p = product_correlation({&ca, &cb}, {A1, A2}, {B1, B2}, n, {3, 3});
    EXPECT_EQ(p.value, ca.correlation(A1, B1, n, 3).value * cb.correlation(A2, B2, n, 3).value);
    EXPECT_EQ(p.value, product_orbit_oracle({&a, &b}, {A1, A2}, {B1, B2}, n, {3, 3}));
  }
}

TEST(ProductAlpha, GridFactorizes) {
  auto a = realize(presets::ornstein(4, {.cuts = 6, .epsilon = 1.0, .bound = 3, .seed = 3}));
  Correlator ca(a);
  const auto fam = default_family(a, 1, 4);
  const std::vector<std::int64_t> times{40, 55, 71, 90};
  auto rep = product_alpha({&ca, &ca}, {fam, fam}, {times, times});
  EXPECT_EQ(rep.grid.exact, rep.factors[0].exact * rep.factors[1].exact);
  ASSERT_TRUE(rep.diagonal.has_value());
  EXPECT_GE(rep.diagonal->exact, rep.grid.exact);
  auto alone = estimate_alpha(ca, fam, times);
  EXPECT_EQ(rep.factors[0].exact, alone.exact);
}
