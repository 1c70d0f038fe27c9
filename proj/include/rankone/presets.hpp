#pragma once

// Named construction families.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "rankone/construction.hpp"

namespace rankone::presets {

/// Zero spacers: h_j = r^j.
inline ConstructionParams odometer(std::size_t stages, std::int64_t cuts = 2) {
  return repeat_stage(StagePlan{cuts, Flat{0}}, stages);
}

/// Three columns, one spacer on the middle one.
inline ConstructionParams chacon(std::size_t stages) {
  return repeat_stage(StagePlan{3, Pattern{{0, 1, 0}}}, stages);
}

struct OrnsteinOptions {
  std::int64_t cuts = 16;
  /// Fraction of stochastic columns; the remaining 1 - epsilon are flat.
  double epsilon = 1.0;
  std::int64_t flat_value = 1;
  std::int64_t bound = 3;
  std::uint64_t seed = 1;
};

inline std::int64_t flat_columns(const OrnsteinOptions& o) {
  return static_cast<std::int64_t>(
      std::llround((1.0 - o.epsilon) * static_cast<double>(o.cuts)));
}

/// Flat block followed by independent uniform spacers on {0..bound}.
inline ConstructionParams ornstein(std::size_t stages,
                                   const OrnsteinOptions& o = {}) {
  ConstructionParams p;
  p.max_stage = stages;
  for (std::size_t j = 0; j < stages; ++j) {
    p.stages.push_back(StagePlan{
        o.cuts, FlatThenStochastic{flat_columns(o), o.flat_value, o.bound,
                                   o.seed}});
  }
  return p;
}

struct KatokOptions {
  std::int64_t q = 2;
  /// When positive, q_j = max(q, ceil(q_factor * h_j)).
  double q_factor = 0.0;
  std::int64_t bound = 2;
  std::uint64_t seed = 1;
  std::int64_t max_q = std::int64_t{1} << 20;
};

/// Stochastic block, then q zero-spacer columns, then q one-spacer columns.
/// Growing q_j needs the realized heights, so the plan is built stage by stage.
inline ConstructionParams katok(std::size_t stages, const KatokOptions& o = {}) {
  ConstructionParams p;
  p.max_stage = 0;
  BigInt h = 1;
  for (std::size_t j = 0; j < stages; ++j) {
    std::int64_t q = o.q;
    if (o.q_factor > 0.0) {
      const double want = std::ceil(o.q_factor * h.convert_to<double>());
      if (want > static_cast<double>(o.max_q)) break;
      q = std::max<std::int64_t>(q, static_cast<std::int64_t>(want));
    }
    StagePlan sp{3 * q, KatokMixed{q, o.bound, o.seed}};
    const auto s = expand_spacers(sp.spacers, j, sp.cuts);
    BigInt total = 0;
    for (auto v : s) total += v;
    h = BigInt(sp.cuts) * h + total;
    p.stages.push_back(std::move(sp));
    ++p.max_stage;
  }
  return p;
}

/// Stages whose cut counts follow r_j = max(min_cuts, factor * h_j^3), stopping
/// before a height passes `height_guard` or a cut count passes `max_columns`.
struct CubicOptions {
  double epsilon = 0.5;
  std::int64_t flat_value = 1;
  std::int64_t bound = 3;
  std::uint64_t seed = 1;
  std::int64_t factor = 1;
  std::int64_t min_cuts = 4;
  BigInt height_guard = BigInt("1000000000000000000");
  std::int64_t max_columns = std::int64_t{1} << 22;
};

inline ConstructionParams cubic_regime(std::size_t max_stages,
                                       const CubicOptions& o = {}) {
  ConstructionParams p;
  p.max_stage = 0;
  BigInt h = 1;
  for (std::size_t j = 0; j < max_stages; ++j) {
    const BigInt want = BigInt(o.factor) * h * h * h;
    if (want > o.max_columns) break;
    const auto r = std::max(o.min_cuts, want.convert_to<std::int64_t>());
    const auto flat = static_cast<std::int64_t>(
        std::llround((1.0 - o.epsilon) * static_cast<double>(r)));
    StagePlan sp{r, FlatThenStochastic{flat, o.flat_value, o.bound, o.seed}};
    const auto s = expand_spacers(sp.spacers, j, sp.cuts);
    BigInt total = 0;
    for (auto v : s) total += v;
    BigInt next = BigInt(r) * h + total;
    if (next > o.height_guard) break;
    h = std::move(next);
    p.stages.push_back(std::move(sp));
    ++p.max_stage;
  }
  return p;
}

/// Cut counts r~_j = r_j + delta for the offset-one companion.
inline std::vector<std::int64_t> paired_cuts(const Construction& c,
                                             std::int64_t delta = 0) {
  std::vector<std::int64_t> out;
  for (std::size_t j = 0; j < c.max_stage(); ++j) out.push_back(c.cuts(j) + delta);
  return out;
}

}  // namespace rankone::presets
