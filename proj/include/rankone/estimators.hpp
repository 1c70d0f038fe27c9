#pragma once

// Finite-scan estimates of the partial mixing constant alpha, the partial
// rigidity constant rho, the local rank beta, and mild-mixing audits.
//
// liminf and limsup are replaced by min and max over the scanned times. alpha
// uses value - errorBound and rho uses value + errorBound, so each estimate
// errs against the property it reports.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rankone/construction.hpp"
#include "rankone/errors.hpp"
#include "rankone/family.hpp"
#include "rankone/joinings.hpp"
#include "rankone/numeric.hpp"
#include "rankone/parallel.hpp"
#include "rankone/symbolic.hpp"

namespace rankone {

inline constexpr const char* kEstimateCaveat =
    "finite-scan estimate of an asymptotic quantity";

struct EstimateReport {
  std::string quantity;  ///< alpha, rho, beta or mild
  Rational exact;        ///< reported value, clamped to [0, 1]
  Rational raw;          ///< before clamping
  std::string scan_range;
  std::string family;
  std::string caveat = kEstimateCaveat;
  bool degenerate = false;  ///< raw fell outside [0, 1]
  std::optional<std::int64_t> witness_time;

  double value() const { return to_double(exact); }
};

inline EstimateReport make_report(std::string quantity, Rational raw,
                                  std::string scan_range, std::string family) {
  EstimateReport r;
  r.quantity = std::move(quantity);
  r.exact = raw;
  r.raw = std::move(raw);
  r.scan_range = std::move(scan_range);
  r.family = std::move(family);
  return r;
}

struct ScanOptions {
  std::optional<std::size_t> top_stage;  ///< fixed K; default per-time policy
  unsigned threads = 1;
};

inline std::string describe_times(const std::vector<std::int64_t>& times) {
  if (times.empty()) return "{}";
  auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  return "{" + std::to_string(times.size()) + " times in [" + std::to_string(*lo) +
         ", " + std::to_string(*hi) + "]}";
}

namespace detail {

inline Rational clamp01(const Rational& r) {
  if (r < 0) return 0;
  if (r > 1) return 1;
  return r;
}

inline std::size_t scan_stage(const Construction& c, std::size_t j, std::int64_t n,
                              const ScanOptions& opts) {
  return opts.top_stage ? *opts.top_stage : default_top_stage(c, j, n);
}

inline void require_times(const std::vector<std::int64_t>& times) {
  if (times.empty()) throw Error(ErrorClass::kEmptyRange, "empty scan range");
}

}  // namespace detail

/// min over n and (A, B) of (value - errorBound) / (mu(A) mu(B)).
inline EstimateReport estimate_alpha(const Correlator& cor, const TestFamily& fam,
                                     const std::vector<std::int64_t>& times,
                                     const ScanOptions& opts = {}) {
  detail::require_times(times);
  check_family(cor.construction(), fam);
  const auto ratios = parallel_map(times.size(), opts.threads, [&](std::size_t i) {
    return pessimistic_mixing_ratio(
        cor, fam, times[i], detail::scan_stage(cor.construction(), fam.stage, times[i], opts));
  });
  EstimateReport rep = make_report("alpha", ratios[0], describe_times(times), fam.descriptor);
  rep.witness_time = times[0];
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    if (ratios[i] < rep.raw) {
      rep.raw = ratios[i];
      rep.witness_time = times[i];
    }
  }
  rep.exact = detail::clamp01(rep.raw);
  rep.degenerate = rep.raw > 1;
  return rep;
}

/// Per-time, per-set rigidity ratios (value + errorBound) / mu(A), or value /
/// mu(A) when `optimistic` is false.
inline std::vector<Rational> rigidity_ratios(const Correlator& cor, const TestFamily& fam,
                                             std::int64_t n, std::size_t K,
                                             bool optimistic) {
  const auto m = markov_matrix(cor, fam.stage, n, K);
  const FamilyTable table(m, fam);
  std::vector<Rational> out;
  for (std::size_t a = 0; a < fam.sets.size(); ++a) {
    Rational v = to_rational(table.count(a, a)) * m.top_measure;
    if (optimistic) v += m.error_bound;
    out.push_back(v / (Rational(static_cast<long long>(fam.sets[a].size())) * m.level_measure));
  }
  return out;
}

/// max over n >= 1 of min over A of (value + errorBound) / mu(A).
inline EstimateReport estimate_rho(const Correlator& cor, const TestFamily& fam,
                                   const std::vector<std::int64_t>& times,
                                   const ScanOptions& opts = {}) {
  detail::require_times(times);
  check_family(cor.construction(), fam);
  for (auto n : times) {
    if (n < 1) throw Error(ErrorClass::kInvalidArgument, "rho scans times n >= 1 only");
  }
  const auto mins = parallel_map(times.size(), opts.threads, [&](std::size_t i) {
    const auto r = rigidity_ratios(
        cor, fam, times[i], detail::scan_stage(cor.construction(), fam.stage, times[i], opts),
        true);
    return *std::min_element(r.begin(), r.end());
  });
  EstimateReport rep = make_report("rho", mins[0], describe_times(times), fam.descriptor);
  rep.witness_time = times[0];
  for (std::size_t i = 1; i < mins.size(); ++i) {
    if (mins[i] > rep.raw) {
      rep.raw = mins[i];
      rep.witness_time = times[i];
    }
  }
  rep.exact = detail::clamp01(rep.raw);
  rep.degenerate = rep.raw > 1;
  return rep;
}

struct MildMixingEntry {
  std::size_t set = 0;   ///< index into the family
  Rational sup;          ///< max over times of value / mu(A)
  std::int64_t time = 0;
  bool rigid_suspect = false;
};

struct MildMixingReport {
  double threshold = 0.0;
  std::string scan_range;
  std::string family;
  std::string caveat = kEstimateCaveat;
  std::vector<MildMixingEntry> entries;

  std::size_t flagged() const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [](const auto& e) { return e.rigid_suspect; }));
  }
};

inline constexpr double kDefaultMildThreshold = 0.1;

/// Flags A when sup_n value / mu(A) > 1 - threshold.
inline MildMixingReport mild_mixing_audit(const Correlator& cor, const TestFamily& fam,
                                          const std::vector<std::int64_t>& times,
                                          double threshold = kDefaultMildThreshold,
                                          const ScanOptions& opts = {}) {
  detail::require_times(times);
  check_family(cor.construction(), fam);
  for (auto n : times) {
    if (n < 1) throw Error(ErrorClass::kInvalidArgument, "mild-mixing scans n >= 1 only");
  }
  const auto table = parallel_map(times.size(), opts.threads, [&](std::size_t i) {
    return rigidity_ratios(
        cor, fam, times[i], detail::scan_stage(cor.construction(), fam.stage, times[i], opts),
        false);
  });
  MildMixingReport rep;
  rep.threshold = threshold;
  rep.scan_range = describe_times(times);
  rep.family = fam.descriptor;
  const Rational cut = Rational(1) - Rational(threshold);
  for (std::size_t a = 0; a < fam.sets.size(); ++a) {
    MildMixingEntry e{a, table[0][a], times[0]};
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (table[i][a] > e.sup) {
        e.sup = table[i][a];
        e.time = times[i];
      }
    }
    e.rigid_suspect = e.sup > cut;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Local rank

inline EstimateReport beta_lower_bound(const Construction& c, std::size_t j) {
  c.check_stage(j);
  const Rational cov = c.coverage(j);
  return make_report("beta", cov, "stage " + std::to_string(j), "tower");
}

/// Columns in the designated equal-spacer block of stage j: the flat block,
/// Katok's zero block, every column for Flat, else the longest run of equal
/// spacer counts.
inline std::int64_t block_columns(const Construction& c, std::size_t j) {
  if (j >= c.max_stage()) {
    throw Error(ErrorClass::kInvalidArgument, "stage " + std::to_string(j) + " has no cut");
  }
  const auto& plan = c.params().stages[j].spacers;
  if (const auto* k = std::get_if<KatokMixed>(&plan)) return k->q;
  if (const auto* f = std::get_if<FlatThenStochastic>(&plan)) return f->flat_columns;
  if (std::holds_alternative<Flat>(plan)) return c.cuts(j);
  const auto& s = c.spacers(j);
  std::int64_t best = 0, run = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    run = (i > 0 && s[i] == s[i - 1]) ? run + 1 : 1;
    best = std::max(best, run);
  }
  return best;
}

/// coverage_j * block / r_j: the part of tower j that the equal-spacer block
/// restacks into one taller tower.
inline EstimateReport flat_part_coverage(const Construction& c, std::size_t j) {
  const Rational v = c.coverage(j) * Rational(block_columns(c, j), c.cuts(j));
  return make_report("beta", v, "stage " + std::to_string(j), "flat block");
}

/// Square of flat_part_coverage: the diagonal block of S x S.
inline EstimateReport tensor_square_block_coverage(const Construction& c, std::size_t j) {
  const Rational f = flat_part_coverage(c, j).exact;
  return make_report("beta", f * f, "stage " + std::to_string(j), "flat block squared");
}

struct ProductTowerReport {
  std::size_t stage = 0;
  std::int64_t height = 0;  ///< h_j (h_j + 1)
  bool disjoint = false;
  std::int64_t first_collision = -1;
  EstimateReport coverage;
};

inline constexpr std::int64_t kMaxProductTower = std::int64_t{1} << 26;

/// Checks that (T x T~)^k (B_j x B~_j), k < h_j h~_j, occupy distinct level
/// pairs (k mod h_j, k mod h~_j); coverage is the product of coverages.
inline ProductTowerReport product_beta_tower(const Construction& s, const Construction& t,
                                             std::size_t j) {
  s.check_stage(j);
  t.check_stage(j);
  if (t.height(j) != s.height(j) + 1) {
    throw Error(ErrorClass::kNotPaired, "stage " + std::to_string(j) +
                                            " heights do not differ by one");
  }
  const std::int64_t h = s.height_i64(j);
  const std::int64_t g = h + 1;
  if (h > kMaxProductTower / g) {
    throw Error(ErrorClass::kBudgetExceeded, "product tower too tall to enumerate");
  }
  ProductTowerReport rep;
  rep.stage = j;
  rep.height = h * g;
  std::vector<bool> seen(static_cast<std::size_t>(rep.height), false);
  rep.disjoint = true;
  for (std::int64_t k = 0; k < rep.height; ++k) {
    const auto cell = static_cast<std::size_t>((k % h) * g + (k % g));
    if (seen[cell]) {
      rep.disjoint = false;
      rep.first_collision = k;
      break;
    }
    seen[cell] = true;
  }
  const Rational cov = s.coverage(j) * t.coverage(j);
  rep.coverage = make_report("beta", cov, "stage " + std::to_string(j), "product tower");
  return rep;
}

// ---------------------------------------------------------------------------
// Products

/// Product of factor correlations; errorBound = prod(v + e) - prod(v).
inline Bounded product_correlation(const std::vector<const Correlator*>& factors,
                                   const std::vector<LevelSet>& a,
                                   const std::vector<LevelSet>& b, std::int64_t n,
                                   const std::vector<std::size_t>& K) {
  if (factors.empty() || a.size() != factors.size() || b.size() != factors.size() ||
      K.size() != factors.size()) {
    throw Error(ErrorClass::kInvalidArgument, "one rectangle side and stage per factor");
  }
  Rational v = 1, hi = 1;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto c = factors[i]->correlation(a[i], b[i], n, K[i]);
    v *= c.value;
    hi *= c.value + c.error_bound;
  }
  return Bounded{v, hi - v};
}

inline Bounded product_correlation(const std::vector<const Correlator*>& factors,
                                   const std::vector<LevelSet>& a,
                                   const std::vector<LevelSet>& b, std::int64_t n) {
  std::vector<std::size_t> K;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    K.push_back(default_top_stage(factors[i]->construction(), a.at(i).stage, n));
  }
  return product_correlation(factors, a, b, n, K);
}

/// Brute force over pairs of tower-K positions of every factor; tower K of
/// each factor must be at most `guard` tall.
inline Rational product_orbit_oracle(const std::vector<const Construction*>& factors,
                                     const std::vector<LevelSet>& a,
                                     const std::vector<LevelSet>& b, std::int64_t n,
                                     const std::vector<std::size_t>& K,
                                     std::int64_t guard = 10000) {
  if (factors.empty() || a.size() != factors.size() || b.size() != factors.size() ||
      K.size() != factors.size()) {
    throw Error(ErrorClass::kInvalidArgument, "one rectangle side and stage per factor");
  }
  // Per factor: positions i with label(i) in B and label(i + n) in A.
  std::vector<std::vector<char>> hit;
  Rational scale = 1;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    const Construction& c = *factors[f];
    c.check_stage(K[f]);
    if (c.height(K[f]) > guard) {
      throw Error(ErrorClass::kBudgetExceeded, "tower too tall for the product oracle");
    }
    if (c.height(K[f]) <= std::llabs(n)) {
      throw Error(ErrorClass::kShiftTooLarge, "shift exceeds tower height");
    }
    const TowerAddress addr(c, a[f].stage, K[f]);
    const std::int64_t h = c.height_i64(K[f]);
    std::vector<char> row(static_cast<std::size_t>(h), 0);
    for (std::int64_t i = 0; i < h; ++i) {
      const std::int64_t t = i + n;
      if (t < 0 || t >= h) continue;
      const auto src = addr.label(i), dst = addr.label(t);
      row[static_cast<std::size_t>(i)] =
          src != kSpacer && dst != kSpacer && b[f].contains(src) && a[f].contains(dst);
    }
    hit.push_back(std::move(row));
    scale *= c.level_measure(K[f]);
  }
  // Walk the product of position sets.
  BigInt count = 0;
  std::vector<std::size_t> idx(factors.size(), 0);
  for (;;) {
    bool all = true;
    for (std::size_t f = 0; f < factors.size() && all; ++f) all = hit[f][idx[f]] != 0;
    if (all) ++count;
    std::size_t f = 0;
    while (f < factors.size() && ++idx[f] == hit[f].size()) idx[f++] = 0;
    if (f == factors.size()) break;
  }
  return Rational(count) * scale;
}

struct ProductAlphaReport {
  EstimateReport grid;      ///< min over the Cartesian grid of factor times
  std::optional<EstimateReport> diagonal;  ///< min over common times n
  std::vector<EstimateReport> factors;
};

namespace detail {

/// Per factor and time: clamped pessimistic ratio for every ordered pair.
inline std::vector<std::vector<Rational>> clamped_pair_ratios(
    const Correlator& cor, const TestFamily& fam, const std::vector<std::int64_t>& times,
    const ScanOptions& opts) {
  return parallel_map(times.size(), opts.threads, [&](std::size_t i) {
    const auto K = scan_stage(cor.construction(), fam.stage, times[i], opts);
    const auto m = markov_matrix(cor, fam.stage, times[i], K);
    const FamilyTable table(m, fam);
    const Rational mb2 = m.level_measure * m.level_measure;
    std::vector<Rational> out;
    for (std::size_t a = 0; a < fam.sets.size(); ++a) {
      for (std::size_t b = 0; b < fam.sets.size(); ++b) {
        const Rational v = to_rational(table.count(a, b)) * m.top_measure - m.error_bound;
        out.push_back(clamp01(
            v / (Rational(static_cast<long long>(fam.sets[a].size() * fam.sets[b].size())) *
                 mb2)));
      }
    }
    return out;
  });
}

}  // namespace detail

/// alpha_hat of a product over rectangle families, each factor ratio clamped
/// to [0, 1]. The grid form scans every tuple of factor times; the diagonal
/// form scans common times and needs identical ranges.
inline ProductAlphaReport product_alpha(const std::vector<const Correlator*>& factors,
                                        const std::vector<TestFamily>& fams,
                                        const std::vector<std::vector<std::int64_t>>& times,
                                        const ScanOptions& opts = {}) {
  if (factors.empty() || fams.size() != factors.size() || times.size() != factors.size()) {
    throw Error(ErrorClass::kInvalidArgument, "one family and scan range per factor");
  }
  const std::size_t m = factors.size();
  std::vector<std::vector<std::vector<Rational>>> ratios;  // factor, time, pair
  ProductAlphaReport rep;
  for (std::size_t f = 0; f < m; ++f) {
    detail::require_times(times[f]);
    check_family(factors[f]->construction(), fams[f]);
    ratios.push_back(detail::clamped_pair_ratios(*factors[f], fams[f], times[f], opts));
    EstimateReport e = make_report("alpha", 1, describe_times(times[f]), fams[f].descriptor);
    for (const auto& row : ratios.back()) {
      for (const auto& r : row) e.raw = std::min(e.raw, r);
    }
    e.exact = e.raw;
    rep.factors.push_back(std::move(e));
  }

  // Enumerate rectangle pairs as tuples of factor pair indices.
  auto scan = [&](auto&& time_of) {
    Rational best = 1;
    std::vector<std::size_t> pair(m, 0);
    for (;;) {
      Rational p = 1;
      for (std::size_t f = 0; f < m && p != 0; ++f) p *= time_of(f)[pair[f]];
      best = std::min(best, p);
      std::size_t f = 0;
      while (f < m && ++pair[f] == ratios[f][0].size()) pair[f++] = 0;
      if (f == m) break;
    }
    return best;
  };

  std::string desc;
  for (std::size_t f = 0; f < m; ++f) desc += (f ? " x " : "") + fams[f].descriptor;

  // Grid: every tuple of factor times.
  Rational grid = 1;
  std::vector<std::size_t> t(m, 0);
  for (;;) {
    grid = std::min(grid, scan([&](std::size_t f) -> const std::vector<Rational>& {
      return ratios[f][t[f]];
    }));
    std::size_t f = 0;
    while (f < m && ++t[f] == times[f].size()) t[f++] = 0;
    if (f == m) break;
  }
  rep.grid = make_report("alpha", grid, "grid", desc);

  // Diagonal: only when every factor scans the same times.
  for (std::size_t f = 1; f < m; ++f) {
    if (times[f] != times[0]) return rep;
  }
  Rational diag = 1;
  for (std::size_t i = 0; i < times[0].size(); ++i) {
    diag = std::min(diag, scan([&](std::size_t f) -> const std::vector<Rational>& {
      return ratios[f][i];
    }));
  }
  rep.diagonal = make_report("alpha", diag, describe_times(times[0]), desc);
  return rep;
}

struct ProductMildReport {
  MildMixingReport product;             ///< entries index the Cartesian family
  std::vector<MildMixingReport> factors;
  bool projection_consistent = true;    ///< rigid rectangles project to rigid sets
};

/// Mild-mixing audit of a product on Cartesian rectangle families at common
/// times, plus the projection check: a rectangle that is rigid at time n must
/// have every factor side rigid at n.
inline ProductMildReport product_mild_mixing_audit(
    const std::vector<const Correlator*>& factors, const std::vector<TestFamily>& fams,
    const std::vector<std::int64_t>& times, double threshold = kDefaultMildThreshold,
    const ScanOptions& opts = {}) {
  if (factors.empty() || fams.size() != factors.size()) {
    throw Error(ErrorClass::kInvalidArgument, "one family per factor");
  }
  detail::require_times(times);
  const std::size_t m = factors.size();
  std::vector<std::vector<std::vector<Rational>>> ratios;  // factor, time, set
  ProductMildReport rep;
  for (std::size_t f = 0; f < m; ++f) {
    check_family(factors[f]->construction(), fams[f]);
    rep.factors.push_back(mild_mixing_audit(*factors[f], fams[f], times, threshold, opts));
    ratios.push_back(parallel_map(times.size(), opts.threads, [&](std::size_t i) {
      return rigidity_ratios(*factors[f], fams[f], times[i],
                             detail::scan_stage(factors[f]->construction(), fams[f].stage,
                                                times[i], opts),
                             false);
    }));
  }
  std::string desc;
  for (std::size_t f = 0; f < m; ++f) desc += (f ? " x " : "") + fams[f].descriptor;
  rep.product.threshold = threshold;
  rep.product.scan_range = describe_times(times);
  rep.product.family = desc;
  const Rational cut = Rational(1) - Rational(threshold);

  std::vector<std::size_t> idx(m, 0);
  for (std::size_t flat = 0;; ++flat) {
    MildMixingEntry e{flat, -1, times[0]};
    for (std::size_t i = 0; i < times.size(); ++i) {
      Rational p = 1;
      for (std::size_t f = 0; f < m; ++f) p *= ratios[f][i][idx[f]];
      if (p > e.sup) {
        e.sup = p;
        e.time = times[i];
      }
    }
    e.rigid_suspect = e.sup > cut;
    if (e.rigid_suspect) {
      const auto at = static_cast<std::size_t>(
          std::find(times.begin(), times.end(), e.time) - times.begin());
      for (std::size_t f = 0; f < m; ++f) {
        if (!(ratios[f][at][idx[f]] > cut)) rep.projection_consistent = false;
      }
    }
    rep.product.entries.push_back(std::move(e));
    std::size_t f = 0;
    while (f < m && ++idx[f] == fams[f].sets.size()) idx[f++] = 0;
    if (f == m) break;
  }
  return rep;
}

}  // namespace rankone
