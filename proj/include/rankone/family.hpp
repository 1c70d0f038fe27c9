#pragma once

// Finite families of test sets and their pairwise correlation tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rankone/errors.hpp"
#include "rankone/operators.hpp"
#include "rankone/symbolic.hpp"

namespace rankone {

struct TestFamily {
  std::size_t stage = 0;
  std::vector<LevelSet> sets;
  std::string descriptor;
};

inline void check_family(const Construction& c, const TestFamily& f) {
  if (f.sets.empty()) throw Error(ErrorClass::kInvalidArgument, "empty test family");
  for (const auto& s : f.sets) {
    if (s.stage != f.stage) {
      throw Error(ErrorClass::kStageMismatch, "test set outside the family stage");
    }
    if (s.empty()) throw Error(ErrorClass::kInvalidArgument, "test set of measure zero");
    check_level_set(c, s);
  }
}

/// Dyadic blocks of levels, coarsest first, ending with single levels; at
/// most `cap` sets.
inline TestFamily default_family(const Construction& c, std::size_t j,
                                 std::size_t cap = 64) {
  const std::int64_t h = c.height_i64(j);
  TestFamily f{j, {}, "dyadic"};
  std::int64_t w = 1;
  while (w * 2 <= h) w *= 2;
  for (; w >= 1 && f.sets.size() < cap; w /= 2) {
    for (std::int64_t lo = 0; lo + w <= h && f.sets.size() < cap; lo += w) {
      f.sets.push_back(LevelSet::range(j, lo, lo + w));
    }
  }
  f.descriptor = "dyadic(stage=" + std::to_string(j) + ",sets=" +
                 std::to_string(f.sets.size()) + ")";
  return f;
}

/// Pair counts for every (A, B) in a family at one time.
class FamilyTable {
 public:
  FamilyTable(const CorrelationMatrix& m, const TestFamily& f)
      : size_(f.sets.size()), counts_(size_ * size_, Count(0)) {
    std::vector<Count> col(m.levels);
    for (std::size_t b = 0; b < size_; ++b) {
      std::fill(col.begin(), col.end(), Count(0));
      for (auto s : f.sets[b].indices) {
        for (std::size_t t = 0; t < m.levels; ++t) {
          col[t] += m.count(t, static_cast<std::size_t>(s));
        }
      }
      for (std::size_t a = 0; a < size_; ++a) {
        Count sum = 0;
        for (auto t : f.sets[a].indices) sum += col[static_cast<std::size_t>(t)];
        counts_[a * size_ + b] = sum;
      }
    }
  }

  /// Positions with source in set b and target in set a.
  const Count& count(std::size_t a, std::size_t b) const {
    return counts_[a * size_ + b];
  }

 private:
  std::size_t size_;
  std::vector<Count> counts_;
};

/// min over family pairs of (value - errorBound) / (mu(A) mu(B)) at time n,
/// unclamped.
inline Rational pessimistic_mixing_ratio(const Correlator& cor, const TestFamily& fam,
                                         std::int64_t n, std::size_t K) {
  const auto m = markov_matrix(cor, fam.stage, n, K);
  const FamilyTable table(m, fam);
  const Rational mb2 = m.level_measure * m.level_measure;
  std::optional<Rational> best;
  for (std::size_t a = 0; a < fam.sets.size(); ++a) {
    for (std::size_t b = 0; b < fam.sets.size(); ++b) {
      const Rational v = to_rational(table.count(a, b)) * m.top_measure - m.error_bound;
      const Rational r =
          v / (Rational(static_cast<long long>(fam.sets[a].size() * fam.sets[b].size())) * mb2);
      if (!best || r < *best) best = r;
    }
  }
  return *best;
}

}  // namespace rankone
