#pragma once

// Tower names and correlations.
//
// The name of tower K over tower j lists, for every level of tower K from the
// bottom, the stage-j level it lies in (or kSpacer when it lies outside U_j).
// A level set A at stage j is a union of stage-j levels, so
//
//     mu(A ∩ T^n B) = mu(B_K) * #{i : name[i] ∈ B, name[i+n] ∈ A} + (top wrap)
//
// where the wrap term is the mass of B points pushed past the top (or below
// the bottom) of tower K, at most |n| * mu(B_K).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rankone/construction.hpp"
#include "rankone/errors.hpp"
#include "rankone/numeric.hpp"

namespace rankone {

using Symbol = std::int32_t;
inline constexpr Symbol kSpacer = -1;

// ---------------------------------------------------------------------------
// Level sets

/// Union of stage-j levels, by level index.
struct LevelSet {
  std::size_t stage = 0;
  std::vector<std::int64_t> indices;  // sorted, distinct

  static LevelSet of(std::size_t stage, std::vector<std::int64_t> idx) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return LevelSet{stage, std::move(idx)};
  }
  static LevelSet single(std::size_t stage, std::int64_t level) {
    return LevelSet{stage, {level}};
  }
  /// Levels [lo, hi).
  static LevelSet range(std::size_t stage, std::int64_t lo, std::int64_t hi) {
    LevelSet s{stage, {}};
    for (auto l = lo; l < hi; ++l) s.indices.push_back(l);
    return s;
  }

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }

  bool contains(std::int64_t l) const {
    return std::binary_search(indices.begin(), indices.end(), l);
  }

  Rational measure(const Construction& c) const {
    return Rational(static_cast<long long>(indices.size())) *
           c.level_measure(stage);
  }

  friend bool operator==(const LevelSet&, const LevelSet&) = default;
};

/// All levels of tower j (the set U_j).
inline LevelSet full_tower(const Construction& c, std::size_t j) {
  return LevelSet::range(j, 0, c.height_i64(j));
}

inline LevelSet intersect(const LevelSet& a, const LevelSet& b) {
  LevelSet out{a.stage, {}};
  std::set_intersection(a.indices.begin(), a.indices.end(), b.indices.begin(),
                        b.indices.end(), std::back_inserter(out.indices));
  return out;
}

inline void check_level_set(const Construction& c, const LevelSet& s) {
  c.check_stage(s.stage);
  const auto h = c.height_i64(s.stage);
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    const auto l = s.indices[i];
    if (l < 0 || l >= h || (i > 0 && s.indices[i - 1] >= l)) {
      throw Error(ErrorClass::kInvalidArgument,
                  "level set at stage " + std::to_string(s.stage) +
                      " must hold sorted distinct levels in [0, h_j)");
    }
  }
}

// ---------------------------------------------------------------------------
// Materialized names

struct TowerName {
  std::size_t base_stage = 0;
  std::size_t top_stage = 0;
  std::vector<Symbol> symbols;
};

/// Appends `count` copies of `block`, copy i followed by spacers[i] spacers.
inline void append_columns(std::vector<Symbol>& out,
                           std::span<const Symbol> block,
                           std::span<const std::int64_t> spacers) {
  for (auto s : spacers) {
    out.insert(out.end(), block.begin(), block.end());
    out.insert(out.end(), static_cast<std::size_t>(s), kSpacer);
  }
}

/// name(j, K), fully materialized. BudgetExceeded when h_K > guard.
inline TowerName materialize_tower_name(const Construction& c, std::size_t j,
                                        std::size_t K, std::int64_t guard) {
  c.check_stage(K);
  if (j > K) {
    throw Error(ErrorClass::kInvalidArgument, "tower name needs j <= K");
  }
  if (c.height(K) > guard) {
    throw Error(ErrorClass::kBudgetExceeded,
                "h_" + std::to_string(K) + " = " + c.height(K).str() +
                    " exceeds materialization budget " + std::to_string(guard));
  }
  const auto hj = c.height_i64(j);
  if (hj > std::numeric_limits<Symbol>::max()) {
    throw Error(ErrorClass::kBudgetExceeded, "too many levels to label");
  }
  TowerName name{j, K, {}};
  name.symbols.reserve(static_cast<std::size_t>(c.height_i64(K)));
  for (Symbol l = 0; l < hj; ++l) name.symbols.push_back(l);
  for (std::size_t k = j; k < K; ++k) {
    std::vector<Symbol> next;
    next.reserve(static_cast<std::size_t>(c.height_i64(k + 1)));
    append_columns(next, name.symbols, c.spacers(k));
    name.symbols = std::move(next);
  }
  return name;
}

/// Each level of tower j occurs prod_{i=j}^{K-1} r_i times.
inline bool symbol_counts_hold(const Construction& c, const TowerName& name) {
  const auto hj = c.height_i64(name.base_stage);
  std::vector<std::int64_t> seen(static_cast<std::size_t>(hj), 0);
  for (auto s : name.symbols) {
    if (s != kSpacer) ++seen[static_cast<std::size_t>(s)];
  }
  const BigInt want = c.copies(name.base_stage, name.top_stage);
  return std::all_of(seen.begin(), seen.end(),
                     [&](std::int64_t v) { return BigInt(v) == want; });
}

// ---------------------------------------------------------------------------
// Lazy names: per-stage prefix and suffix windows

/// Keeps, for every stage K >= j, either the full name (h_K <= window) or its
/// first and last `window` symbols. Immutable after construction.
class LazyTowerName {
 public:
  LazyTowerName(const Construction& c, std::size_t j, std::int64_t window)
      : base_stage_(j), window_(window) {
    c.check_stage(j);
    if (window < 1) {
      throw Error(ErrorClass::kInvalidArgument, "window must be positive");
    }
    const auto hj = c.height_i64(j);
    if (hj > std::numeric_limits<Symbol>::max()) {
      throw Error(ErrorClass::kBudgetExceeded, "too many levels to label");
    }
    const auto W = static_cast<std::size_t>(window);
    std::vector<Symbol> ident;
    for (Symbol l = 0; l < hj; ++l) ident.push_back(l);
    stages_.push_back(from_full(std::move(ident)));

    for (std::size_t k = j; k < c.max_stage(); ++k) {
      const Windows& cur = stages_.back();
      const auto& sp = c.spacers(k);
      Windows next;
      if (c.height(k + 1) <= window) {
        std::vector<Symbol> full;
        append_columns(full, cur.prefix, sp);
        next = from_full(std::move(full));
      } else {
        next.full = false;
        if (cur.full) {
          // Prefix: copies from the left until W symbols.
          for (std::size_t col = 0; next.prefix.size() < W; ++col) {
            next.prefix.insert(next.prefix.end(), cur.prefix.begin(),
                               cur.prefix.end());
            if (next.prefix.size() >= W) break;
            next.prefix.insert(next.prefix.end(),
                               std::min(W - next.prefix.size(),
                                        static_cast<std::size_t>(sp[col])),
                               kSpacer);
          }
          next.prefix.resize(W);
          // Suffix: built right to left, reversed at the end.
          std::vector<Symbol> rev;
          for (std::size_t col = sp.size(); rev.size() < W;) {
            --col;
            rev.insert(rev.end(),
                       std::min(W, static_cast<std::size_t>(sp[col])), kSpacer);
            rev.insert(rev.end(), cur.prefix.rbegin(), cur.prefix.rend());
          }
          rev.resize(W);
          next.suffix.assign(rev.rbegin(), rev.rend());
        } else {
          next.prefix = cur.prefix;
          const auto trail = static_cast<std::size_t>(sp.back());
          if (trail >= W) {
            next.suffix.assign(W, kSpacer);
          } else {
            next.suffix.assign(cur.suffix.end() - static_cast<std::ptrdiff_t>(W - trail),
                               cur.suffix.end());
            next.suffix.insert(next.suffix.end(), trail, kSpacer);
          }
        }
      }
      stages_.push_back(std::move(next));
    }
  }

  std::size_t base_stage() const { return base_stage_; }
  std::int64_t window() const { return window_; }
  std::size_t top_stage() const { return base_stage_ + stages_.size() - 1; }

  bool is_full(std::size_t K) const { return at(K).full; }
  /// Full name; requires is_full(K).
  std::span<const Symbol> full(std::size_t K) const { return at(K).prefix; }
  /// First min(len, h_K) symbols, len <= window.
  std::span<const Symbol> prefix(std::size_t K, std::size_t len) const {
    const auto& p = at(K).prefix;
    return std::span<const Symbol>(p).first(std::min(len, p.size()));
  }
  /// Last min(len, h_K) symbols, len <= window.
  std::span<const Symbol> suffix(std::size_t K, std::size_t len) const {
    const auto& w = at(K);
    const auto& s = w.full ? w.prefix : w.suffix;
    return std::span<const Symbol>(s).last(std::min(len, s.size()));
  }

 private:
  struct Windows {
    bool full = true;
    std::vector<Symbol> prefix;  // the whole name when full
    std::vector<Symbol> suffix;  // empty when full
  };

  static Windows from_full(std::vector<Symbol> name) {
    Windows w;
    w.full = true;
    w.prefix = std::move(name);
    return w;
  }

  const Windows& at(std::size_t K) const {
    if (K < base_stage_ || K > top_stage()) {
      throw Error(ErrorClass::kInvalidArgument,
                  "stage " + std::to_string(K) + " outside lazy name range");
    }
    return stages_[K - base_stage_];
  }

  std::size_t base_stage_;
  std::int64_t window_;
  std::vector<Windows> stages_;
};

/// Either a materialized name or a lazy handle, depending on the budget.
using TowerNameHandle =
    std::variant<TowerName, std::shared_ptr<const LazyTowerName>>;

inline TowerNameHandle tower_name(const Construction& c, std::size_t j,
                                  std::size_t K,
                                  std::int64_t guard = std::int64_t{1} << 24,
                                  std::int64_t window = std::int64_t{1} << 16) {
  c.check_stage(K);
  if (c.height(K) <= guard) return materialize_tower_name(c, j, K, guard);
  return std::make_shared<const LazyTowerName>(c, j, window);
}

// ---------------------------------------------------------------------------
// Pair counting
//
// Sinks receive ordered pairs (name[p], name[p + d]) with multiplicity and
// are scaled when a stage is replicated r times.

/// Counts pairs with source in B and target in A. For n >= 0 the source is the
/// earlier position; for n < 0 the later one.
class SetPairSink {
 public:
  SetPairSink(const LevelSet& a, const LevelSet& b, std::int64_t h,
              bool forward)
      : in_a_(static_cast<std::size_t>(h) + 1, 0),
        in_b_(static_cast<std::size_t>(h) + 1, 0),
        forward_(forward) {
    for (auto l : a.indices) in_a_[static_cast<std::size_t>(l) + 1] = 1;
    for (auto l : b.indices) in_b_[static_cast<std::size_t>(l) + 1] = 1;
  }

  void add(Symbol first, Symbol second, const Count& mult = 1) {
    const Symbol src = forward_ ? first : second;
    const Symbol tgt = forward_ ? second : first;
    if (in_b_[static_cast<std::size_t>(src + 1)] &&
        in_a_[static_cast<std::size_t>(tgt + 1)]) {
      count_ += mult;
    }
  }
  void scale(const Count& r) { count_ *= r; }
  const Count& count() const { return count_; }

 private:
  std::vector<char> in_a_, in_b_;
  bool forward_;
  Count count_ = 0;
};

/// Level-by-level transition counts: counts[target][source], with an extra
/// row (index h) for targets on spacer levels.
class LevelPairSink {
 public:
  LevelPairSink(std::int64_t h, bool forward)
      : h_(static_cast<std::size_t>(h)),
        forward_(forward),
        counts_((h_ + 1) * h_, Count(0)) {}

  void add(Symbol first, Symbol second, const Count& mult = 1) {
    const Symbol src = forward_ ? first : second;
    const Symbol tgt = forward_ ? second : first;
    if (src == kSpacer) return;
    const std::size_t row = tgt == kSpacer ? h_ : static_cast<std::size_t>(tgt);
    counts_[row * h_ + static_cast<std::size_t>(src)] += mult;
  }
  void scale(const Count& r) {
    for (auto& v : counts_) v *= r;
  }

  std::size_t levels() const { return h_; }
  std::vector<Count>& counts() { return counts_; }

 private:
  std::size_t h_;
  bool forward_;
  std::vector<Count> counts_;
};

namespace detail {

template <class Sink>
void count_direct(std::span<const Symbol> w, std::size_t d, Sink& sink) {
  if (d >= w.size()) return;
  const std::size_t n = w.size() - d;
  for (std::size_t p = 0; p < n; ++p) {
    if (w[p] == kSpacer && w[p + d] == kSpacer) continue;
    sink.add(w[p], w[p + d]);
  }
}

/// Pairs (p, p + d) of X1 + spacer^gap + X2 with p inside X1 or the gap and
/// p + d beyond X1; X1 has length d.
template <class Sink>
void count_cross(std::span<const Symbol> x1, std::int64_t gap,
                 std::span<const Symbol> x2, std::size_t d, const Count& mult,
                 Sink& sink) {
  const auto g = static_cast<std::size_t>(gap);
  for (std::size_t p = 0; p < d; ++p) {
    const std::size_t q = p + d;
    if (q < d + g) {
      if (x1[p] != kSpacer) sink.add(x1[p], kSpacer, mult);
    } else if (q - d - g < x2.size()) {
      if (x1[p] != kSpacer || x2[q - d - g] != kSpacer) {
        sink.add(x1[p], x2[q - d - g], mult);
      }
    }
  }
  for (std::size_t p = std::max(d, g); p < d + g; ++p) {
    const std::size_t k = p - g;
    if (k < x2.size() && x2[k] != kSpacer) sink.add(kSpacer, x2[k], mult);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Correlations

struct Correlation {
  Rational value;
  Rational error_bound;
  std::size_t top_stage = 0;
  Count count = 0;
};

/// (|n| + 1) mu(B_K) + (1 - coverage_K).
inline Rational correlation_error_bound(const Construction& c, std::int64_t n,
                                        std::size_t K) {
  return Rational(std::llabs(n) + 1) * c.level_measure(K) +
         (Rational(1) - c.coverage(K));
}

/// Smallest K >= j with h_K >= max(64 |n|, 16 h_j), clipped to J_max.
inline std::size_t default_top_stage(const Construction& c, std::size_t j,
                                     std::int64_t n) {
  const BigInt want = std::max(BigInt(64) * std::llabs(n), BigInt(16) * c.height(j));
  for (std::size_t K = j; K <= c.max_stage(); ++K) {
    if (c.height(K) >= want) return K;
  }
  return c.max_stage();
}

struct CorrelatorOptions {
  std::int64_t materialize_budget = std::int64_t{1} << 24;
  std::int64_t window = std::int64_t{1} << 16;  ///< n_max for lazy names
};

/// Correlation engine over one construction with cached names. Safe to share
/// between threads.
class Correlator {
 public:
  explicit Correlator(std::shared_ptr<const Construction> c,
                      CorrelatorOptions opts = {})
      : c_(std::move(c)), opts_(opts) {}
  explicit Correlator(const Construction& c, CorrelatorOptions opts = {})
      : Correlator(std::make_shared<const Construction>(c), opts) {}

  const Construction& construction() const { return *c_; }
  const CorrelatorOptions& options() const { return opts_; }

  std::shared_ptr<const TowerName> name(std::size_t j, std::size_t K) const {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(j, K);
    if (auto it = names_.find(key); it != names_.end()) return it->second;
    auto nm = std::make_shared<const TowerName>(
        materialize_tower_name(*c_, j, K, opts_.materialize_budget));
    cached_symbols_ += nm->symbols.size();
    if (cached_symbols_ > 4 * static_cast<std::size_t>(opts_.materialize_budget)) {
      names_.clear();
      cached_symbols_ = nm->symbols.size();
    }
    names_.emplace(key, nm);
    return nm;
  }

  std::shared_ptr<const LazyTowerName> lazy(std::size_t j) const {
    std::lock_guard lock(mu_);
    if (auto it = lazy_.find(j); it != lazy_.end()) return it->second;
    auto ln = std::make_shared<const LazyTowerName>(*c_, j, opts_.window);
    lazy_.emplace(j, ln);
    return ln;
  }

  bool materializable(std::size_t K) const {
    return c_->height(K) <= opts_.materialize_budget;
  }

  /// Count of name positions i with name[i] in B and name[i+n] in A,
  /// by a direct pass over the materialized name.
  Count materialized_count(const LevelSet& a, const LevelSet& b, std::int64_t n,
                           std::size_t K) const {
    check_query(a, b, n, K);
    auto nm = name(a.stage, K);
    SetPairSink sink(a, b, c_->height_i64(a.stage), n >= 0);
    detail::count_direct(std::span<const Symbol>(nm->symbols),
                         static_cast<std::size_t>(std::llabs(n)), sink);
    return sink.count();
  }

  /// Same count by the stage recursion over boundary windows.
  Count recursive_pair_count(const LevelSet& a, const LevelSet& b,
                             std::int64_t n, std::size_t K) const {
    check_query(a, b, n, K);
    SetPairSink sink(a, b, c_->height_i64(a.stage), n >= 0);
    run_recursion(a.stage, n, K, sink);
    return sink.count();
  }

  /// Level transition counts for T^n at stage j, read in tower K.
  LevelPairSink level_pair_counts(std::size_t j, std::int64_t n,
                                  std::size_t K) const {
    check_shift(j, n, K);
    LevelPairSink sink(c_->height_i64(j), n >= 0);
    const auto d = static_cast<std::size_t>(std::llabs(n));
    if (materializable(K)) {
      auto nm = name(j, K);
      detail::count_direct(std::span<const Symbol>(nm->symbols), d, sink);
    } else {
      run_recursion(j, n, K, sink);
    }
    return sink;
  }

  Correlation correlation(const LevelSet& a, const LevelSet& b, std::int64_t n,
                          std::size_t K) const {
    check_query(a, b, n, K);
    Correlation out;
    out.top_stage = K;
    out.count = materializable(K) ? materialized_count(a, b, n, K)
                                  : recursive_pair_count(a, b, n, K);
    out.value = to_rational(out.count) * c_->level_measure(K);
    out.error_bound = correlation_error_bound(*c_, n, K);
    return out;
  }

  Correlation correlation(const LevelSet& a, const LevelSet& b,
                          std::int64_t n) const {
    return correlation(a, b, n, default_top_stage(*c_, a.stage, n));
  }

  void check_shift(std::size_t j, std::int64_t n, std::size_t K) const {
    c_->check_stage(K);
    if (j > K) {
      throw Error(ErrorClass::kInvalidArgument,
                  "working stage K must be >= the level-set stage");
    }
    if (c_->height(K) <= std::llabs(n)) {
      throw Error(ErrorClass::kShiftTooLarge,
                  "|n| = " + std::to_string(std::llabs(n)) + " >= h_" +
                      std::to_string(K) + " = " + c_->height(K).str());
    }
  }

 private:
  void check_query(const LevelSet& a, const LevelSet& b, std::int64_t n,
                   std::size_t K) const {
    if (a.stage != b.stage) {
      throw Error(ErrorClass::kStageMismatch, "level sets at different stages");
    }
    check_level_set(*c_, a);
    check_level_set(*c_, b);
    check_shift(a.stage, n, K);
  }

  template <class Sink>
  void run_recursion(std::size_t j, std::int64_t n, std::size_t K,
                     Sink& sink) const {
    const auto d = static_cast<std::size_t>(std::llabs(n));
    if (std::llabs(n) > opts_.window) {
      throw Error(ErrorClass::kWindowTooSmall,
                  "|n| = " + std::to_string(std::llabs(n)) +
                      " exceeds window " + std::to_string(opts_.window));
    }
    auto ln = lazy(j);
    std::size_t k0 = j;
    while (k0 < K && c_->height(k0) < d) ++k0;

    try {
      // Base stage: the whole name of tower k0.
      if (ln->is_full(k0)) {
        detail::count_direct(ln->full(k0), d, sink);
      } else if (k0 == j || !ln->is_full(k0 - 1)) {
        detail::count_direct(std::span<const Symbol>(name(j, k0)->symbols), d,
                             sink);
      } else {
        if (!materializable(k0)) {
          throw Error(ErrorClass::kBudgetExceeded,
                      "h_" + std::to_string(k0) + " too large for base stage");
        }
        std::vector<Symbol> w;
        append_columns(w, ln->full(k0 - 1), c_->spacers(k0 - 1));
        detail::count_direct(std::span<const Symbol>(w), d, sink);
      }

      for (std::size_t k = k0; k < K; ++k) {
        const auto& sp = c_->spacers(k);
        sink.scale(Count(c_->cuts(k)));
        if (d == 0) continue;
        const auto suf = ln->suffix(k, d);
        const auto pre = ln->prefix(k, d);
        std::map<std::int64_t, std::int64_t> gaps;
        for (std::size_t col = 0; col + 1 < sp.size(); ++col) ++gaps[sp[col]];
        for (const auto& [g, mult] : gaps) {
          detail::count_cross(suf, g, pre, d, Count(mult), sink);
        }
        detail::count_cross(suf, sp.back(), std::span<const Symbol>(), d,
                            Count(1), sink);
      }
    } catch (const std::overflow_error& e) {
      throw Error(ErrorClass::kStageOverflow,
                  std::string("pair count overflow: ") + e.what());
    }
  }

  std::shared_ptr<const Construction> c_;
  CorrelatorOptions opts_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<std::size_t, std::size_t>,
                   std::shared_ptr<const TowerName>>
      names_;
  mutable std::size_t cached_symbols_ = 0;
  mutable std::map<std::size_t, std::shared_ptr<const LazyTowerName>> lazy_;
};

inline Correlation correlation(const Construction& c, const LevelSet& a,
                               const LevelSet& b, std::int64_t n,
                               std::size_t K) {
  return Correlator(c).correlation(a, b, n, K);
}

inline Count recursive_pair_count(const Construction& c, const LevelSet& a,
                                  const LevelSet& b, std::int64_t n,
                                  std::size_t K,
                                  CorrelatorOptions opts = {}) {
  return Correlator(c, opts).recursive_pair_count(a, b, n, K);
}

// ---------------------------------------------------------------------------
// Orbit oracle
//
// Labels each tower-K level by walking the column layout down to stage j
// (no name is built) and applies T as index + 1 inside tower K.

class TowerAddress {
 public:
  TowerAddress(const Construction& c, std::size_t j, std::size_t K)
      : c_(c), j_(j), K_(K) {
    for (std::size_t k = j; k < K; ++k) {
      const auto h = c.height_i64(k);
      std::vector<std::int64_t> starts;
      std::int64_t off = 0;
      for (auto s : c.spacers(k)) {
        starts.push_back(off);
        off += h + s;
      }
      starts_.push_back(std::move(starts));
    }
  }

  /// Stage-j level containing tower-K level i, or kSpacer.
  Symbol label(std::int64_t i) const {
    for (std::size_t k = K_; k > j_; --k) {
      const auto& st = starts_[k - 1 - j_];
      auto it = std::upper_bound(st.begin(), st.end(), i);
      const std::int64_t off = *std::prev(it);
      i -= off;
      if (i >= c_.height_i64(k - 1)) return kSpacer;
    }
    return static_cast<Symbol>(i);
  }

 private:
  const Construction& c_;
  std::size_t j_, K_;
  std::vector<std::vector<std::int64_t>> starts_;
};

inline Rational orbit_oracle_correlation(const Construction& c,
                                         const LevelSet& a, const LevelSet& b,
                                         std::int64_t n, std::size_t K,
                                         std::int64_t guard = std::int64_t{1}
                                                              << 24) {
  c.check_stage(K);
  if (c.height(K) > guard) {
    throw Error(ErrorClass::kBudgetExceeded, "orbit oracle beyond budget");
  }
  const auto hK = c.height_i64(K);
  const TowerAddress addr(c, a.stage, K);
  auto step = [hK](std::int64_t i, std::int64_t by) -> std::int64_t {
    const std::int64_t y = i + by;
    return (y < 0 || y >= hK) ? -1 : y;
  };
  std::int64_t matched = 0;
  for (std::int64_t i = 0; i < hK; ++i) {
    const Symbol src = addr.label(i);
    if (src == kSpacer || !b.contains(src)) continue;
    const std::int64_t y = step(i, n);
    if (y < 0) continue;
    const Symbol tgt = addr.label(y);
    if (tgt != kSpacer && a.contains(tgt)) ++matched;
  }
  return Rational(matched) * c.level_measure(K);
}

}  // namespace rankone
