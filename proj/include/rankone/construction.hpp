#pragma once

// Rank-one cutting-and-stacking constructions.
//
// Stage j holds a tower of height h_j over a base B_j. The stage-(j+1) tower
// is obtained by cutting tower j into r_j columns, putting s_j(i) spacer
// levels on top of column i and stacking the columns left to right:
//
//     h_{j+1} = r_j * h_j + sum_i s_j(i),      mu(B_{j+1}) = mu(B_j) / r_j.
//
// All heights and masses are exact. Masses are kept unnormalized (h_0 levels
// of mass 1 each) and normalized on demand by the mass at the last stage.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rankone/errors.hpp"
#include "rankone/numeric.hpp"

namespace rankone {

// ---------------------------------------------------------------------------
// Spacer plans

/// Every column receives the same number of spacers.
struct Flat {
  std::int64_t value = 0;
};

/// Explicit spacer count per column; length must equal the cut count.
struct Pattern {
  std::vector<std::int64_t> values;
};

/// Independent uniform draws on {0, ..., bound}.
struct Stochastic {
  std::int64_t bound = 1;
  std::uint64_t seed = 0;
};

/// q stochastic columns, then q columns with no spacer, then q columns with
/// one spacer. Requires cuts == 3q.
struct KatokMixed {
  std::int64_t q = 1;
  std::int64_t stochastic_bound = 1;
  std::uint64_t seed = 0;
};

/// A constant block of `flat_columns` columns carrying `flat_value` spacers,
/// followed by stochastic columns (uniform on {0, ..., bound}).
struct FlatThenStochastic {
  std::int64_t flat_columns = 0;
  std::int64_t flat_value = 0;
  std::int64_t bound = 1;
  std::uint64_t seed = 0;
};

using SpacerPlan =
    std::variant<Flat, Pattern, Stochastic, KatokMixed, FlatThenStochastic>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based uniform draw on {0, ..., bound}, keyed by (seed, stage,
/// column). Rejection sampling advances an attempt counter, so the result is
/// a pure function of the key.
inline std::int64_t spacer_draw(std::uint64_t seed, std::uint64_t stage,
                                std::uint64_t column, std::int64_t bound) {
  const std::uint64_t range = static_cast<std::uint64_t>(bound) + 1;
  if (range == 0) return 0;
  const std::uint64_t max = ~std::uint64_t{0};
  const std::uint64_t limit = max - (max % range + 1) % range;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t x = splitmix64(
        seed + splitmix64(stage + splitmix64(column + splitmix64(attempt))));
    if (x <= limit) return static_cast<std::int64_t>(x % range);
  }
}

/// Expands a plan into one spacer count per column.
inline std::vector<std::int64_t> expand_spacers(const SpacerPlan& plan,
                                                std::size_t stage,
                                                std::int64_t cuts) {
  auto fail = [&](const std::string& why) {
    return Error(ErrorClass::kInfeasiblePlan,
                 "stage " + std::to_string(stage) + ": " + why);
  };
  if (cuts < 2) throw fail("cut count must be at least 2");
  const auto r = static_cast<std::size_t>(cuts);
  std::vector<std::int64_t> out;
  out.reserve(r);

  if (const auto* p = std::get_if<Flat>(&plan)) {
    if (p->value < 0) throw fail("negative spacer count");
    out.assign(r, p->value);
  } else if (const auto* p = std::get_if<Pattern>(&plan)) {
    if (p->values.size() != r) {
      throw fail("pattern has " + std::to_string(p->values.size()) +
                 " entries for " + std::to_string(r) + " columns");
    }
    for (auto v : p->values) {
      if (v < 0) throw fail("negative spacer count");
    }
    out = p->values;
  } else if (const auto* p = std::get_if<Stochastic>(&plan)) {
    if (p->bound < 0) throw fail("negative stochastic bound");
    for (std::size_t i = 0; i < r; ++i) {
      out.push_back(spacer_draw(p->seed, stage, i, p->bound));
    }
  } else if (const auto* p = std::get_if<KatokMixed>(&plan)) {
    if (p->q < 1 || p->stochastic_bound < 0) throw fail("bad Katok parameters");
    if (cuts != 3 * p->q) {
      throw fail("Katok plan with q=" + std::to_string(p->q) +
                 " needs 3q columns, got " + std::to_string(cuts));
    }
    const auto q = static_cast<std::size_t>(p->q);
    for (std::size_t i = 0; i < q; ++i) {
      out.push_back(spacer_draw(p->seed, stage, i, p->stochastic_bound));
    }
    out.insert(out.end(), q, 0);
    out.insert(out.end(), q, 1);
  } else if (const auto* p = std::get_if<FlatThenStochastic>(&plan)) {
    if (p->flat_columns < 0 || p->flat_columns > cuts || p->flat_value < 0 ||
        p->bound < 0) {
      throw fail("bad flat/stochastic split");
    }
    const auto f = static_cast<std::size_t>(p->flat_columns);
    out.assign(f, p->flat_value);
    for (std::size_t i = f; i < r; ++i) {
      out.push_back(spacer_draw(p->seed, stage, i, p->bound));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters and realized constructions

struct StagePlan {
  std::int64_t cuts = 2;
  SpacerPlan spacers = Flat{0};
};

struct ConstructionParams {
  std::vector<StagePlan> stages;  ///< plans for stages 0 .. max_stage-1
  std::size_t max_stage = 0;      ///< J_max; stage J_max has no plan
  std::int64_t initial_height = 1;
};

/// Same plan repeated for stages 0 .. max_stage-1.
inline ConstructionParams repeat_stage(const StagePlan& plan,
                                       std::size_t max_stage) {
  return ConstructionParams{std::vector<StagePlan>(max_stage, plan), max_stage,
                            1};
}

struct RealizeOptions {
  /// Heights above this raise StageOverflow. Unset means unlimited.
  std::optional<BigInt> height_guard;
  /// Largest cut count whose spacer sequence is expanded.
  std::int64_t max_columns = std::int64_t{1} << 22;
};

class Construction;
Construction realize(const ConstructionParams& params,
                     const RealizeOptions& opts = {});

/// Immutable realized construction: exact heights, spacer matrices and masses.
class Construction {
 public:
  const ConstructionParams& params() const { return params_; }
  std::size_t max_stage() const { return params_.max_stage; }

  const BigInt& height(std::size_t j) const { return heights_.at(j); }

  /// Height as a machine integer; BudgetExceeded when it does not fit.
  std::int64_t height_i64(std::size_t j) const {
    const BigInt& h = height(j);
    if (h > std::numeric_limits<std::int64_t>::max()) {
      throw Error(ErrorClass::kBudgetExceeded,
                  "height h_" + std::to_string(j) + " = " + h.str() +
                      " exceeds 64-bit range");
    }
    return h.convert_to<std::int64_t>();
  }

  std::int64_t cuts(std::size_t j) const { return params_.stages.at(j).cuts; }
  const std::vector<std::int64_t>& spacers(std::size_t j) const {
    return spacers_.at(j);
  }
  const BigInt& spacer_total(std::size_t j) const {
    return spacer_totals_.at(j);
  }

  /// Unnormalized mu(B_j), with mu(B_0) = 1.
  const Rational& base_mass(std::size_t j) const { return base_mass_.at(j); }
  /// Unnormalized h_j * mu(B_j).
  Rational tower_mass(std::size_t j) const {
    return Rational(height(j)) * base_mass(j);
  }
  /// Tower mass at J_max; the normalizer for every probability below.
  const Rational& total_mass() const { return total_mass_; }

  /// Probability of one stage-j level.
  Rational level_measure(std::size_t j) const {
    return base_mass(j) / total_mass_;
  }

  /// mu(U_j) relative to the stage-J_max mass, in (0, 1].
  Rational coverage(std::size_t j) const {
    check_stage(j);
    return tower_mass(j) / total_mass_;
  }

  /// prod_{i=j}^{K-1} r_i: the number of copies of tower j inside tower K.
  BigInt copies(std::size_t j, std::size_t K) const {
    BigInt p = 1;
    for (std::size_t i = j; i < K; ++i) p *= cuts(i);
    return p;
  }

  void check_stage(std::size_t j) const {
    if (j > max_stage()) {
      throw Error(ErrorClass::kInvalidArgument,
                  "stage " + std::to_string(j) + " beyond J_max = " +
                      std::to_string(max_stage()));
    }
  }

  friend bool operator==(const Construction& a, const Construction& b) {
    return a.heights_ == b.heights_ && a.spacers_ == b.spacers_ &&
           a.base_mass_ == b.base_mass_ && a.total_mass_ == b.total_mass_ &&
           a.params_.max_stage == b.params_.max_stage &&
           a.params_.initial_height == b.params_.initial_height;
  }

 private:
  friend Construction realize(const ConstructionParams&, const RealizeOptions&);

  ConstructionParams params_;
  std::vector<BigInt> heights_;
  std::vector<std::vector<std::int64_t>> spacers_;
  std::vector<BigInt> spacer_totals_;
  std::vector<Rational> base_mass_;
  Rational total_mass_;
};

inline Construction realize(const ConstructionParams& params,
                            const RealizeOptions& opts) {
  if (params.stages.size() < params.max_stage) {
    throw Error(ErrorClass::kInfeasiblePlan,
                "plan lists " + std::to_string(params.stages.size()) +
                    " stages but J_max = " + std::to_string(params.max_stage));
  }
  if (params.initial_height < 1) {
    throw Error(ErrorClass::kInfeasiblePlan, "initial height must be >= 1");
  }
  Construction c;
  c.params_ = params;
  c.params_.stages.resize(params.max_stage);
  c.heights_.push_back(BigInt(params.initial_height));
  c.base_mass_.push_back(Rational(1));

  for (std::size_t j = 0; j < params.max_stage; ++j) {
    const auto& st = c.params_.stages[j];
    if (st.cuts > opts.max_columns) {
      throw Error(ErrorClass::kStageOverflow,
                  "stage " + std::to_string(j) + ": cut count " +
                      std::to_string(st.cuts) + " exceeds column cap");
    }
    auto s = expand_spacers(st.spacers, j, st.cuts);
    BigInt total = 0;
    for (auto v : s) total += v;
    BigInt next = BigInt(st.cuts) * c.heights_.back() + total;
    if (opts.height_guard && next > *opts.height_guard) {
      throw Error(ErrorClass::kStageOverflow,
                  "h_" + std::to_string(j + 1) + " = " + next.str() +
                      " exceeds guard " + opts.height_guard->str());
    }
    c.heights_.push_back(std::move(next));
    c.base_mass_.push_back(c.base_mass_.back() / st.cuts);
    c.spacers_.push_back(std::move(s));
    c.spacer_totals_.push_back(std::move(total));
  }
  c.total_mass_ = c.tower_mass(params.max_stage);
  return c;
}

inline Rational coverage(const Construction& c, std::size_t j) {
  return c.coverage(j);
}

/// Builds the companion construction with h~_j = h_j + 1 at every stage and
/// cut counts `cut_counts`. Spacers are split flat, remainder first: the
/// first (total mod r~_j) columns carry one extra spacer.
inline Construction pair_with_offset_one(
    const Construction& c, const std::vector<std::int64_t>& cut_counts,
    const RealizeOptions& opts = {}) {
  const std::size_t J = c.max_stage();
  if (cut_counts.size() < J) {
    throw Error(ErrorClass::kInvalidArgument,
                "need " + std::to_string(J) + " cut counts for pairing");
  }
  ConstructionParams p;
  p.max_stage = J;
  p.initial_height = to_i64(c.height(0) + 1);
  for (std::size_t j = 0; j < J; ++j) {
    const std::int64_t r = cut_counts[j];
    if (r < 2) {
      throw InfeasiblePairing(j, "stage " + std::to_string(j) +
                                     ": paired cut count must be >= 2");
    }
    const BigInt total = c.height(j + 1) + 1 - BigInt(r) * (c.height(j) + 1);
    if (total < 0) {
      throw InfeasiblePairing(
          j, "stage " + std::to_string(j) + ": h_{j+1}+1 - r~(h_j+1) = " +
                 total.str() + " < 0");
    }
    const BigInt base = total / r;
    const BigInt rem = total % r;
    if (base + 1 > std::numeric_limits<std::int64_t>::max()) {
      throw Error(ErrorClass::kStageOverflow,
                  "paired spacer count overflows at stage " + std::to_string(j));
    }
    const auto b = base.convert_to<std::int64_t>();
    const auto extra = rem.convert_to<std::int64_t>();
    if (r > opts.max_columns) {
      throw Error(ErrorClass::kStageOverflow,
                  "paired cut count exceeds column cap at stage " +
                      std::to_string(j));
    }
    Pattern pat;
    pat.values.reserve(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) pat.values.push_back(b + (i < extra));
    p.stages.push_back(StagePlan{r, std::move(pat)});
  }
  return realize(p, opts);
}

// ---------------------------------------------------------------------------
// Finite tensor products

/// Handle on S_1 x ... x S_N. Correlations of product rectangles factor
/// coordinatewise (see estimators.hpp).
struct ProductSystem {
  std::vector<Construction> factors;

  /// Coverage of the product of stage-j towers.
  Rational coverage(std::size_t j) const {
    Rational p = 1;
    for (const auto& f : factors) p *= f.coverage(j);
    return p;
  }
};

inline ProductSystem tensor_power(std::vector<Construction> cs) {
  if (cs.empty()) {
    throw Error(ErrorClass::kInvalidArgument, "tensor power of no factors");
  }
  return ProductSystem{std::move(cs)};
}

}  // namespace rankone
