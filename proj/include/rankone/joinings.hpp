#pragma once

// Self-joinings in the closed class spanned by off-diagonals and the product
// measure, evaluated on stage-j rectangles.
//
//   Diag(z)(A x B) = mu(A ∩ T^z B),   Prod(A x B) = mu(A) mu(B).
//
// Columns at stage j and offset k:
//
//   C^k = U_{i=0}^{h_j-k} T^{i+k} B_j x T^i B_j          (k >= 0)
//   C^k = U_{i=0}^{h_j+k} T^i B_j x T^{i-k} B_j          (k < 0)
//
// Each piece has Diag(z) measure mu(B_j ∩ T^{z-k} B_j), so a column is read as
// the rectangle sum (h_j - |k| + 1) mu(B_j ∩ T^{z-k} B_j). At i = h_j - |k| the
// first factor can leave tower j and meet the next column's base, so this sum
// can exceed the measure of the union; the strip audit uses the sum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rankone/errors.hpp"
#include "rankone/family.hpp"
#include "rankone/nnls.hpp"
#include "rankone/numeric.hpp"
#include "rankone/operators.hpp"
#include "rankone/symbolic.hpp"

namespace rankone {

/// Convex combination of Diag(z) and the product measure.
struct Joining {
  std::map<std::int64_t, Rational> diag;
  Rational product = 0;
  bool relative_product = false;  ///< set only by relative_product()

  static Joining diagonal(std::int64_t z) { return Joining{{{z, Rational(1)}}, 0}; }
  static Joining product_measure() { return Joining{{}, Rational(1)}; }

  Rational total() const {
    Rational s = product;
    for (const auto& [z, w] : diag) s += w;
    return s;
  }
  Rational weight(std::int64_t z) const {
    auto it = diag.find(z);
    return it == diag.end() ? Rational(0) : it->second;
  }
  std::int64_t max_shift() const {
    std::int64_t m = 0;
    for (const auto& [z, w] : diag) m = std::max<std::int64_t>(m, std::llabs(z));
    return m;
  }

  friend bool operator==(const Joining& a, const Joining& b) {
    return a.diag == b.diag && a.product == b.product;
  }
};

inline std::string to_string(const Joining& v) {
  std::string out;
  for (const auto& [z, w] : v.diag) {
    if (!out.empty()) out += " + ";
    out += to_string(w) + "*Diag(" + std::to_string(z) + ")";
  }
  if (v.product != 0) {
    if (!out.empty()) out += " + ";
    out += to_string(v.product) + "*Prod";
  }
  return out;
}

/// Weights positive (zeros dropped) and summing to one.
inline Joining normalized(Joining v) {
  std::erase_if(v.diag, [](const auto& kv) { return kv.second == 0; });
  for (const auto& [z, w] : v.diag) {
    if (w < 0) throw Error(ErrorClass::kInvalidArgument, "negative joining weight");
  }
  if (v.product < 0) throw Error(ErrorClass::kInvalidArgument, "negative joining weight");
  if (v.total() != 1) {
    throw Error(ErrorClass::kInvalidArgument,
                "joining weights sum to " + to_string(v.total()));
  }
  return v;
}

/// Diag(a) x Diag(b) -> Diag(b - a); anything paired with Prod gives Prod.
inline Joining relative_product(const Joining& v, const Joining& w) {
  Joining out;
  for (const auto& [a, wa] : v.diag) {
    for (const auto& [b, wb] : w.diag) out.diag[b - a] += wa * wb;
  }
  Rational dv = 0, dw = 0;
  for (const auto& [a, wa] : v.diag) dv += wa;
  for (const auto& [b, wb] : w.diag) dw += wb;
  out.product = v.total() * w.total() - dv * dw;
  out = normalized(std::move(out));
  out.relative_product = true;
  return out;
}

/// Diag(a) -> Diag(a + z); Prod fixed.
inline Joining shift(const Joining& v, std::int64_t z) {
  Joining out;
  for (const auto& [a, w] : v.diag) out.diag[a + z] = w;
  out.product = v.product;
  out.relative_product = v.relative_product;
  return out;
}

/// Smallest |z| <= Z (negative first) with shift(v, z) == w.
inline std::optional<std::int64_t> equivalent(const Joining& v, const Joining& w,
                                              std::int64_t Z) {
  if (v.product != w.product || v.diag.size() != w.diag.size()) return std::nullopt;
  for (std::int64_t m = 0; m <= Z; ++m) {
    for (std::int64_t z : {-m, m}) {
      if (shift(v, z) == w) return z;
      if (m == 0) break;
    }
  }
  return std::nullopt;
}

/// Weight of Diag(0).
inline Rational diagonal_component(const Joining& eta) { return eta.weight(0); }

/// I-coefficient of a matrix-form joining against a stage dictionary.
inline double diagonal_component(const StageOperator& eta,
                                 const std::vector<StageOperator>& dict) {
  return nnls_decompose(eta, dict).coefficient("I");
}

// ---------------------------------------------------------------------------
// Rectangles

struct WholeSpace {
  friend bool operator==(WholeSpace, WholeSpace) { return true; }
};
using Side = std::variant<LevelSet, WholeSpace>;

struct Rectangle {
  Side first;
  Side second;
};

struct Bounded {
  Rational value;
  Rational error_bound;
};

namespace detail {

inline Rational side_measure(const Construction& c, const Side& s) {
  if (const auto* a = std::get_if<LevelSet>(&s)) return a->measure(c);
  return Rational(1);
}

inline void check_rectangle(const Construction& c, const Rectangle& r) {
  const auto* a = std::get_if<LevelSet>(&r.first);
  const auto* b = std::get_if<LevelSet>(&r.second);
  if (a) check_level_set(c, *a);
  if (b) check_level_set(c, *b);
  if (a && b && a->stage != b->stage) {
    throw Error(ErrorClass::kStageMismatch, "rectangle sides at different stages");
  }
}

}  // namespace detail

inline Bounded evaluate(const Correlator& cor, const Joining& v, const Rectangle& r,
                        std::size_t K) {
  const Construction& c = cor.construction();
  detail::check_rectangle(c, r);
  const auto* a = std::get_if<LevelSet>(&r.first);
  const auto* b = std::get_if<LevelSet>(&r.second);
  Bounded out{v.product * detail::side_measure(c, r.first) *
                  detail::side_measure(c, r.second),
              0};
  for (const auto& [z, w] : v.diag) {
    if (a && b) {
      const auto corr = cor.correlation(*a, *b, z, K);
      out.value += w * corr.value;
      out.error_bound += w * corr.error_bound;
    } else {
      // A x X and X x B have Diag(z) measure mu(A) and mu(B).
      out.value += w * (a ? a->measure(c) : b ? b->measure(c) : Rational(1));
    }
  }
  return out;
}

inline Bounded evaluate(const Correlator& cor, const Joining& v, const Rectangle& r) {
  const auto* a = std::get_if<LevelSet>(&r.first);
  const auto* b = std::get_if<LevelSet>(&r.second);
  const std::size_t j = a ? a->stage : b ? b->stage : 0;
  return evaluate(cor, v, r, default_top_stage(cor.construction(), j, v.max_shift()));
}

/// 2 mu(A) mu(B) - mu(A ∩ B)^2.
inline Rational symmetrized_measure(const Construction& c, const Rectangle& r) {
  detail::check_rectangle(c, r);
  const auto* a = std::get_if<LevelSet>(&r.first);
  const auto* b = std::get_if<LevelSet>(&r.second);
  const Rational ma = detail::side_measure(c, r.first);
  const Rational mb = detail::side_measure(c, r.second);
  Rational inter;
  if (a && b) {
    inter = intersect(*a, *b).measure(c);
  } else {
    inter = a ? ma : mb;
  }
  return 2 * ma * mb - inter * inter;
}

// ---------------------------------------------------------------------------
// Columns and strips

/// mu(B_j ∩ T^s B_j) for the shifts a column sum needs, read in tower K.
class BaseReturns {
 public:
  BaseReturns(const Correlator& cor, std::size_t j, std::size_t K)
      : cor_(cor), j_(j), K_(K) {
    cor.check_shift(j, 0, K);
    if (cor.materializable(K)) {
      const auto nm = cor.name(j, K);
      for (std::size_t p = 0; p < nm->symbols.size(); ++p) {
        if (nm->symbols[p] == 0) starts_.push_back(static_cast<std::int64_t>(p));
      }
    }
  }

  Bounded at(std::int64_t s) {
    const Construction& c = cor_.construction();
    cor_.check_shift(j_, s, K_);
    auto it = cache_.find(s);
    if (it != cache_.end()) return it->second;
    Count n = 0;
    if (cor_.materializable(K_)) {
      for (std::size_t i = 0; i < starts_.size(); ++i) {
        const auto target = starts_[i] + s;
        n += std::binary_search(starts_.begin(), starts_.end(), target) ? 1 : 0;
      }
    } else {
      n = cor_.recursive_pair_count(LevelSet::single(j_, 0), LevelSet::single(j_, 0),
                                    s, K_);
    }
    Bounded v{to_rational(n) * c.level_measure(K_), correlation_error_bound(c, s, K_)};
    return cache_.emplace(s, v).first->second;
  }

  std::size_t stage() const { return j_; }
  std::size_t top_stage() const { return K_; }

 private:
  const Correlator& cor_;
  std::size_t j_, K_;
  std::vector<std::int64_t> starts_;
  std::map<std::int64_t, Bounded> cache_;
};

/// [eps h_j], clipped to h_j - 1.
inline std::int64_t strip_half_width(const Construction& c, std::size_t j, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorClass::kInvalidArgument, "epsilon must be >= 0");
  const auto h = c.height_i64(j);
  const auto m = static_cast<std::int64_t>(std::floor(eps * static_cast<double>(h)));
  return std::min(m, h - 1);
}

namespace detail {

/// Diag part of v on C^k.
inline Bounded column_diag(const Joining& v, std::int64_t hj, std::int64_t k,
                           BaseReturns& base) {
  Bounded out{0, 0};
  const Rational pieces(hj - std::llabs(k) + 1);
  for (const auto& [z, w] : v.diag) {
    const Bounded r = base.at(z - k);
    out.value += w * pieces * r.value;
    out.error_bound += w * pieces * r.error_bound;
  }
  return out;
}

inline Rational column_product(const Construction& c, std::size_t j, std::int64_t k) {
  const Rational mb = c.level_measure(j);
  return Rational(c.height_i64(j) - std::llabs(k) + 1) * mb * mb;
}

}  // namespace detail

inline Bounded column_measure(const Correlator& cor, const Joining& v, std::size_t j,
                              std::int64_t k, std::size_t K) {
  const Construction& c = cor.construction();
  if (std::llabs(k) > c.height_i64(j)) {
    throw Error(ErrorClass::kInvalidArgument, "column offset exceeds h_j");
  }
  BaseReturns base(cor, j, K);
  Bounded out = detail::column_diag(v, c.height_i64(j), k, base);
  out.value += v.product * detail::column_product(c, j, k);
  return out;
}

struct StripReport {
  double epsilon = 0.0;
  std::size_t stage = 0;
  std::size_t top_stage = 0;
  std::int64_t half_width = 0;  ///< [eps h_j]
  Rational eta_d;               ///< lower estimate of eta(D)
  Rational eta_d_error;
  Rational beta_hat;            ///< coverage_j
  Rational bound;               ///< eps^2 beta_hat^2
  Rational margin;              ///< eta_d - bound
  bool pass = false;
  Rational eta_u;               ///< eta(U x U)
  Rational eta_u_error;
  Rational mu_u_squared;
  bool u_pass = false;          ///< eta_u >= mu(U)^2
};

inline std::size_t strip_top_stage(const Construction& c, std::size_t j,
                                   const Joining& v, double eps) {
  return default_top_stage(c, j, v.max_shift() + strip_half_width(c, j, eps));
}

inline StripReport strip_audit(const Correlator& cor, const Joining& eta,
                               std::size_t j, double eps, std::size_t K) {
  if (!eta.relative_product) {
    throw Error(ErrorClass::kNotRelativeProduct,
                "strip inequality applies to relative products only");
  }
  const Construction& c = cor.construction();
  StripReport rep;
  rep.epsilon = eps;
  rep.stage = j;
  rep.top_stage = K;
  rep.half_width = strip_half_width(c, j, eps);
  const auto hj = c.height_i64(j);

  BaseReturns base(cor, j, K);
  for (std::int64_t k = -rep.half_width; k <= rep.half_width; ++k) {
    const Bounded d = detail::column_diag(eta, hj, k, base);
    rep.eta_d += d.value + eta.product * detail::column_product(c, j, k);
    rep.eta_d_error += d.error_bound;
  }
  rep.beta_hat = c.coverage(j);
  rep.bound = Rational(eps) * Rational(eps) * rep.beta_hat * rep.beta_hat;
  rep.margin = rep.eta_d - rep.bound;
  rep.pass = rep.eta_d > rep.bound;

  const LevelSet U = LevelSet::range(j, 0, rep.half_width + 1);
  const Bounded eu = evaluate(cor, eta, Rectangle{U, U}, K);
  rep.eta_u = eu.value;
  rep.eta_u_error = eu.error_bound;
  rep.mu_u_squared = U.measure(c) * U.measure(c);
  rep.u_pass = rep.eta_u >= rep.mu_u_squared;
  return rep;
}

inline StripReport strip_audit(const Correlator& cor, const Joining& eta,
                               std::size_t j, double eps) {
  return strip_audit(cor, eta, j, eps, strip_top_stage(cor.construction(), j, eta, eps));
}

// ---------------------------------------------------------------------------
// mu x mu component of the strip-conditioned measure

struct ComponentOptions {
  std::optional<std::size_t> family_stage;  ///< default: coarse stage below j
  std::optional<double> alpha;              ///< override for alpha_hat
  std::size_t family_cap = 64;
  std::size_t alpha_samples = 64;           ///< strip times sampled for alpha_hat
};

struct ComponentReport {
  double epsilon = 0.0;
  std::size_t stage = 0;
  std::size_t family_stage = 0;
  std::size_t top_stage = 0;
  std::int64_t half_width = 0;
  Rational eta_d;
  std::map<std::int64_t, double> column_weights;  ///< a^k for the Diag part
  double product_weight = 0.0;                    ///< share of eta(D) from Prod
  double component = 0.0;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double bound = 0.0;  ///< alpha_hat + beta_hat - 1 - eps beta_hat
};

/// Largest stage i <= j with 8 h_i <= h_j (stage 0 if none).
inline std::size_t coarse_stage(const Construction& c, std::size_t j) {
  std::size_t out = 0;
  for (std::size_t i = 0; i <= j; ++i) {
    if (8 * c.height(i) <= c.height(j)) out = i;
  }
  return out;
}

/// pessimistic_mixing_ratio clamped to [0, 1].
inline double mixing_ratio(const Correlator& cor, const TestFamily& fam,
                           std::int64_t n, std::size_t K) {
  check_family(cor.construction(), fam);
  return std::clamp(to_double(pessimistic_mixing_ratio(cor, fam, n, K)), 0.0, 1.0);
}

inline ComponentReport mu2_component_audit(const Correlator& cor, const Joining& v,
                                           std::size_t j, double eps, std::size_t K,
                                           const ComponentOptions& opts = {}) {
  const Construction& c = cor.construction();
  ComponentReport rep;
  rep.epsilon = eps;
  rep.stage = j;
  rep.top_stage = K;
  rep.half_width = strip_half_width(c, j, eps);
  rep.family_stage = opts.family_stage.value_or(coarse_stage(c, j));
  if (rep.family_stage > j) {
    throw Error(ErrorClass::kInvalidArgument, "family stage above the working stage");
  }
  const TestFamily fam = default_family(c, rep.family_stage, opts.family_cap);
  const auto hj = c.height_i64(j);

  BaseReturns base(cor, j, K);
  std::map<std::int64_t, Rational> diag_mass;
  Rational prod_mass = 0;
  for (std::int64_t k = -rep.half_width; k <= rep.half_width; ++k) {
    const Bounded d = detail::column_diag(v, hj, k, base);
    if (d.value != 0) diag_mass[k] = d.value;
    prod_mass += v.product * detail::column_product(c, j, k);
  }
  rep.eta_d = prod_mass;
  for (const auto& [k, m] : diag_mass) rep.eta_d += m;
  if (rep.eta_d == 0) {
    throw Error(ErrorClass::kDegenerateStrip, "eta(D) = 0 at stage " + std::to_string(j));
  }

  rep.product_weight = to_double(prod_mass / rep.eta_d);
  rep.component = rep.product_weight;
  for (const auto& [k, m] : diag_mass) {
    const double a = to_double(m / rep.eta_d);
    rep.column_weights[k] = a;
    rep.component += a * mixing_ratio(cor, fam, k, K);
  }

  if (opts.alpha) {
    rep.alpha_hat = *opts.alpha;
  } else {
    // Strip times at least one family-tower height away from 0.
    const std::int64_t lo = c.height_i64(rep.family_stage);
    std::vector<std::int64_t> times;
    if (lo <= rep.half_width) {
      const std::int64_t span = rep.half_width - lo + 1;
      const auto samples = std::min<std::int64_t>(
          span, static_cast<std::int64_t>(std::max<std::size_t>(opts.alpha_samples / 2, 1)));
      for (std::int64_t i = 0; i < samples; ++i) {
        const std::int64_t t = lo + (samples == 1 ? 0 : i * (span - 1) / (samples - 1));
        times.push_back(t);
        times.push_back(-t);
      }
    }
    rep.alpha_hat = times.empty() ? 0.0 : 1.0;
    for (auto t : times) rep.alpha_hat = std::min(rep.alpha_hat, mixing_ratio(cor, fam, t, K));
  }
  rep.beta_hat = to_double(c.coverage(j));
  rep.bound = rep.alpha_hat + rep.beta_hat - 1.0 - eps * rep.beta_hat;
  return rep;
}

inline ComponentReport mu2_component_audit(const Correlator& cor, const Joining& v,
                                           std::size_t j, double eps,
                                           const ComponentOptions& opts = {}) {
  return mu2_component_audit(cor, v, j, eps, strip_top_stage(cor.construction(), j, v, eps),
                             opts);
}

}  // namespace rankone
