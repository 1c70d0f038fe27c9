#pragma once

// Finite-stage Markov matrices of T^n and weak-limit fitting.
//
// At stage j the operator T^n is read as the column-substochastic matrix
//
//     M[a][b] = mu(level_a ∩ T^n level_b) / mu(level_b),
//
// computed exactly from pair counts in tower K. Every level of a fixed stage
// has the same measure, so adjoints are plain transposes and the level-measure
// weighted Frobenius norm is a uniform one.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rankone/errors.hpp"
#include "rankone/nnls.hpp"
#include "rankone/numeric.hpp"
#include "rankone/parallel.hpp"
#include "rankone/symbolic.hpp"

namespace rankone {

/// Dense stage-j operator in floating point, as used for fitting and algebra.
struct StageOperator {
  std::size_t stage = 0;
  std::string label;
  Eigen::MatrixXd matrix;    ///< column b is the image distribution of level b
  Eigen::VectorXd residual;  ///< per-column mass leaving the stage-j algebra
  double error_ratio = 0.0;  ///< column sums + residual lie in [1 - ratio, 1]

  Eigen::Index levels() const { return matrix.rows(); }
};

/// Exact transition counts for T^n at stage j, read in tower K.
struct CorrelationMatrix {
  std::size_t stage = 0;
  std::int64_t time = 0;
  std::size_t top_stage = 0;
  std::size_t levels = 0;
  std::vector<Count> counts;  ///< (levels + 1) x levels, row = target, last row spacer
  BigInt copies;              ///< occurrences of each stage-j level in tower K
  Rational error_bound;       ///< correlation error bound at (time, top_stage)
  Rational level_measure;     ///< mu(B_j)
  Rational top_measure;       ///< mu(B_K)

  const Count& count(std::size_t target, std::size_t source) const {
    return counts[target * levels + source];
  }
  Rational entry(std::size_t a, std::size_t b) const {
    return Rational(BigInt(count(a, b)), copies);
  }
  Rational residual(std::size_t b) const {
    return Rational(BigInt(count(levels, b)), copies);
  }
  /// Name positions with source in b and target in a.
  Count pair_count(const LevelSet& a, const LevelSet& b) const {
    Count out = 0;
    for (auto t : a.indices) {
      for (auto s : b.indices) {
        out += count(static_cast<std::size_t>(t), static_cast<std::size_t>(s));
      }
    }
    return out;
  }
  /// Lower estimate of mu(a ∩ T^n b); the matching error bound is error_bound.
  Rational value(const LevelSet& a, const LevelSet& b) const {
    return to_rational(pair_count(a, b)) * top_measure;
  }
  /// errorBound / mu(B_j).
  Rational error_ratio() const { return error_bound / level_measure; }

  StageOperator to_operator() const {
    StageOperator op;
    op.stage = stage;
    op.label = "T^" + std::to_string(time);
    const auto h = static_cast<Eigen::Index>(levels);
    op.matrix.resize(h, h);
    op.residual.resize(h);
    const double n = copies.convert_to<double>();
    for (std::size_t a = 0; a < levels; ++a) {
      for (std::size_t b = 0; b < levels; ++b) {
        op.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            BigInt(count(a, b)).convert_to<double>() / n;
      }
    }
    for (std::size_t b = 0; b < levels; ++b) {
      op.residual(static_cast<Eigen::Index>(b)) =
          BigInt(count(levels, b)).convert_to<double>() / n;
    }
    op.error_ratio = to_double(error_ratio());
    return op;
  }
};

inline constexpr std::int64_t kMaxMatrixLevels = 4096;

inline CorrelationMatrix markov_matrix(const Correlator& cor, std::size_t j,
                                       std::int64_t n, std::size_t K) {
  const Construction& c = cor.construction();
  c.check_stage(j);
  if (c.height(j) > kMaxMatrixLevels) {
    throw Error(ErrorClass::kBudgetExceeded,
                "stage " + std::to_string(j) + " has too many levels for a matrix");
  }
  auto sink = cor.level_pair_counts(j, n, K);
  CorrelationMatrix m;
  m.stage = j;
  m.time = n;
  m.top_stage = K;
  m.levels = sink.levels();
  m.counts = std::move(sink.counts());
  m.copies = c.copies(j, K);
  m.error_bound = correlation_error_bound(c, n, K);
  m.level_measure = c.level_measure(j);
  m.top_measure = c.level_measure(K);
  return m;
}

inline CorrelationMatrix markov_matrix(const Correlator& cor, std::size_t j,
                                       std::int64_t n) {
  return markov_matrix(cor, j, n, default_top_stage(cor.construction(), j, n));
}

inline StageOperator identity_operator(std::size_t stage, Eigen::Index h) {
  return StageOperator{stage, "I", Eigen::MatrixXd::Identity(h, h),
                       Eigen::VectorXd::Zero(h), 0.0};
}

/// Projection onto constants within the tower: every entry mu(level_a)/mass_j.
inline StageOperator theta_operator(std::size_t stage, Eigen::Index h) {
  return StageOperator{stage, "Theta",
                       Eigen::MatrixXd::Constant(h, h, 1.0 / static_cast<double>(h)),
                       Eigen::VectorXd::Zero(h), 0.0};
}

/// {I, Theta, T^-Z, ..., T^Z} in that order; the order is the tie-break order
/// of the fitter.
inline std::vector<StageOperator> dictionary(const Correlator& cor, std::size_t j,
                                             std::int64_t Z, std::size_t K) {
  const auto h = static_cast<Eigen::Index>(cor.construction().height_i64(j));
  std::vector<StageOperator> out;
  out.push_back(identity_operator(j, h));
  out.push_back(theta_operator(j, h));
  for (std::int64_t z = -Z; z <= Z; ++z) {
    out.push_back(markov_matrix(cor, j, z, K).to_operator());
  }
  return out;
}

inline std::vector<StageOperator> dictionary(const Correlator& cor, std::size_t j,
                                             std::int64_t Z) {
  return dictionary(cor, j, Z, default_top_stage(cor.construction(), j, Z));
}

// ---------------------------------------------------------------------------
// Algebra

inline void require_same_stage(const StageOperator& a, const StageOperator& b) {
  if (a.stage != b.stage || a.levels() != b.levels()) {
    throw Error(ErrorClass::kStageMismatch,
                "operators live on different stages");
  }
}

/// Transpose (levels of one stage have equal measure).
inline StageOperator adjoint(const StageOperator& m) {
  StageOperator out;
  out.stage = m.stage;
  out.label = m.label + "*";
  out.matrix = m.matrix.transpose();
  const Eigen::VectorXd sums = out.matrix.colwise().sum().transpose();
  out.residual = (1.0 - sums.array()).max(0.0).matrix();
  out.error_ratio = m.error_ratio;
  return out;
}

/// Matrix product m * n (apply n first). Residual mass of n stays lost; mass
/// that n sends into levels which m then loses is added on top.
inline StageOperator compose(const StageOperator& m, const StageOperator& n) {
  require_same_stage(m, n);
  StageOperator out;
  out.stage = m.stage;
  out.label = m.label + "." + n.label;
  out.matrix = m.matrix * n.matrix;
  out.residual = n.residual + n.matrix.transpose() * m.residual;
  out.error_ratio = m.error_ratio + n.error_ratio;
  return out;
}

/// max |m - n| entrywise.
inline double max_entry_distance(const StageOperator& m, const StageOperator& n) {
  require_same_stage(m, n);
  return (m.matrix - n.matrix).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Weak-limit fitting

struct WeakLimitReport {
  std::int64_t time = 0;
  std::size_t top_stage = 0;
  std::vector<std::string> labels;
  std::vector<double> coefficients;
  double residual_norm = 0.0;
  int iterations = 0;

  double coefficient(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return coefficients[i];
    }
    return 0.0;
  }
  double total() const {
    double s = 0.0;
    for (double c : coefficients) s += c;
    return s;
  }
};

/// sqrt( sum_b (1/h) sum_a (M - sum_i c_i D_i)[a][b]^2 ).
inline double weighted_residual(const StageOperator& target,
                                const std::vector<StageOperator>& dict,
                                const std::vector<double>& coef) {
  Eigen::MatrixXd r = target.matrix;
  for (std::size_t i = 0; i < dict.size(); ++i) r -= coef[i] * dict[i].matrix;
  return std::sqrt(r.squaredNorm() / static_cast<double>(target.levels()));
}

inline WeakLimitReport nnls_decompose(const StageOperator& target,
                                      const std::vector<StageOperator>& dict,
                                      const NnlsOptions& opts = {}) {
  if (dict.empty()) {
    throw Error(ErrorClass::kInvalidArgument, "empty operator dictionary");
  }
  const auto p = static_cast<Eigen::Index>(dict.size());
  const double w = 1.0 / static_cast<double>(target.levels());
  Eigen::MatrixXd G(p, p);
  Eigen::VectorXd g(p);
  for (Eigen::Index a = 0; a < p; ++a) {
    require_same_stage(target, dict[static_cast<std::size_t>(a)]);
    const auto& da = dict[static_cast<std::size_t>(a)].matrix;
    g(a) = w * da.cwiseProduct(target.matrix).sum();
    for (Eigen::Index b = 0; b <= a; ++b) {
      G(a, b) = G(b, a) = w * da.cwiseProduct(dict[static_cast<std::size_t>(b)].matrix).sum();
    }
  }
  const NnlsSolution sol = nnls_capped(G, g, opts);

  WeakLimitReport rep;
  for (const auto& d : dict) rep.labels.push_back(d.label);
  rep.coefficients.assign(sol.x.data(), sol.x.data() + sol.x.size());
  rep.residual_norm = weighted_residual(target, dict, rep.coefficients);
  rep.iterations = sol.iterations;
  return rep;
}

struct WeakLimitScan {
  std::vector<WeakLimitReport> reports;
  std::int64_t rigidity_time = 0;  ///< time with the largest I coefficient
  double rigidity_coefficient = 0.0;
  double mixing_floor = 0.0;       ///< smallest Theta coefficient over the scan
};

inline WeakLimitScan weak_limit_scan(const Correlator& cor, std::size_t j,
                                     const std::vector<std::int64_t>& times,
                                     std::int64_t Z,
                                     std::optional<std::size_t> top = std::nullopt,
                                     unsigned threads = 1) {
  if (times.empty()) throw Error(ErrorClass::kEmptyRange, "no scan times");
  const auto dict = top ? dictionary(cor, j, Z, *top) : dictionary(cor, j, Z);
  WeakLimitScan out;
  out.reports = parallel_map(times.size(), threads, [&](std::size_t i) {
    const std::int64_t n = times[i];
    const std::size_t K = top ? *top : default_top_stage(cor.construction(), j, n);
    WeakLimitReport rep = nnls_decompose(markov_matrix(cor, j, n, K).to_operator(), dict);
    rep.time = n;
    rep.top_stage = K;
    return rep;
  });
  out.rigidity_coefficient = -1.0;
  out.mixing_floor = 2.0;
  for (const auto& rep : out.reports) {
    const double ci = rep.coefficient("I");
    if (ci > out.rigidity_coefficient) {
      out.rigidity_coefficient = ci;
      out.rigidity_time = rep.time;
    }
    out.mixing_floor = std::min(out.mixing_floor, rep.coefficient("Theta"));
  }
  return out;
}

}  // namespace rankone
