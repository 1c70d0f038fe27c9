#pragma once

// Nonnegative least squares with an optional budget on the coefficient sum,
// in Gram form:
//
//     minimize  1/2 x'Gx - g'x   subject to  x >= 0,  sum(x) <= 1.
//
// The inner solver is Lawson-Hanson active set. The sum budget is handled by
// its multiplier: the KKT conditions give x(lambda) = NNLS with g - lambda*1,
// and sum(x(lambda)) is nonincreasing in lambda, so lambda is bracketed and
// the final support is solved exactly with the equality sum(x) = 1.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "rankone/errors.hpp"

namespace rankone {

struct NnlsOptions {
  int max_iterations = 10000;
  double tolerance = 1e-9;
};

struct NnlsSolution {
  Eigen::VectorXd x;
  int iterations = 0;
  double multiplier = 0.0;  ///< lambda for the sum budget (0 when slack)
};

namespace detail {

inline Eigen::VectorXd solve_on_support(const Eigen::MatrixXd& G,
                                        const Eigen::VectorXd& rhs,
                                        const std::vector<int>& support) {
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd Gp(k, k);
  Eigen::VectorXd bp(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    bp(a) = rhs(support[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < k; ++b) {
      Gp(a, b) = G(support[static_cast<std::size_t>(a)],
                   support[static_cast<std::size_t>(b)]);
    }
  }
  return Gp.ldlt().solve(bp);
}

}  // namespace detail

/// Lawson-Hanson for min 1/2 x'Gx - (g - lambda)'x, x >= 0. Starts at x = 0;
/// the entering index is the largest gradient, lowest index on ties.
inline NnlsSolution nnls_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                              double lambda = 0.0,
                              const NnlsOptions& opts = {}) {
  const Eigen::Index p = g.size();
  const Eigen::VectorXd rhs = g.array() - lambda;
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  const double grad_tol = 1e-13 * scale;

  NnlsSolution out;
  out.x = Eigen::VectorXd::Zero(p);
  out.multiplier = lambda;
  std::vector<char> passive(static_cast<std::size_t>(p), 0);
  std::vector<char> blocked(static_cast<std::size_t>(p), 0);

  for (;;) {
    const Eigen::VectorXd w = rhs - G * out.x;
    Eigen::Index enter = -1;
    double best = grad_tol;
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (!passive[u] && !blocked[u] && w(i) > best) {
        best = w(i);
        enter = i;
      }
    }
    if (enter < 0) break;
    passive[static_cast<std::size_t>(enter)] = 1;

    bool first = true;
    for (;;) {
      if (++out.iterations > opts.max_iterations) {
        throw Error(ErrorClass::kFitDiverged,
                    "nonnegative fit exceeded " +
                        std::to_string(opts.max_iterations) + " iterations");
      }
      std::vector<int> support;
      for (Eigen::Index i = 0; i < p; ++i) {
        if (passive[static_cast<std::size_t>(i)]) support.push_back(static_cast<int>(i));
      }
      const Eigen::VectorXd z = detail::solve_on_support(G, rhs, support);

      bool feasible = true;
      for (Eigen::Index a = 0; a < z.size(); ++a) feasible &= z(a) > 0.0;
      if (feasible) {
        out.x.setZero();
        for (std::size_t a = 0; a < support.size(); ++a) {
          out.x(support[a]) = z(static_cast<Eigen::Index>(a));
        }
        std::fill(blocked.begin(), blocked.end(), 0);
        break;
      }
      // Rounding can make a freshly entered column come out nonpositive;
      // drop it and keep it out until x moves.
      if (first) {
        for (std::size_t a = 0; a < support.size(); ++a) {
          if (support[a] == enter && z(static_cast<Eigen::Index>(a)) <= 0.0) {
            passive[static_cast<std::size_t>(enter)] = 0;
            blocked[static_cast<std::size_t>(enter)] = 1;
            break;
          }
        }
        if (!passive[static_cast<std::size_t>(enter)]) break;
      }
      first = false;

      double alpha = 1.0;
      for (std::size_t a = 0; a < support.size(); ++a) {
        const double za = z(static_cast<Eigen::Index>(a));
        const double xa = out.x(support[a]);
        if (za <= 0.0) alpha = std::min(alpha, xa / (xa - za));
      }
      for (std::size_t a = 0; a < support.size(); ++a) {
        const int i = support[a];
        out.x(i) += alpha * (z(static_cast<Eigen::Index>(a)) - out.x(i));
        if (out.x(i) <= 1e-15 * scale) {
          out.x(i) = 0.0;
          passive[static_cast<std::size_t>(i)] = 0;
        }
      }
    }
  }
  return out;
}

/// NNLS with the coefficient sum capped at 1.
inline NnlsSolution nnls_capped(const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                                const NnlsOptions& opts = {}) {
  NnlsSolution free = nnls_gram(G, g, 0.0, opts);
  if (free.x.sum() <= 1.0 + 1e-12) return free;

  double lo = 0.0;
  double hi = std::max(1.0, g.maxCoeff());
  NnlsSolution at_hi = nnls_gram(G, g, hi, opts);
  int total = free.iterations + at_hi.iterations;
  while (at_hi.x.sum() > 1.0) {
    lo = hi;
    hi *= 2.0;
    at_hi = nnls_gram(G, g, hi, opts);
    total += at_hi.iterations;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    NnlsSolution s = nnls_gram(G, g, mid, opts);
    total += s.iterations;
    if (total > opts.max_iterations) {
      throw Error(ErrorClass::kFitDiverged, "capped fit exceeded iteration cap");
    }
    if (s.x.sum() > 1.0) {
      lo = mid;
    } else {
      hi = mid;
      at_hi = std::move(s);
    }
  }

  // Polish: equality-constrained solve on the final support.
  std::vector<int> support;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (at_hi.x(i) > 0.0) support.push_back(static_cast<int>(i));
  }
  if (!support.empty()) {
    const auto k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd rhs(k + 1);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        kkt(a, b) = G(support[static_cast<std::size_t>(a)],
                      support[static_cast<std::size_t>(b)]);
      }
      kkt(a, k) = 1.0;
      kkt(k, a) = 1.0;
      rhs(a) = g(support[static_cast<std::size_t>(a)]);
    }
    rhs(k) = 1.0;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    bool ok = sol(k) >= 0.0;
    for (Eigen::Index a = 0; a < k; ++a) ok &= sol(a) > 0.0;
    if (ok) {
      at_hi.x.setZero();
      for (Eigen::Index a = 0; a < k; ++a) {
        at_hi.x(support[static_cast<std::size_t>(a)]) = sol(a);
      }
      at_hi.multiplier = sol(k);
    }
  }
  at_hi.iterations = total;
  return at_hi;
}

}  // namespace rankone
