#ifndef GRIDKKT_TESTS_DERIVATIVES_HPP
#define GRIDKKT_TESTS_DERIVATIVES_HPP

// Central-difference checks of the compact NLP's first and second derivatives.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gridkkt/acopf_nlp.hpp"
#include "oracles.hpp"

namespace deriv {

using namespace gridkkt;

/// A strictly interior point: every original variable drawn inside its bounds
/// (angles within +/- 0.3 rad, huge bounds clipped), slacks drawn positive.
inline std::vector<double> random_interior(const CompactNlp& nlp, std::mt19937_64& rng) {
  const auto& o = nlp.original();
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<double> x(o.n_x);
  for (Index k = 0; k < o.n_x; ++k) {
    double lo = std::max(o.x_lo[k], -2.0);
    double hi = std::min(o.x_hi[k], 2.0);
    if (k < o.n_bus) {
      lo = std::max(lo, -0.3);
      hi = std::min(hi, 0.3);
    }
    if (hi <= lo) {
      lo = o.x_lo[k];
      hi = o.x_hi[k];
    }
    x[k] = lo + u(rng) * (hi - lo);
  }
  auto y = nlp.to_y(x);
  std::uniform_real_distribution<double> s(0.05, 2.0);
  for (Index r = 0; r < o.n_h; ++r) {
    y[nlp.s_lower(r)] = s(rng);
    y[nlp.s_upper(r)] = s(rng);
  }
  return y;
}

/// ||a - b||_inf / max(||b||_inf, 1) for one column.
inline double column_error(const std::vector<double>& a, const std::vector<double>& b) {
  return oracle::max_abs_diff(a, b) / std::max(oracle::inf_norm(b), 1.0);
}

inline std::vector<double> dense_column(const CscMatrix& a, Index j) {
  std::vector<double> c(a.n_rows, 0.0);
  for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) c[a.row_ind[p]] = a.values[p];
  return c;
}

/// Column j of a symmetric matrix stored as its lower triangle.
inline std::vector<double> symmetric_column(const CscMatrix& lower, Index j) {
  std::vector<double> c(lower.n_rows, 0.0);
  for (Index col = 0; col < lower.n_cols; ++col) {
    for (Index p = lower.col_ptr[col]; p < lower.col_ptr[col + 1]; ++p) {
      const Index i = lower.row_ind[p];
      if (col == j) c[i] = lower.values[p];
      else if (i == j) c[col] = lower.values[p];
    }
  }
  return c;
}

inline double gradient_error(const CompactNlp& nlp, const std::vector<double>& y) {
  auto g = nlp.eval_gradient(y);
  auto f = [&](const std::vector<double>& v) { return std::vector<double>{nlp.eval_objective(v)}; };
  std::vector<double> fd(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) fd[j] = oracle::fd_column(f, y, j)[0];
  return column_error(g, fd);
}

inline double jacobian_error(const CompactNlp& nlp, const std::vector<double>& y) {
  auto ws = nlp.make_workspace();
  const auto& jac = nlp.eval_jacobian(y, ws);
  auto c = [&](const std::vector<double>& v) { return nlp.eval_constraints(v); };
  double err = 0.0;
  for (Index j = 0; j < nlp.n(); ++j) err = std::max(err, column_error(dense_column(jac, j), oracle::fd_column(c, y, j)));
  return err;
}

/// Lagrangian gradient grad f + J^T lambda.
inline std::vector<double> lagrangian_gradient(const CompactNlp& nlp, const std::vector<double>& y,
                                               const std::vector<double>& lambda) {
  auto ws = nlp.make_workspace();
  const auto& jac = nlp.eval_jacobian(y, ws);
  auto g = nlp.eval_gradient(y);
  for (Index j = 0; j < jac.n_cols; ++j) {
    for (Index p = jac.col_ptr[j]; p < jac.col_ptr[j + 1]; ++p) g[j] += jac.values[p] * lambda[jac.row_ind[p]];
  }
  return g;
}

inline double hessian_error(const CompactNlp& nlp, const std::vector<double>& y, const std::vector<double>& lambda) {
  auto ws = nlp.make_workspace();
  const auto& hess = nlp.eval_hessian(y, lambda, ws);
  auto lg = [&](const std::vector<double>& v) { return lagrangian_gradient(nlp, v, lambda); };
  double err = 0.0;
  for (Index j = 0; j < nlp.n(); ++j) {
    err = std::max(err, column_error(symmetric_column(hess, j), oracle::fd_column(lg, y, j)));
  }
  return err;
}

struct CheckResult {
  double gradient = 0.0;
  double jacobian = 0.0;
  double hessian = 0.0;
  [[nodiscard]] double worst() const { return std::max({gradient, jacobian, hessian}); }
};

/// Worst errors over `points` random interior points with random multipliers.
inline CheckResult check_case(const CompactNlp& nlp, int points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lam(-1.0, 1.0);
  CheckResult out;
  for (int k = 0; k < points; ++k) {
    auto y = random_interior(nlp, rng);
    std::vector<double> lambda(nlp.m());
    for (auto& v : lambda) v = lam(rng);
    out.gradient = std::max(out.gradient, gradient_error(nlp, y));
    out.jacobian = std::max(out.jacobian, jacobian_error(nlp, y));
    out.hessian = std::max(out.hessian, hessian_error(nlp, y, lambda));
  }
  return out;
}

}  // namespace deriv

#endif  // GRIDKKT_TESTS_DERIVATIVES_HPP
