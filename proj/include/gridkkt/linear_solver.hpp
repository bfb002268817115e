#ifndef GRIDKKT_LINEAR_SOLVER_HPP
#define GRIDKKT_LINEAR_SOLVER_HPP

// Sparse direct LU for sequences of same-pattern systems.
//
// The first system is equilibrated, ordered (AMD on A + A^T) and factorized by a
// left-looking Gilbert-Peierls LU with partial pivoting. The resulting row/column
// permutations and L, U patterns are frozen inside a RefactorizationHandle, with
// the factors kept in a single row-major L+U structure. Every later system with the
// same pattern is refactorized in place on that structure with no pivot search,
// solved by forward/backward substitution and polished by iterative refinement.

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridkkt/ordering.hpp"
#include "gridkkt/sparse_core.hpp"

namespace gridkkt {

struct FactorOptions {
  /// Threshold partial pivoting: the diagonal candidate is kept when
  /// |a_kk| >= pivot_tolerance * max|a_ik|. 1.0 means strict partial pivoting.
  double pivot_tolerance = 1.0;
  /// Refactorization flags pivots smaller than pivot_floor_rel * ||scaled A||_inf.
  double pivot_floor_rel = 1e-13;
  /// Reuse the first system's equilibration instead of recomputing it per system.
  bool freeze_scaling = false;
};

enum class FactorStatus { Ok, UnstablePivot };

struct FactorDiagnostics {
  FactorStatus status = FactorStatus::Ok;
  double min_pivot = 0.0;   ///< smallest |U(i,i)| reached
  double growth = 0.0;      ///< max|U| / max|scaled A|
  double pivot_floor = 0.0;
  Index unstable_row = -1;  ///< first row whose pivot fell under the floor
};

/// Frozen symbolic analysis plus the current numeric factors.
class RefactorizationHandle {
 public:
  [[nodiscard]] Index size() const { return lu_.n; }
  [[nodiscard]] const CombinedLU& factors() const { return lu_; }
  [[nodiscard]] const Permutation& row_permutation() const { return lu_.p; }
  [[nodiscard]] const Permutation& column_permutation() const { return lu_.q; }
  [[nodiscard]] const Permutation& fill_ordering() const { return ordering_; }
  [[nodiscard]] const std::vector<double>& row_scale() const { return row_scale_; }
  [[nodiscard]] const std::vector<double>& col_scale() const { return col_scale_; }
  [[nodiscard]] const FactorDiagnostics& diagnostics() const { return diag_; }
  [[nodiscard]] bool numerically_valid() const { return diag_.status == FactorStatus::Ok; }
  [[nodiscard]] const FactorOptions& options() const { return opts_; }

  /// True when `a` carries exactly the pattern this handle was analysed for.
  [[nodiscard]] bool matches_pattern(const CscMatrix& a) const {
    return a.n_rows == lu_.n && a.n_cols == lu_.n && a.col_ptr == a_col_ptr_ && a.row_ind == a_row_ind_;
  }

 private:
  friend RefactorizationHandle analyze_and_factorize(const CscMatrix&, const Permutation&, const FactorOptions&);
  friend FactorDiagnostics refactorize(RefactorizationHandle&, const CscMatrix&);

  FactorOptions opts_;
  Permutation ordering_;
  CombinedLU lu_;
  std::vector<Index> a_col_ptr_;
  std::vector<Index> a_row_ind_;
  std::vector<Index> a_to_lu_;  ///< position of each A entry inside lu_
  std::vector<double> row_scale_;
  std::vector<double> col_scale_;
  FactorDiagnostics diag_;
  std::vector<Index> work_pos_;
};

namespace detail {

struct PivotedLU {
  CscMatrix l;  // unit diagonal stored first in each column
  CscMatrix u;  // diagonal stored last in each column
  std::vector<Index> pinv;
};

/// Depth-first search from node j in the graph of L (rows renumbered through pinv).
/// Pushes the reach of j onto xi[top..n) in topological order; returns new top.
inline Index dfs(Index j, const std::vector<Index>& lp, const std::vector<Index>& li,
                 const std::vector<Index>& pinv, std::vector<char>& marked, Index top,
                 std::vector<Index>& xi, std::vector<Index>& stack, std::vector<Index>& next_child) {
  Index head = 0;
  stack[0] = j;
  while (head >= 0) {
    j = stack[head];
    const Index col = pinv[j];
    if (!marked[j]) {
      marked[j] = 1;
      next_child[head] = (col < 0) ? 0 : lp[col];
    }
    bool done = true;
    const Index end = (col < 0) ? 0 : lp[col + 1];
    for (Index p = next_child[head]; p < end; ++p) {
      Index i = li[p];
      if (marked[i]) continue;
      next_child[head] = p + 1;
      stack[++head] = i;
      done = false;
      break;
    }
    if (done) {
      --head;
      xi[--top] = j;
    }
  }
  return top;
}

/// Left-looking LU with partial pivoting of the columns of `a` taken in order `q`.
inline PivotedLU gilbert_peierls(const CscMatrix& a, const Permutation& q, double tol) {
  const Index n = a.n_cols;
  std::vector<Index> lp(n + 1, 0), up(n + 1, 0);
  std::vector<Index> li, ui;
  std::vector<double> lx, ux;
  li.reserve(4 * a.nnz() + n);
  lx.reserve(4 * a.nnz() + n);
  ui.reserve(4 * a.nnz() + n);
  ux.reserve(4 * a.nnz() + n);

  std::vector<Index> pinv(n, -1);
  std::vector<double> x(n, 0.0);
  std::vector<Index> xi(n), stack(n), next_child(n);
  std::vector<char> marked(n, 0);

  for (Index k = 0; k < n; ++k) {
    lp[k] = static_cast<Index>(li.size());
    up[k] = static_cast<Index>(ui.size());
    const Index col = q[k];

    // Symbolic: reach of pattern(A(:,col)) in the graph of L.
    Index top = n;
    for (Index p = a.col_ptr[col]; p < a.col_ptr[col + 1]; ++p) {
      if (!marked[a.row_ind[p]]) top = dfs(a.row_ind[p], lp, li, pinv, marked, top, xi, stack, next_child);
    }
    for (Index p = top; p < n; ++p) marked[xi[p]] = 0;

    // Numeric: sparse forward substitution x = L \ A(:,col).
    for (Index p = top; p < n; ++p) x[xi[p]] = 0.0;
    for (Index p = a.col_ptr[col]; p < a.col_ptr[col + 1]; ++p) x[a.row_ind[p]] = a.values[p];
    for (Index p = top; p < n; ++p) {
      const Index j = xi[p];
      const Index jc = pinv[j];
      if (jc < 0) continue;
      const double xj = x[j];  // L has unit diagonal
      for (Index t = lp[jc] + 1; t < lp[jc + 1]; ++t) x[li[t]] -= lx[t] * xj;
    }

    // Pivot search over rows not yet pivotal; the rest go to U.
    Index ipiv = -1;
    double best = -1.0;
    for (Index p = top; p < n; ++p) {
      const Index i = xi[p];
      if (pinv[i] < 0) {
        const double t = std::abs(x[i]);
        if (t > best) {
          best = t;
          ipiv = i;
        }
      } else {
        ui.push_back(pinv[i]);
        ux.push_back(x[i]);
      }
    }
    if (ipiv < 0 || best <= 0.0) {
      throw SingularMatrix("LU: column " + std::to_string(col) + " has no nonzero pivot candidate");
    }
    if (pinv[col] < 0 && std::abs(x[col]) >= tol * best) ipiv = col;

    const double pivot = x[ipiv];
    ui.push_back(k);
    ux.push_back(pivot);
    pinv[ipiv] = k;
    li.push_back(ipiv);
    lx.push_back(1.0);
    for (Index p = top; p < n; ++p) {
      const Index i = xi[p];
      if (pinv[i] < 0) {
        li.push_back(i);
        lx.push_back(x[i] / pivot);
      }
      x[i] = 0.0;
    }
  }
  lp[n] = static_cast<Index>(li.size());
  up[n] = static_cast<Index>(ui.size());

  // Renumber L rows into pivot order and sort every column.
  for (auto& r : li) r = pinv[r];
  auto sort_columns = [n](std::vector<Index>& ptr, std::vector<Index>& ind, std::vector<double>& val) {
    std::vector<std::pair<Index, double>> buf;
    for (Index j = 0; j < n; ++j) {
      buf.clear();
      for (Index p = ptr[j]; p < ptr[j + 1]; ++p) buf.emplace_back(ind[p], val[p]);
      std::sort(buf.begin(), buf.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (Index p = ptr[j]; p < ptr[j + 1]; ++p) {
        ind[p] = buf[p - ptr[j]].first;
        val[p] = buf[p - ptr[j]].second;
      }
    }
  };
  sort_columns(lp, li, lx);
  sort_columns(up, ui, ux);

  PivotedLU out;
  out.l = CscMatrix(n, n);
  out.l.col_ptr = std::move(lp);
  out.l.row_ind = std::move(li);
  out.l.values = std::move(lx);
  out.u = CscMatrix(n, n);
  out.u.col_ptr = std::move(up);
  out.u.row_ind = std::move(ui);
  out.u.values = std::move(ux);
  out.pinv = std::move(pinv);
  return out;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline FactorDiagnostics pivot_diagnostics(const CombinedLU& lu, double scaled_norm, double floor_rel,
                                           double scaled_max) {
  FactorDiagnostics d;
  d.pivot_floor = floor_rel * scaled_norm;
  d.min_pivot = std::numeric_limits<double>::infinity();
  double umax = 0.0;
  for (Index i = 0; i < lu.n; ++i) {
    const double piv = std::abs(lu.values[lu.diag_pos[i]]);
    if (piv < d.min_pivot) d.min_pivot = piv;
    if (piv < d.pivot_floor && d.unstable_row < 0) d.unstable_row = i;
    for (Index t = lu.diag_pos[i]; t < lu.row_ptr[i + 1]; ++t) umax = std::max(umax, std::abs(lu.values[t]));
  }
  if (lu.n == 0) d.min_pivot = 0.0;
  d.growth = scaled_max > 0.0 ? umax / scaled_max : 0.0;
  d.status = d.unstable_row >= 0 ? FactorStatus::UnstablePivot : FactorStatus::Ok;
  return d;
}

}  // namespace detail

/// Analysis with a caller-supplied fill-reducing ordering (pattern-only work reused).
inline RefactorizationHandle analyze_and_factorize(const CscMatrix& a, const Permutation& ordering,
                                                   const FactorOptions& opts = {}) {
  if (a.n_rows != a.n_cols) throw DimensionMismatch("analyze_and_factorize: matrix is not square");
  if (ordering.size() != a.n_cols) throw DimensionMismatch("analyze_and_factorize: ordering size");
  RefactorizationHandle h;
  h.opts_ = opts;
  h.ordering_ = ordering;

  auto eq = equilibrate(a);
  auto lu = detail::gilbert_peierls(eq.scaled, ordering, opts.pivot_tolerance);
  std::vector<Index> p_forward(a.n_rows);
  for (Index i = 0; i < a.n_rows; ++i) p_forward[lu.pinv[i]] = i;
  h.lu_ = combine_lu(lu.l, lu.u, Permutation(std::move(p_forward)), ordering);

  h.a_col_ptr_ = a.col_ptr;
  h.a_row_ind_ = a.row_ind;
  h.a_to_lu_.resize(a.nnz());
  const auto& c = h.lu_;
  for (Index j = 0; j < a.n_cols; ++j) {
    const Index qj = c.q.inverse(j);
    for (Index t = a.col_ptr[j]; t < a.col_ptr[j + 1]; ++t) {
      const Index pi = c.p.inverse(a.row_ind[t]);
      auto first = c.col_ind.begin() + c.row_ptr[pi];
      auto last = c.col_ind.begin() + c.row_ptr[pi + 1];
      auto it = std::lower_bound(first, last, qj);
      assert(it != last && *it == qj);
      h.a_to_lu_[t] = static_cast<Index>(it - c.col_ind.begin());
    }
  }
  h.row_scale_ = std::move(eq.row_scale);
  h.col_scale_ = std::move(eq.col_scale);
  h.work_pos_.assign(a.n_cols, -1);
  h.diag_ = detail::pivot_diagnostics(h.lu_, norm_inf(eq.scaled), opts.pivot_floor_rel,
                                      detail::max_abs(eq.scaled.values));
  // A fresh pivoted factorization is the reference point; the floor only guards
  // pivot-free refactorization.
  h.diag_.status = FactorStatus::Ok;
  h.diag_.unstable_row = -1;
  return h;
}

/// Full analysis: equilibration, AMD ordering, pivoted left-looking LU.
inline RefactorizationHandle analyze_and_factorize(const CscMatrix& a, const FactorOptions& opts = {}) {
  if (a.n_rows != a.n_cols) throw DimensionMismatch("analyze_and_factorize: matrix is not square");
  return analyze_and_factorize(a, amd_order(a), opts);
}

/// Numeric LU of a same-pattern matrix using the frozen permutations and factor
/// patterns (row-wise elimination on the combined storage, no pivoting). A pivot
/// under the floor stops the sweep and reports UnstablePivot.
inline FactorDiagnostics refactorize(RefactorizationHandle& h, const CscMatrix& a_new) {
  if (!h.matches_pattern(a_new)) {
    throw PatternMismatch("refactorize: matrix pattern differs from the analysed pattern");
  }
  if (!h.opts_.freeze_scaling) {
    auto eq = equilibrate(a_new);
    h.row_scale_ = std::move(eq.row_scale);
    h.col_scale_ = std::move(eq.col_scale);
  }
  auto& lu = h.lu_;
  std::fill(lu.values.begin(), lu.values.end(), 0.0);
  double scaled_max = 0.0;
  std::vector<double> row_sum(lu.n, 0.0);
  for (Index j = 0; j < a_new.n_cols; ++j) {
    for (Index t = a_new.col_ptr[j]; t < a_new.col_ptr[j + 1]; ++t) {
      const Index i = a_new.row_ind[t];
      const double v = a_new.values[t] * h.row_scale_[i] * h.col_scale_[j];
      lu.values[h.a_to_lu_[t]] = v;
      scaled_max = std::max(scaled_max, std::abs(v));
      row_sum[i] += std::abs(v);
    }
  }
  const double scaled_norm = row_sum.empty() ? 0.0 : *std::max_element(row_sum.begin(), row_sum.end());
  const double floor = h.opts_.pivot_floor_rel * scaled_norm;

  auto& pos = h.work_pos_;
  FactorDiagnostics d;
  d.pivot_floor = floor;
  d.min_pivot = std::numeric_limits<double>::infinity();
  double umax = 0.0;
  for (Index i = 0; i < lu.n; ++i) {
    const Index begin = lu.row_ptr[i];
    const Index end = lu.row_ptr[i + 1];
    for (Index t = begin; t < end; ++t) pos[lu.col_ind[t]] = t;
    for (Index t = begin; t < lu.diag_pos[i]; ++t) {
      const Index j = lu.col_ind[t];
      const double lij = lu.values[t] / lu.values[lu.diag_pos[j]];
      lu.values[t] = lij;
      if (lij == 0.0) continue;
      for (Index s = lu.diag_pos[j] + 1; s < lu.row_ptr[j + 1]; ++s) {
        const Index target = pos[lu.col_ind[s]];
        assert(target >= 0 && "frozen pattern is not closed under elimination");
        lu.values[target] -= lij * lu.values[s];
      }
    }
    for (Index t = begin; t < end; ++t) pos[lu.col_ind[t]] = -1;

    const double piv = std::abs(lu.values[lu.diag_pos[i]]);
    d.min_pivot = std::min(d.min_pivot, piv);
    for (Index t = lu.diag_pos[i]; t < end; ++t) umax = std::max(umax, std::abs(lu.values[t]));
    if (!(piv >= floor) || piv == 0.0) {
      d.status = FactorStatus::UnstablePivot;
      d.unstable_row = i;
      break;
    }
  }
  if (lu.n == 0) d.min_pivot = 0.0;
  d.growth = scaled_max > 0.0 ? umax / scaled_max : 0.0;
  h.diag_ = d;
  return d;
}

/// x = S_c Q U^{-1} L^{-1} P S_r b. No refinement.
inline std::vector<double> triangular_solve(const RefactorizationHandle& h, std::span<const double> b) {
  if (!h.numerically_valid()) throw SingularMatrix("triangular_solve: handle holds unstable factors");
  const auto& lu = h.factors();
  const Index n = lu.n;
  if (static_cast<Index>(b.size()) != n) throw DimensionMismatch("triangular_solve: rhs length");
  std::vector<double> y(n);
  for (Index k = 0; k < n; ++k) {
    const Index i = lu.p[k];
    y[k] = b[i] * h.row_scale()[i];
  }
  for (Index i = 0; i < n; ++i) {
    double s = y[i];
    for (Index t = lu.row_ptr[i]; t < lu.diag_pos[i]; ++t) s -= lu.values[t] * y[lu.col_ind[t]];
    y[i] = s;
  }
  for (Index i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (Index t = lu.diag_pos[i] + 1; t < lu.row_ptr[i + 1]; ++t) s -= lu.values[t] * y[lu.col_ind[t]];
    y[i] = s / lu.values[lu.diag_pos[i]];
  }
  std::vector<double> x(n);
  for (Index k = 0; k < n; ++k) {
    const Index j = lu.q[k];
    x[j] = y[k] * h.col_scale()[j];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Iterative refinement

struct RefineOptions {
  double rtol = 1e-12;
  int max_iters = 10;
  /// A sweep that does not shrink the residual below ratio * previous counts as stagnation.
  double stagnation_ratio = 0.5;
};

/// Residuals are relative residuals of the equilibrated system; see
/// scaled_relative_residual.
struct SolveStats {
  int iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  bool stagnated = false;
  bool fallback = false;
  std::vector<double> history;  ///< accepted residuals, nonincreasing
};

/// ||b - A x||_inf / (||A||_inf ||x||_inf + ||b||_inf)
inline double relative_residual(const CscMatrix& a, std::span<const double> x, std::span<const double> b,
                                double a_norm) {
  auto ax = spmv(a, x);
  double r = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) r = std::max(r, std::abs(b[i] - ax[i]));
  const double denom = a_norm * norm_inf(x) + norm_inf(b);
  return denom > 0.0 ? r / denom : r;
}

inline double relative_residual(const CscMatrix& a, std::span<const double> x, std::span<const double> b) {
  return relative_residual(a, x, b, norm_inf(a));
}

/// The same measure on the equilibrated system diag(rs) A diag(cs) z = diag(rs) b
/// with z = diag(cs)^{-1} x. Badly scaled rows (a barrier diagonal of 1e12 next to
/// unit entries) no longer hide errors in the small components.
inline double scaled_relative_residual(const CscMatrix& a, std::span<const double> x, std::span<const double> b,
                                       std::span<const double> rs, std::span<const double> cs) {
  const auto n = static_cast<std::size_t>(a.n_rows);
  if (x.size() != static_cast<std::size_t>(a.n_cols) || b.size() != n || rs.size() != n || cs.size() != x.size()) {
    throw DimensionMismatch("scaled_relative_residual: inconsistent dimensions");
  }
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> row_abs(n, 0.0);
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      const Index i = a.row_ind[p];
      r[i] -= a.values[p] * x[j];
      row_abs[i] += std::abs(a.values[p]) * rs[i] * cs[j];
    }
  }
  double rmax = 0.0, bmax = 0.0, anorm = 0.0, zmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rmax = std::max(rmax, std::abs(r[i] * rs[i]));
    bmax = std::max(bmax, std::abs(b[i] * rs[i]));
    anorm = std::max(anorm, row_abs[i]);
  }
  for (std::size_t j = 0; j < x.size(); ++j) zmax = std::max(zmax, std::abs(x[j] / cs[j]));
  const double denom = anorm * zmax + bmax;
  return denom > 0.0 ? rmax / denom : rmax;
}

/// Classical refinement: r = b - A x, x += solve(r), until the relative residual
/// of the equilibrated system reaches rtol, max_iters sweeps ran, or a sweep
/// stagnates. Only improving iterates are accepted.
inline SolveStats refine(const RefactorizationHandle& h, const CscMatrix& a, std::span<const double> b,
                         std::vector<double>& x, const RefineOptions& opts = {}) {
  if (a.n_rows != h.size() || static_cast<Index>(b.size()) != h.size() ||
      static_cast<Index>(x.size()) != h.size()) {
    throw DimensionMismatch("refine: inconsistent dimensions");
  }
  const auto& rs = h.row_scale();
  const auto& cs = h.col_scale();
  double a_norm = 0.0;
  {
    std::vector<double> row_abs(a.n_rows, 0.0);
    for (Index j = 0; j < a.n_cols; ++j) {
      for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
        row_abs[a.row_ind[p]] += std::abs(a.values[p]) * rs[a.row_ind[p]] * cs[j];
      }
    }
    for (double v : row_abs) a_norm = std::max(a_norm, v);
  }
  double b_norm = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) b_norm = std::max(b_norm, std::abs(b[i] * rs[i]));
  SolveStats st;
  auto residual_of = [&](const std::vector<double>& v, std::vector<double>& r) {
    auto av = spmv(a, v);
    r.resize(av.size());
    double rmax = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      r[i] = b[i] - av[i];
      rmax = std::max(rmax, std::abs(r[i] * rs[i]));
    }
    double zmax = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) zmax = std::max(zmax, std::abs(v[j] / cs[j]));
    const double denom = a_norm * zmax + b_norm;
    return denom > 0.0 ? rmax / denom : rmax;
  };
  std::vector<double> r;
  double res = residual_of(x, r);
  st.initial_residual = res;
  st.history.push_back(res);
  std::vector<double> trial(x.size());
  std::vector<double> r_trial;
  while (res > opts.rtol && st.iterations < opts.max_iters) {
    auto d = triangular_solve(h, r);
    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + d[i];
    const double res_trial = residual_of(trial, r_trial);
    ++st.iterations;
    if (!(res_trial <= opts.stagnation_ratio * res)) {
      if (res_trial < res) {
        x.swap(trial);
        res = res_trial;
        st.history.push_back(res);
      }
      st.stagnated = res > opts.rtol;
      break;
    }
    x.swap(trial);
    r.swap(r_trial);
    res = res_trial;
    st.history.push_back(res);
  }
  st.final_residual = res;
  return st;
}

// ---------------------------------------------------------------------------
// Sequence driver

enum class Strategy { RefactorizeSequence, FactorizeEach };

inline const char* to_string(Strategy s) {
  return s == Strategy::RefactorizeSequence ? "refactorize" : "factorize-each";
}

struct SequenceOptions {
  Strategy strategy = Strategy::RefactorizeSequence;
  FactorOptions factor;
  RefineOptions refine;
  /// A refactorized solve whose refined residual stays above this triggers a
  /// fresh pivoted factorization of the same system.
  double fallback_rtol = 1e-10;
};

struct SequenceStep {
  std::vector<double> x;
  SolveStats stats;
  FactorDiagnostics diagnostics;
  bool analyzed = false;      ///< a full analysis ran for this system
  bool refactorized = false;  ///< frozen-pattern refactorization was attempted
  std::int64_t analyze_ns = 0;
  std::int64_t factor_ns = 0;
  std::int64_t solve_ns = 0;  ///< triangular solves plus refinement
};

/// Solves K_1 x_1 = b_1, K_2 x_2 = b_2, ... for matrices sharing one pattern.
/// RefactorizeSequence analyses the first system and refactorizes the rest, with a
/// fresh pivoted factorization as fallback on an unstable pivot or a refined
/// residual above fallback_rtol. FactorizeEach reuses only the fill ordering and
/// runs the pivoted factorization for every system.
class SequenceSolver {
 public:
  explicit SequenceSolver(SequenceOptions opts = {}) : opts_(std::move(opts)) {}

  SequenceStep solve(const CscMatrix& a, std::span<const double> b) {
    using clock = std::chrono::steady_clock;
    auto ns_since = [](clock::time_point t0) {
      return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
    };
    SequenceStep step;
    if (handle_ && !handle_->matches_pattern(a)) {
      throw PatternMismatch("solve_sequence: system " + std::to_string(systems_) +
                            " does not share the sequence pattern");
    }
    ++systems_;

    auto t0 = clock::now();
    if (!handle_) {
      handle_ = analyze_and_factorize(a, opts_.factor);
      ++analyses_;
      step.analyzed = true;
      step.analyze_ns = ns_since(t0);
    } else if (opts_.strategy == Strategy::FactorizeEach) {
      handle_ = analyze_and_factorize(a, handle_->fill_ordering(), opts_.factor);
      ++factorizations_;
      step.factor_ns = ns_since(t0);
    } else {
      step.refactorized = true;
      ++refactorizations_;
      refactorize(*handle_, a);
      step.factor_ns = ns_since(t0);
    }

    bool need_fallback = !handle_->numerically_valid();
    if (!need_fallback) {
      t0 = clock::now();
      step.x = triangular_solve(*handle_, b);
      step.stats = refine(*handle_, a, b, step.x, opts_.refine);
      step.solve_ns += ns_since(t0);
      need_fallback = step.refactorized && step.stats.final_residual > opts_.fallback_rtol;
    }
    if (need_fallback) {
      t0 = clock::now();
      handle_ = analyze_and_factorize(a, opts_.factor);
      ++fallbacks_;
      step.factor_ns += ns_since(t0);
      t0 = clock::now();
      step.x = triangular_solve(*handle_, b);
      step.stats = refine(*handle_, a, b, step.x, opts_.refine);
      step.stats.fallback = true;
      step.solve_ns += ns_since(t0);
    }
    step.diagnostics = handle_->diagnostics();
    return step;
  }

  [[nodiscard]] const SequenceOptions& options() const { return opts_; }
  [[nodiscard]] const RefactorizationHandle* handle() const { return handle_ ? &*handle_ : nullptr; }
  [[nodiscard]] int systems() const { return systems_; }
  [[nodiscard]] int analyses() const { return analyses_; }
  [[nodiscard]] int refactorizations() const { return refactorizations_; }
  [[nodiscard]] int factorizations() const { return factorizations_; }
  [[nodiscard]] int fallbacks() const { return fallbacks_; }

  /// Forget the frozen analysis; the next system starts a new sequence.
  void reset() { handle_.reset(); }

 private:
  SequenceOptions opts_;
  std::optional<RefactorizationHandle> handle_;
  int systems_ = 0;
  int analyses_ = 0;
  int refactorizations_ = 0;
  int factorizations_ = 0;
  int fallbacks_ = 0;
};

/// Batch form of SequenceSolver: one (x, stats) per system.
inline std::vector<SequenceStep> solve_sequence(std::span<const CscMatrix> matrices,
                                                std::span<const std::vector<double>> rhs,
                                                const SequenceOptions& opts = {}) {
  if (matrices.empty()) throw DimensionMismatch("solve_sequence: empty stream");
  if (matrices.size() != rhs.size()) throw DimensionMismatch("solve_sequence: matrix/rhs count differs");
  SequenceSolver solver(opts);
  std::vector<SequenceStep> out;
  out.reserve(matrices.size());
  for (std::size_t k = 0; k < matrices.size(); ++k) out.push_back(solver.solve(matrices[k], rhs[k]));
  return out;
}

}  // namespace gridkkt

#endif  // GRIDKKT_LINEAR_SOLVER_HPP
