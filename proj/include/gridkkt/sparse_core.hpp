#ifndef GRIDKKT_SPARSE_CORE_HPP
#define GRIDKKT_SPARSE_CORE_HPP

// Compressed sparse storage, conversions, permutations and power-of-two
// equilibration shared by the NLP evaluators and the LU solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridkkt/errors.hpp"

namespace gridkkt {

using Index = int;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Assembly format. Duplicates are allowed and summed by compress().
struct TripletMatrix {
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<Triplet> entries;

  TripletMatrix() = default;
  TripletMatrix(Index rows, Index cols) : n_rows(rows), n_cols(cols) {}

  void add(Index row, Index col, double value) {
    if (row < 0 || row >= n_rows || col < 0 || col >= n_cols) {
      throw DimensionMismatch("triplet (" + std::to_string(row) + "," + std::to_string(col) +
                              ") outside " + std::to_string(n_rows) + "x" + std::to_string(n_cols));
    }
    entries.push_back({row, col, value});
  }
};

/// Compressed sparse column. Row indices are strictly increasing inside a column.
struct CscMatrix {
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<Index> col_ptr{0};
  std::vector<Index> row_ind;
  std::vector<double> values;

  CscMatrix() = default;
  CscMatrix(Index rows, Index cols) : n_rows(rows), n_cols(cols), col_ptr(cols + 1, 0) {}

  [[nodiscard]] Index nnz() const { return col_ptr.empty() ? 0 : col_ptr.back(); }

  /// Value at (row, col); zero when the entry is not stored.
  [[nodiscard]] double at(Index row, Index col) const {
    auto first = row_ind.begin() + col_ptr[col];
    auto last = row_ind.begin() + col_ptr[col + 1];
    auto it = std::lower_bound(first, last, row);
    return (it != last && *it == row) ? values[it - row_ind.begin()] : 0.0;
  }

  [[nodiscard]] bool same_pattern(const CscMatrix& other) const {
    return n_rows == other.n_rows && n_cols == other.n_cols && col_ptr == other.col_ptr &&
           row_ind == other.row_ind;
  }

  /// Throws DimensionMismatch when the compressed invariants do not hold.
  void validate() const {
    if (static_cast<Index>(col_ptr.size()) != n_cols + 1 || col_ptr.front() != 0) {
      throw DimensionMismatch("csc: bad column pointer array");
    }
    if (static_cast<Index>(row_ind.size()) != nnz() || values.size() != row_ind.size()) {
      throw DimensionMismatch("csc: index/value length differs from nnz");
    }
    for (Index j = 0; j < n_cols; ++j) {
      if (col_ptr[j] > col_ptr[j + 1]) throw DimensionMismatch("csc: column pointers decrease");
      for (Index p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
        if (row_ind[p] < 0 || row_ind[p] >= n_rows) throw DimensionMismatch("csc: row out of range");
        if (p > col_ptr[j] && row_ind[p] <= row_ind[p - 1]) {
          throw DimensionMismatch("csc: rows not strictly increasing in column " + std::to_string(j));
        }
      }
    }
  }
};

/// Compressed sparse row. Column indices are strictly increasing inside a row.
struct CsrMatrix {
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<Index> row_ptr{0};
  std::vector<Index> col_ind;
  std::vector<double> values;

  CsrMatrix() = default;
  CsrMatrix(Index rows, Index cols) : n_rows(rows), n_cols(cols), row_ptr(rows + 1, 0) {}

  [[nodiscard]] Index nnz() const { return row_ptr.empty() ? 0 : row_ptr.back(); }
};

inline CscMatrix compress(const TripletMatrix& t) {
  CscMatrix a(t.n_rows, t.n_cols);
  for (const auto& e : t.entries) ++a.col_ptr[e.col + 1];
  std::partial_sum(a.col_ptr.begin(), a.col_ptr.end(), a.col_ptr.begin());

  // Bucket by column, then sort and merge duplicates inside each column.
  std::vector<std::pair<Index, double>> bucket(t.entries.size());
  std::vector<Index> next(a.col_ptr.begin(), a.col_ptr.end() - 1);
  for (const auto& e : t.entries) bucket[next[e.col]++] = {e.row, e.value};

  a.row_ind.reserve(t.entries.size());
  a.values.reserve(t.entries.size());
  std::vector<Index> out_ptr(t.n_cols + 1, 0);
  for (Index j = 0; j < t.n_cols; ++j) {
    auto first = bucket.begin() + a.col_ptr[j];
    auto last = bucket.begin() + a.col_ptr[j + 1];
    std::stable_sort(first, last, [](const auto& x, const auto& y) { return x.first < y.first; });
    for (auto it = first; it != last; ++it) {
      if (static_cast<Index>(a.row_ind.size()) > out_ptr[j] && a.row_ind.back() == it->first) {
        a.values.back() += it->second;
      } else {
        a.row_ind.push_back(it->first);
        a.values.push_back(it->second);
      }
    }
    out_ptr[j + 1] = static_cast<Index>(a.row_ind.size());
  }
  a.col_ptr = std::move(out_ptr);
  return a;
}

/// Transpose of a CSC matrix, again in CSC. Values are moved, never combined.
inline CscMatrix transpose(const CscMatrix& a) {
  CscMatrix t(a.n_cols, a.n_rows);
  for (Index p = 0; p < a.nnz(); ++p) ++t.col_ptr[a.row_ind[p] + 1];
  std::partial_sum(t.col_ptr.begin(), t.col_ptr.end(), t.col_ptr.begin());
  t.row_ind.resize(a.nnz());
  t.values.resize(a.nnz());
  std::vector<Index> next(t.col_ptr.begin(), t.col_ptr.end() - 1);
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      Index q = next[a.row_ind[p]]++;
      t.row_ind[q] = j;
      t.values[q] = a.values[p];
    }
  }
  return t;
}

inline CsrMatrix csc_to_csr(const CscMatrix& a) {
  CscMatrix t = transpose(a);
  CsrMatrix r(a.n_rows, a.n_cols);
  r.row_ptr = std::move(t.col_ptr);
  r.col_ind = std::move(t.row_ind);
  r.values = std::move(t.values);
  return r;
}

inline CscMatrix csr_to_csc(const CsrMatrix& a) {
  CscMatrix as_csc(a.n_cols, a.n_rows);
  as_csc.col_ptr = a.row_ptr;
  as_csc.row_ind = a.col_ind;
  as_csc.values = a.values;
  return transpose(as_csc);
}

inline CscMatrix identity_csc(Index n) {
  CscMatrix a(n, n);
  a.row_ind.resize(n);
  a.values.assign(n, 1.0);
  for (Index j = 0; j < n; ++j) {
    a.col_ptr[j + 1] = j + 1;
    a.row_ind[j] = j;
  }
  return a;
}

/// Max-row-sum norm.
inline double norm_inf(const CscMatrix& a) {
  std::vector<double> row_sum(a.n_rows, 0.0);
  for (Index p = 0; p < a.nnz(); ++p) row_sum[a.row_ind[p]] += std::abs(a.values[p]);
  return row_sum.empty() ? 0.0 : *std::max_element(row_sum.begin(), row_sum.end());
}

inline double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

/// FNV-1a over dimensions and index arrays; values do not participate.
inline std::uint64_t pattern_hash(const CscMatrix& a) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ULL;
    }
  };
  mix(a.n_rows);
  mix(a.n_cols);
  for (Index v : a.col_ptr) mix(v);
  for (Index v : a.row_ind) mix(v);
  return h;
}

// ---------------------------------------------------------------------------
// Products

inline std::vector<double> spmv(const CsrMatrix& a, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != a.n_cols) throw DimensionMismatch("spmv: x length");
  std::vector<double> y(a.n_rows, 0.0);
  for (Index i = 0; i < a.n_rows; ++i) {
    double s = 0.0;
    for (Index p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) s += a.values[p] * x[a.col_ind[p]];
    y[i] = s;
  }
  return y;
}

inline std::vector<double> spmv(const CscMatrix& a, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != a.n_cols) throw DimensionMismatch("spmv: x length");
  std::vector<double> y(a.n_rows, 0.0);
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) y[a.row_ind[p]] += a.values[p] * x[j];
  }
  return y;
}

/// y = A x for symmetric A of which only the lower triangle (row >= col) is stored.
inline std::vector<double> spmv_symmetric_lower(const CscMatrix& lower, std::span<const double> x) {
  if (lower.n_rows != lower.n_cols || static_cast<Index>(x.size()) != lower.n_cols) {
    throw DimensionMismatch("spmv_symmetric_lower: dimensions");
  }
  std::vector<double> y(lower.n_rows, 0.0);
  for (Index j = 0; j < lower.n_cols; ++j) {
    for (Index p = lower.col_ptr[j]; p < lower.col_ptr[j + 1]; ++p) {
      Index i = lower.row_ind[p];
      y[i] += lower.values[p] * x[j];
      if (i != j) y[j] += lower.values[p] * x[i];
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Permutations

/// new position k holds old index forward[k].
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<Index> forward) : forward_(std::move(forward)) {
    inverse_.assign(forward_.size(), -1);
    for (std::size_t k = 0; k < forward_.size(); ++k) {
      Index old = forward_[k];
      if (old < 0 || old >= static_cast<Index>(forward_.size()) || inverse_[old] != -1) {
        throw DimensionMismatch("permutation is not a bijection");
      }
      inverse_[old] = static_cast<Index>(k);
    }
  }

  static Permutation identity(Index n) {
    std::vector<Index> f(n);
    std::iota(f.begin(), f.end(), 0);
    return Permutation(std::move(f));
  }

  [[nodiscard]] Index size() const { return static_cast<Index>(forward_.size()); }
  [[nodiscard]] Index operator[](Index k) const { return forward_[k]; }
  [[nodiscard]] Index inverse(Index old) const { return inverse_[old]; }
  [[nodiscard]] const std::vector<Index>& forward() const { return forward_; }
  [[nodiscard]] const std::vector<Index>& inverse() const { return inverse_; }

  [[nodiscard]] Permutation inverted() const { return Permutation(inverse_); }

  /// out[k] = x[forward[k]]
  [[nodiscard]] std::vector<double> apply(std::span<const double> x) const {
    check(x.size());
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[forward_[k]];
    return out;
  }

  /// out[forward[k]] = x[k]; undoes apply().
  [[nodiscard]] std::vector<double> unapply(std::span<const double> x) const {
    check(x.size());
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[forward_[k]] = x[k];
    return out;
  }

  friend bool operator==(const Permutation& a, const Permutation& b) { return a.forward_ == b.forward_; }

 private:
  void check(std::size_t n) const {
    if (n != forward_.size()) throw DimensionMismatch("permutation/vector length differ");
  }

  std::vector<Index> forward_;
  std::vector<Index> inverse_;
};

/// C(i, j) = A(p[i], q[j]), i.e. C = P A Q with P, Q the permutation matrices of p and q.
inline CscMatrix permute_system(const CscMatrix& a, const Permutation& p, const Permutation& q) {
  if (p.size() != a.n_rows || q.size() != a.n_cols) throw DimensionMismatch("permute_system");
  CscMatrix c(a.n_rows, a.n_cols);
  c.row_ind.reserve(a.nnz());
  c.values.reserve(a.nnz());
  std::vector<std::pair<Index, double>> col;
  for (Index j = 0; j < a.n_cols; ++j) {
    Index src = q[j];
    col.clear();
    for (Index t = a.col_ptr[src]; t < a.col_ptr[src + 1]; ++t) {
      col.emplace_back(p.inverse(a.row_ind[t]), a.values[t]);
    }
    std::sort(col.begin(), col.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [r, v] : col) {
      c.row_ind.push_back(r);
      c.values.push_back(v);
    }
    c.col_ptr[j + 1] = static_cast<Index>(c.row_ind.size());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Combined L+U storage

/// Row-major storage of a unit-lower L (diagonal implicit) and upper U in one
/// structure: row i holds L(i, j<i) followed by U(i, j>=i). Indices refer to the
/// permuted system P A Q, with P and Q kept alongside.
struct CombinedLU {
  Index n = 0;
  std::vector<Index> row_ptr{0};
  std::vector<Index> col_ind;
  std::vector<double> values;
  std::vector<Index> diag_pos;  ///< position of U(i,i) inside row i
  Permutation p;
  Permutation q;

  [[nodiscard]] Index nnz() const { return row_ptr.back(); }
  [[nodiscard]] Index l_nnz() const {
    Index s = 0;
    for (Index i = 0; i < n; ++i) s += diag_pos[i] - row_ptr[i];
    return s;
  }
  [[nodiscard]] Index u_nnz() const { return nnz() - l_nnz(); }
};

/// Merge factors of P A Q = L U. L must be lower triangular; a stored diagonal in L
/// must be exactly one and is dropped. Every U diagonal must be structurally present.
inline CombinedLU combine_lu(const CscMatrix& l, const CscMatrix& u, const Permutation& p,
                             const Permutation& q) {
  const Index n = l.n_rows;
  if (l.n_cols != n || u.n_rows != n || u.n_cols != n || p.size() != n || q.size() != n) {
    throw DimensionMismatch("combine_lu: factors are not conformable");
  }
  CombinedLU c;
  c.n = n;
  c.p = p;
  c.q = q;
  c.row_ptr.assign(n + 1, 0);
  std::vector<bool> has_diag(n, false);
  for (Index j = 0; j < n; ++j) {
    for (Index t = l.col_ptr[j]; t < l.col_ptr[j + 1]; ++t) {
      Index i = l.row_ind[t];
      if (i < j) throw DimensionMismatch("combine_lu: L has an entry above the diagonal");
      if (i == j) {
        if (l.values[t] != 1.0) throw DimensionMismatch("combine_lu: L diagonal is not unit");
        continue;
      }
      ++c.row_ptr[i + 1];
    }
    for (Index t = u.col_ptr[j]; t < u.col_ptr[j + 1]; ++t) {
      Index i = u.row_ind[t];
      if (i > j) throw DimensionMismatch("combine_lu: U has an entry below the diagonal");
      if (i == j) has_diag[j] = true;
      ++c.row_ptr[i + 1];
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (!has_diag[i]) {
      throw SingularMatrix("combine_lu: U(" + std::to_string(i) + "," + std::to_string(i) +
                           ") structurally missing");
    }
  }
  std::partial_sum(c.row_ptr.begin(), c.row_ptr.end(), c.row_ptr.begin());
  c.col_ind.resize(c.row_ptr[n]);
  c.values.resize(c.row_ptr[n]);
  c.diag_pos.resize(n);
  // Columns are visited in increasing order, so every row fills in sorted order;
  // L columns (< i) for row i all precede its U columns (>= i).
  std::vector<Index> next(c.row_ptr.begin(), c.row_ptr.end() - 1);
  for (Index j = 0; j < n; ++j) {
    for (Index t = l.col_ptr[j]; t < l.col_ptr[j + 1]; ++t) {
      Index i = l.row_ind[t];
      if (i == j) continue;
      c.col_ind[next[i]] = j;
      c.values[next[i]++] = l.values[t];
    }
    for (Index t = u.col_ptr[j]; t < u.col_ptr[j + 1]; ++t) {
      Index i = u.row_ind[t];
      if (i == j) c.diag_pos[i] = next[i];
      c.col_ind[next[i]] = j;
      c.values[next[i]++] = u.values[t];
    }
  }
  return c;
}

/// Inverse of combine_lu: L with explicit unit diagonal, U upper, both CSC.
inline std::pair<CscMatrix, CscMatrix> split_lu(const CombinedLU& c) {
  TripletMatrix lt(c.n, c.n);
  TripletMatrix ut(c.n, c.n);
  for (Index i = 0; i < c.n; ++i) {
    lt.add(i, i, 1.0);
    for (Index t = c.row_ptr[i]; t < c.row_ptr[i + 1]; ++t) {
      if (t < c.diag_pos[i]) {
        lt.add(i, c.col_ind[t], c.values[t]);
      } else {
        ut.add(i, c.col_ind[t], c.values[t]);
      }
    }
  }
  return {compress(lt), compress(ut)};
}

// ---------------------------------------------------------------------------
// Equilibration

struct Equilibration {
  std::vector<double> row_scale;  ///< powers of two
  std::vector<double> col_scale;  ///< powers of two
  CscMatrix scaled;               ///< diag(row_scale) A diag(col_scale)
  int sweeps = 0;
};

/// Iterative max-norm (Ruiz-style) scaling restricted to powers of two, so the
/// scaling is exact and reversible. Stops once every row and column max-magnitude
/// lies in [1/2, 2]. Symmetric input yields row_scale == col_scale.
inline Equilibration equilibrate(const CscMatrix& a, int max_sweeps = 60) {
  Equilibration eq;
  eq.row_scale.assign(a.n_rows, 1.0);
  eq.col_scale.assign(a.n_cols, 1.0);
  eq.scaled = a;

  std::vector<Index> row_count(a.n_rows, 0);
  for (Index p = 0; p < a.nnz(); ++p) ++row_count[a.row_ind[p]];
  for (Index i = 0; i < a.n_rows; ++i) {
    if (row_count[i] == 0) throw SingularMatrix("equilibrate: row " + std::to_string(i) + " is structurally zero");
  }
  for (Index j = 0; j < a.n_cols; ++j) {
    if (a.col_ptr[j] == a.col_ptr[j + 1]) {
      throw SingularMatrix("equilibrate: column " + std::to_string(j) + " is structurally zero");
    }
  }

  // Exponent that brings a max-magnitude of m halfway towards one.
  auto half_exponent = [](double m) -> int {
    if (m == 0.0) return 0;  // numerically empty: leave unscaled
    return -static_cast<int>(std::lround(std::log2(m) / 2.0));
  };
  auto in_band = [](double m) { return m == 0.0 || (m >= 0.5 && m <= 2.0); };

  std::vector<double> row_max(a.n_rows);
  std::vector<double> col_max(a.n_cols);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    std::fill(row_max.begin(), row_max.end(), 0.0);
    std::fill(col_max.begin(), col_max.end(), 0.0);
    for (Index j = 0; j < a.n_cols; ++j) {
      for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
        double v = std::abs(eq.scaled.values[p]);
        row_max[a.row_ind[p]] = std::max(row_max[a.row_ind[p]], v);
        col_max[j] = std::max(col_max[j], v);
      }
    }
    bool done = std::all_of(row_max.begin(), row_max.end(), in_band) &&
                std::all_of(col_max.begin(), col_max.end(), in_band);
    if (done) break;
    eq.sweeps = sweep + 1;
    std::vector<int> re(a.n_rows);
    std::vector<int> ce(a.n_cols);
    for (Index i = 0; i < a.n_rows; ++i) re[i] = half_exponent(row_max[i]);
    for (Index j = 0; j < a.n_cols; ++j) ce[j] = half_exponent(col_max[j]);
    for (Index i = 0; i < a.n_rows; ++i) eq.row_scale[i] = std::ldexp(eq.row_scale[i], re[i]);
    for (Index j = 0; j < a.n_cols; ++j) {
      eq.col_scale[j] = std::ldexp(eq.col_scale[j], ce[j]);
      for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
        eq.scaled.values[p] = std::ldexp(eq.scaled.values[p], re[a.row_ind[p]] + ce[j]);
      }
    }
  }
  return eq;
}

/// Applies previously computed scale factors to a matrix with the same pattern.
inline CscMatrix apply_scaling(const CscMatrix& a, std::span<const double> row_scale,
                               std::span<const double> col_scale) {
  CscMatrix s = a;
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      s.values[p] = a.values[p] * row_scale[a.row_ind[p]] * col_scale[j];
    }
  }
  return s;
}

}  // namespace gridkkt

#endif  // GRIDKKT_SPARSE_CORE_HPP
