#ifndef GRIDKKT_ORDERING_HPP
#define GRIDKKT_ORDERING_HPP

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "gridkkt/sparse_core.hpp"

namespace gridkkt {

/// Symmetric adjacency of pattern(A) + pattern(A^T), diagonal excluded.
inline std::vector<std::vector<Index>> symmetric_adjacency(const CscMatrix& a) {
  if (a.n_rows != a.n_cols) throw DimensionMismatch("ordering needs a square matrix");
  std::vector<std::vector<Index>> adj(a.n_cols);
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      Index i = a.row_ind[p];
      if (i == j) continue;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return adj;
}

/// Approximate minimum degree ordering of pattern(A + A^T).
///
/// Quotient-graph elimination: every eliminated pivot becomes an element whose
/// variable list is the pivot's reach. Degrees of the variables touched by a
/// pivot are replaced by the AMD upper bound
///   |A_i| + |L_p \ i| + sum_{e in E_i, e != p} |L_e \ L_p|
/// with |L_e \ L_p| obtained in one pass over the new element. Elements that
/// become subsets of the new element are absorbed. Ties go to the smaller index,
/// so the ordering is deterministic.
inline Permutation amd_order(const CscMatrix& a) {
  const Index n = a.n_cols;
  auto var_adj = symmetric_adjacency(a);
  std::vector<std::vector<Index>> elem_adj(n);   // elements adjacent to each variable
  std::vector<std::vector<Index>> elem_vars(n);  // variables of each element (id = its pivot)
  std::vector<char> eliminated(n, 0);
  std::vector<char> element_alive(n, 0);
  std::vector<Index> degree(n);
  std::vector<Index> in_pivot(n, -1);  // stamp: variable belongs to current L_p
  std::vector<Index> w(n, 0);
  std::vector<Index> w_stamp(n, -1);

  std::set<std::pair<Index, Index>> queue;
  for (Index i = 0; i < n; ++i) {
    degree[i] = static_cast<Index>(var_adj[i].size());
    queue.emplace(degree[i], i);
  }

  std::vector<Index> order;
  order.reserve(n);
  std::vector<Index> lp;
  for (Index k = 0; k < n; ++k) {
    const Index piv = queue.begin()->second;
    queue.erase(queue.begin());
    eliminated[piv] = 1;
    order.push_back(piv);

    // L_p = (A_p  U  union of L_e for e in E_p) \ {p}; absorbed elements die.
    lp.clear();
    for (Index j : var_adj[piv]) {
      if (!eliminated[j] && in_pivot[j] != k) {
        in_pivot[j] = k;
        lp.push_back(j);
      }
    }
    for (Index e : elem_adj[piv]) {
      if (!element_alive[e]) continue;
      for (Index j : elem_vars[e]) {
        if (!eliminated[j] && in_pivot[j] != k) {
          in_pivot[j] = k;
          lp.push_back(j);
        }
      }
      element_alive[e] = 0;
      elem_vars[e].clear();
      elem_vars[e].shrink_to_fit();
    }
    var_adj[piv].clear();
    elem_adj[piv].clear();
    elem_vars[piv] = lp;
    element_alive[piv] = 1;

    // |L_e \ L_p| for every live element reachable from L_p.
    for (Index i : lp) {
      for (Index e : elem_adj[i]) {
        if (!element_alive[e] || e == piv) continue;
        if (w_stamp[e] != k) {
          w_stamp[e] = k;
          w[e] = static_cast<Index>(elem_vars[e].size());
        }
        --w[e];
      }
    }
    // Aggressive absorption of elements now covered by the new element.
    for (Index i : lp) {
      for (Index e : elem_adj[i]) {
        if (element_alive[e] && e != piv && w_stamp[e] == k && w[e] == 0) {
          element_alive[e] = 0;
          elem_vars[e].clear();
        }
      }
    }

    const Index remaining = n - k - 1;
    const Index lp_size = static_cast<Index>(lp.size());
    for (Index i : lp) {
      auto& ei = elem_adj[i];
      std::erase_if(ei, [&](Index e) { return !element_alive[e]; });
      ei.push_back(piv);
      auto& ai = var_adj[i];
      std::erase_if(ai, [&](Index j) { return eliminated[j] || in_pivot[j] == k; });

      Index d = static_cast<Index>(ai.size()) + lp_size - 1;
      for (Index e : ei) {
        if (e != piv) d += (w_stamp[e] == k) ? w[e] : static_cast<Index>(elem_vars[e].size());
      }
      d = std::min({d, remaining, degree[i] + lp_size - 1});
      d = std::max<Index>(d, 0);
      if (d != degree[i]) {
        queue.erase({degree[i], i});
        degree[i] = d;
        queue.emplace(d, i);
      }
    }
  }
  return Permutation(std::move(order));
}

}  // namespace gridkkt

#endif  // GRIDKKT_ORDERING_HPP
