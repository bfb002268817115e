#ifndef GRIDKKT_TESTS_KKT_STREAM_HPP
#define GRIDKKT_TESTS_KKT_STREAM_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridkkt/interior_point.hpp"
#include "oracles.hpp"

namespace stream {

using namespace gridkkt;

struct RecordedSolve {
  std::vector<KktSystem> systems;
  std::vector<IterationRecord> records;
  IpmResult result;
};

/// Runs the interior-point solver on a bundled case and keeps every KKT system it
/// factored, in order.
inline RecordedSolve record(const std::string& case_name, IpmOptions opts = {}) {
  auto nlp = to_compact(assemble_nlp(read_case(oracle::data_dir() / (case_name + ".m"))));
  RecordedSolve out;
  out.result = solve_acopf(nlp, opts, [&](const IterationRecord& rec, const KktSystem& kkt) {
    out.records.push_back(rec);
    out.systems.push_back(kkt);
  });
  return out;
}

/// KKT system at the converged point of a solve, with the barrier term evaluated at `mu`.
inline KktSystem converged_system(const std::string& case_name, double mu, IpmResult* result = nullptr) {
  auto nlp = to_compact(assemble_nlp(read_case(oracle::data_dir() / (case_name + ".m"))));
  auto res = solve_acopf(nlp, IpmOptions{});
  IpmState s = res.state;
  s.mu = mu;
  auto ws = nlp.make_workspace();
  const auto& hess = nlp.eval_hessian(s.y, s.lambda, ws);
  auto hess_copy = hess;
  const auto& jac = nlp.eval_jacobian(s.y, ws);
  auto r = first_order_residual(nlp.eval_gradient(s.y), nlp.eval_constraints(s.y), jac, s);
  auto k = KktAssembler(nlp.hessian_pattern(), nlp.jacobian_pattern()).assemble(hess_copy, jac, s.y, mu, r.r_y,
                                                                                 r.r_lambda);
  if (result) *result = std::move(res);
  return k;
}

/// Fresh pivoted solution of every system, the reference for frozen-pattern replays.
inline std::vector<double> fresh_solve(const CscMatrix& a, const std::vector<double>& b) {
  auto h = analyze_and_factorize(a);
  auto x = triangular_solve(h, b);
  refine(h, a, b, x);
  return x;
}

/// Copy of `a` with one stored entry shifted so that the pivot the frozen elimination
/// order reaches at step k becomes zero: the leading (k+1) x (k+1) block of P S_r A S_c Q
/// turns singular while the matrix as a whole stays nonsingular. Returns the step used.
inline int zero_frozen_pivot(const RefactorizationHandle& frozen, CscMatrix& a) {
  RefactorizationHandle h = frozen;
  refactorize(h, a);
  const auto& lu = h.factors();
  const auto& rs = h.row_scale();
  const auto& cs = h.col_scale();
  // Prefer a pivot in the middle of the order so the zero propagates into a
  // substantial trailing block.
  for (Index off = 0; off < lu.n; ++off) {
    const Index k = (lu.n / 2 + off) % lu.n;
    const Index i = lu.p[k];
    const Index j = lu.q[k];
    for (Index t = a.col_ptr[j]; t < a.col_ptr[j + 1]; ++t) {
      if (a.row_ind[t] != i) continue;
      const double piv = lu.values[lu.diag_pos[k]];
      if (std::abs(piv) < 1e-3) break;
      a.values[t] -= piv / (rs[i] * cs[j]);
      return static_cast<int>(k);
    }
  }
  throw std::runtime_error("zero_frozen_pivot: no stored pivot entry found");
}

}  // namespace stream

#endif  // GRIDKKT_TESTS_KKT_STREAM_HPP
