#ifndef GRIDKKT_INTERIOR_POINT_HPP
#define GRIDKKT_INTERIOR_POINT_HPP

// Primal barrier Newton method for the compact ACOPF.
//
// For a barrier weight mu the stationarity system
//   grad f(y) + J^T lambda - mu Y^{-1} e = 0,   c(y) = 0
// is solved by Newton steps on the KKT matrix
//   [ H + mu Y^{-2}   J^T ] [dy     ]     [ r_y      ]
//   [ J               0   ] [dlambda] = - [ r_lambda ]
// whose pattern never changes. mu follows a monotone schedule mu <- sigma mu once the
// inner residual drops below kappa mu.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridkkt/acopf_nlp.hpp"
#include "gridkkt/linear_solver.hpp"

namespace gridkkt {

struct IpmOptions {
  double mu_init = 0.1;
  double mu_shrink = 0.2;  ///< sigma
  double mu_min = 1e-9;
  double kkt_tol = 1e-6;
  double kappa = 10.0;     ///< inner loop stops at ||r|| <= kappa mu
  int max_outer = 50;
  int max_inner = 30;
  int max_iterations = std::numeric_limits<int>::max();  ///< total Newton steps
  double fraction_to_boundary = 0.995;                     ///< tau
  double y_floor = 1e-2;        ///< clipping of the initial point
  bool full_dual_step = false;  ///< alpha_dual = 1 instead of alpha_primal
  double regularization = 1e-8; ///< delta added when the fallback factorization fails
  SequenceOptions linear;       ///< strategy lives in linear.strategy

  void validate() const {
    if (!(mu_shrink > 0.0 && mu_shrink < 1.0)) throw ModelError("mu_shrink must lie in (0, 1)");
    if (!(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0)) {
      throw ModelError("fraction_to_boundary must lie in (0, 1)");
    }
    if (!(mu_init > 0.0 && mu_min > 0.0 && kkt_tol > 0.0 && kappa > 0.0)) {
      throw ModelError("tolerances and barrier parameters must be positive");
    }
    if (max_outer < 1 || max_inner < 1 || max_iterations < 0) throw ModelError("iteration limits must be positive");
  }
};

struct IpmState {
  std::vector<double> y;       ///< strictly positive
  std::vector<double> lambda;  ///< length m
  double mu = 0.0;
  int outer = 0;
  int newton = 0;

  /// D_y = mu Y^{-2}
  [[nodiscard]] std::vector<double> barrier_diagonal() const {
    std::vector<double> d(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = mu / (y[i] * y[i]);
    return d;
  }
};

/// phi(y) = f(y) - mu sum ln y_i
inline double barrier_value(const CompactNlp& nlp, std::span<const double> y, double mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw ModelError("barrier_value: y[" + std::to_string(i) + "] is not positive");
    s += std::log(y[i]);
  }
  return nlp.eval_objective(y) - mu * s;
}

struct Residual {
  std::vector<double> r_y;       ///< grad f + J^T lambda - mu / y
  std::vector<double> r_lambda;  ///< c(y)
  double dual_inf = 0.0;
  double primal_inf = 0.0;
  double lambda_inf = 0.0;

  /// max(||r_y|| / (1 + ||lambda||), ||r_lambda||)
  [[nodiscard]] double scaled() const { return std::max(dual_inf / (1.0 + lambda_inf), primal_inf); }
};

/// Residual from an already evaluated gradient, constraint vector and Jacobian.
inline Residual first_order_residual(std::span<const double> grad, std::span<const double> c,
                                     const CscMatrix& jac, const IpmState& s) {
  Residual r;
  r.r_y.assign(grad.begin(), grad.end());
  for (Index j = 0; j < jac.n_cols; ++j) {
    double acc = 0.0;
    for (Index p = jac.col_ptr[j]; p < jac.col_ptr[j + 1]; ++p) acc += jac.values[p] * s.lambda[jac.row_ind[p]];
    r.r_y[j] += acc - s.mu / s.y[j];
  }
  r.r_lambda.assign(c.begin(), c.end());
  r.dual_inf = norm_inf(r.r_y);
  r.primal_inf = norm_inf(r.r_lambda);
  r.lambda_inf = norm_inf(s.lambda);
  return r;
}

inline Residual first_order_residual(const CompactNlp& nlp, const IpmState& s) {
  auto ws = nlp.make_workspace();
  const auto& jac = nlp.eval_jacobian(s.y, ws);
  return first_order_residual(nlp.eval_gradient(s.y), nlp.eval_constraints(s.y), jac, s);
}

// ---------------------------------------------------------------------------
// KKT assembly

struct KktSystem {
  CscMatrix matrix;  ///< full symmetric (n+m) x (n+m)
  std::vector<double> rhs;
  Index n = 0;
  Index m = 0;
};

/// Fixed-pattern assembler of [[H + D, J^T], [J, 0]] from a lower-stored H and an
/// m x n J. Every (1,1) and (2,2) diagonal is structurally present.
class KktAssembler {
 public:
  KktAssembler(const CscMatrix& hess_pattern, const CscMatrix& jac_pattern)
      : n_(hess_pattern.n_rows), m_(jac_pattern.n_rows), hess_(hess_pattern), jac_(jac_pattern) {
    if (hess_pattern.n_cols != n_ || jac_pattern.n_cols != n_) throw DimensionMismatch("KktAssembler: blocks");
    RecordingSink rec;
    for (Index j = 0; j < n_; ++j) {
      for (Index p = hess_.col_ptr[j]; p < hess_.col_ptr[j + 1]; ++p) {
        const Index i = hess_.row_ind[p];
        if (i < j) throw DimensionMismatch("KktAssembler: H must be stored as its lower triangle");
        rec.add(i, j, 0.0);
        if (i != j) rec.add(j, i, 0.0);
      }
    }
    for (Index i = 0; i < n_; ++i) rec.add(i, i, 0.0);
    for (Index j = 0; j < n_; ++j) {
      for (Index p = jac_.col_ptr[j]; p < jac_.col_ptr[j + 1]; ++p) {
        const Index i = jac_.row_ind[p];
        rec.add(n_ + i, j, 0.0);
        rec.add(j, n_ + i, 0.0);
      }
    }
    for (Index i = 0; i < m_; ++i) rec.add(n_ + i, n_ + i, 0.0);
    map_ = AssemblyMap::build(n_ + m_, n_ + m_, rec.coords);
  }

  [[nodiscard]] const CscMatrix& pattern() const { return map_.pattern; }

  /// rhs = -(r_y, r_lambda). `delta` regularizes: +delta on the (1,1) diagonal and
  /// -delta on the (2,2) diagonal.
  [[nodiscard]] KktSystem assemble(const CscMatrix& hess, const CscMatrix& jac, std::span<const double> y,
                                   double mu, std::span<const double> r_y, std::span<const double> r_lambda,
                                   double delta = 0.0) const {
    if (!hess.same_pattern(hess_) || !jac.same_pattern(jac_)) throw PatternMismatch("assemble_kkt: block pattern changed");
    if (static_cast<Index>(y.size()) != n_ || static_cast<Index>(r_y.size()) != n_ ||
        static_cast<Index>(r_lambda.size()) != m_) {
      throw DimensionMismatch("assemble_kkt: vector lengths");
    }
    KktSystem k;
    k.n = n_;
    k.m = m_;
    k.matrix = map_.pattern;
    std::fill(k.matrix.values.begin(), k.matrix.values.end(), 0.0);
    ValueSink sink{k.matrix.values, map_.slot};
    for (Index j = 0; j < n_; ++j) {
      for (Index p = hess.col_ptr[j]; p < hess.col_ptr[j + 1]; ++p) {
        const Index i = hess.row_ind[p];
        sink.add(i, j, hess.values[p]);
        if (i != j) sink.add(j, i, hess.values[p]);
      }
    }
    for (Index i = 0; i < n_; ++i) sink.add(i, i, mu / (y[i] * y[i]) + delta);
    for (Index j = 0; j < n_; ++j) {
      for (Index p = jac.col_ptr[j]; p < jac.col_ptr[j + 1]; ++p) {
        sink.add(n_ + jac.row_ind[p], j, jac.values[p]);
        sink.add(j, n_ + jac.row_ind[p], jac.values[p]);
      }
    }
    for (Index i = 0; i < m_; ++i) sink.add(n_ + i, n_ + i, -delta);
    k.rhs.resize(n_ + m_);
    for (Index i = 0; i < n_; ++i) k.rhs[i] = -r_y[i];
    for (Index i = 0; i < m_; ++i) k.rhs[n_ + i] = -r_lambda[i];
    return k;
  }

 private:
  Index n_;
  Index m_;
  CscMatrix hess_;
  CscMatrix jac_;
  AssemblyMap map_;
};

inline KktSystem assemble_kkt(const CscMatrix& hess, const CscMatrix& jac, std::span<const double> y, double mu,
                              std::span<const double> r_y, std::span<const double> r_lambda) {
  return KktAssembler(hess, jac).assemble(hess, jac, y, mu, r_y, r_lambda);
}

struct NewtonStep {
  std::vector<double> dy;
  std::vector<double> dlambda;
  SequenceStep solve;
};

inline NewtonStep newton_step(const KktSystem& kkt, SequenceSolver& solver) {
  NewtonStep s;
  s.solve = solver.solve(kkt.matrix, kkt.rhs);
  s.dy.assign(s.solve.x.begin(), s.solve.x.begin() + kkt.n);
  s.dlambda.assign(s.solve.x.begin() + kkt.n, s.solve.x.end());
  return s;
}

/// Fraction-to-boundary: the largest alpha <= 1 with y + alpha dy >= (1 - tau) y.
inline std::pair<double, double> step_lengths(std::span<const double> y, std::span<const double> dy, double tau,
                                              bool full_dual_step = false) {
  double alpha = 1.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (dy[i] < 0.0) alpha = std::min(alpha, -tau * y[i] / dy[i]);
  }
  return {alpha, full_dual_step ? 1.0 : alpha};
}

/// Flat start for angles, bound midpoints for everything else. Each y_i is clipped
/// from below to y_floor, or to half its range when the range is narrower.
inline IpmState initial_point(const CompactNlp& nlp, double y_floor = 1e-2) {
  IpmState s;
  const auto& o = nlp.original();
  s.y = nlp.to_y(o.x_init);
  for (Index i = 0; i < nlp.n(); ++i) s.y[i] = std::max(s.y[i], std::min(y_floor, 0.5 * nlp.range(i)));
  s.lambda.assign(nlp.m(), 0.0);
  return s;
}

// ---------------------------------------------------------------------------
// Driver

struct PhaseTimes {
  std::int64_t model_eval = 0;
  std::int64_t kkt_assembly = 0;
  std::int64_t factorization = 0;
  std::int64_t triangular_solve = 0;
  std::int64_t other = 0;

  [[nodiscard]] std::int64_t sum() const { return model_eval + kkt_assembly + factorization + triangular_solve + other; }

  PhaseTimes& operator+=(const PhaseTimes& o) {
    model_eval += o.model_eval;
    kkt_assembly += o.kkt_assembly;
    factorization += o.factorization;
    triangular_solve += o.triangular_solve;
    other += o.other;
    return *this;
  }
};

struct IterationRecord {
  int k = 0;  ///< Newton step counter, from 1
  int outer = 0;
  double mu = 0.0;
  double r_y_inf = 0.0;
  double r_lambda_inf = 0.0;
  double kkt_residual = 0.0;  ///< scaled residual before the step
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double objective = 0.0;
  int refine_iterations = 0;
  double refine_initial_residual = 0.0;
  double refine_final_residual = 0.0;
  bool analyzed = false;
  bool fallback = false;
  bool regularized = false;
  std::uint64_t kkt_pattern_hash = 0;
  PhaseTimes phases;
  std::int64_t total_ns = 0;
};

enum class IpmStatus { Converged, IterLimit, LinearSolverFailure };

inline const char* to_string(IpmStatus s) {
  switch (s) {
    case IpmStatus::Converged: return "Converged";
    case IpmStatus::IterLimit: return "IterLimit";
    case IpmStatus::LinearSolverFailure: return "LinearSolverFailure";
  }
  return "?";
}

struct IpmResult {
  IpmStatus status = IpmStatus::IterLimit;
  std::vector<double> x;
  double objective = 0.0;
  double constraint_violation = 0.0;
  double kkt_residual = 0.0;
  IpmState state;
  std::vector<IterationRecord> log;
  std::int64_t total_ns = 0;
  int analyses = 0;
  int refactorizations = 0;
  int factorizations = 0;
  int fallbacks = 0;
  int regularizations = 0;
};

/// Called after every Newton step with its record and the KKT system just solved.
using IterationObserver = std::function<void(const IterationRecord&, const KktSystem&)>;

class InteriorPointSolver {
 public:
  InteriorPointSolver(const CompactNlp& nlp, IpmOptions opts)
      : nlp_(nlp), opts_(std::move(opts)), kkt_(nlp.hessian_pattern(), nlp.jacobian_pattern()) {
    opts_.validate();
  }

  IpmResult solve(const IterationObserver& observer = {}) {
    using clock = std::chrono::steady_clock;
    auto ns = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
    };
    const auto t_start = clock::now();
    IpmResult res;
    SequenceSolver linsolver(opts_.linear);
    auto ws = nlp_.make_workspace();

    IpmState s = initial_point(nlp_, opts_.y_floor);
    s.mu = opts_.mu_init;

    std::optional<std::pair<double, IpmState>> best;
    auto evaluate = [&](const IpmState& st) {
      const auto& jac = nlp_.eval_jacobian(st.y, ws);
      return first_order_residual(nlp_.eval_gradient(st.y), nlp_.eval_constraints(st.y), jac, st);
    };
    auto merit = [](const Residual& r, const IpmState& st) {
      double d = 0.0;
      for (std::size_t i = 0; i < st.y.size(); ++i) d = std::max(d, std::abs(r.r_y[i] + st.mu / st.y[i]));
      return std::max(d / (1.0 + r.lambda_inf), r.primal_inf);
    };
    auto finish = [&](IpmStatus status, const IpmState& st, const Residual& r) {
      if (status != IpmStatus::Converged && best && best->first < merit(r, st)) {
        res.state = best->second;
        res.kkt_residual = evaluate(res.state).scaled();
      } else {
        res.state = st;
        res.kkt_residual = r.scaled();
      }
      res.status = status;
      res.x = nlp_.to_x(res.state.y);
      res.objective = nlp_.original().objective(res.x);
      res.constraint_violation = nlp_.original().constraint_violation(res.x);
      res.analyses = linsolver.analyses();
      res.refactorizations = linsolver.refactorizations();
      res.factorizations = linsolver.factorizations();
      res.fallbacks = linsolver.fallbacks();
      res.total_ns = ns(t_start, clock::now());
      return res;
    };

    Residual r = evaluate(s);
    for (int outer = 0; outer < opts_.max_outer; ++outer) {
      s.outer = outer;
      const bool last_level = s.mu <= opts_.mu_min;
      const double target = last_level ? std::min(opts_.kappa * s.mu, opts_.kkt_tol) : opts_.kappa * s.mu;

      for (int inner = 0; inner < opts_.max_inner && r.scaled() > target; ++inner) {
        if (s.newton >= opts_.max_iterations) return finish(IpmStatus::IterLimit, s, r);
        IterationRecord rec;
        rec.k = ++s.newton;
        rec.outer = outer;
        rec.mu = s.mu;
        rec.r_y_inf = r.dual_inf;
        rec.r_lambda_inf = r.primal_inf;
        rec.kkt_residual = r.scaled();
        const auto t_iter = clock::now();

        auto t0 = clock::now();
        const auto& hess = nlp_.eval_hessian(s.y, s.lambda, ws);
        const auto& jac = nlp_.eval_jacobian(s.y, ws);
        rec.phases.model_eval += ns(t0, clock::now());

        t0 = clock::now();
        KktSystem kkt = kkt_.assemble(hess, jac, s.y, s.mu, r.r_y, r.r_lambda);
        rec.phases.kkt_assembly += ns(t0, clock::now());
        rec.kkt_pattern_hash = pattern_hash(kkt.matrix);

        std::optional<NewtonStep> step;
        try {
          step = newton_step(kkt, linsolver);
        } catch (const SingularMatrix&) {
          t0 = clock::now();
          kkt = kkt_.assemble(hess, jac, s.y, s.mu, r.r_y, r.r_lambda, opts_.regularization);
          rec.phases.kkt_assembly += ns(t0, clock::now());
          rec.regularized = true;
          ++res.regularizations;
          try {
            step = newton_step(kkt, linsolver);
          } catch (const SingularMatrix&) {
            rec.total_ns = ns(t_iter, clock::now());
            res.log.push_back(rec);
            return finish(IpmStatus::LinearSolverFailure, s, r);
          }
        }
        rec.phases.factorization += step->solve.analyze_ns + step->solve.factor_ns;
        rec.phases.triangular_solve += step->solve.solve_ns;
        rec.analyzed = step->solve.analyzed;
        rec.fallback = step->solve.stats.fallback;
        rec.refine_iterations = step->solve.stats.iterations;
        rec.refine_initial_residual = step->solve.stats.initial_residual;
        rec.refine_final_residual = step->solve.stats.final_residual;

        auto [ap, ad] = step_lengths(s.y, step->dy, opts_.fraction_to_boundary, opts_.full_dual_step);
        rec.alpha_primal = ap;
        rec.alpha_dual = ad;
        for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] += ap * step->dy[i];
        for (std::size_t i = 0; i < s.lambda.size(); ++i) s.lambda[i] += ad * step->dlambda[i];

        t0 = clock::now();
        r = evaluate(s);
        rec.phases.model_eval += ns(t0, clock::now());
        rec.objective = nlp_.eval_objective(s.y);
        const double mr = merit(r, s);
        if (!best || mr < best->first) best.emplace(mr, s);

        rec.total_ns = ns(t_iter, clock::now());
        const std::int64_t measured = rec.phases.model_eval + rec.phases.kkt_assembly + rec.phases.factorization +
                                      rec.phases.triangular_solve;
        rec.phases.other = std::max<std::int64_t>(0, rec.total_ns - measured);
        if (observer) observer(rec, kkt);
        res.log.push_back(std::move(rec));
      }

      if (last_level) {
        return finish(r.scaled() <= opts_.kkt_tol ? IpmStatus::Converged : IpmStatus::IterLimit, s, r);
      }
      s.mu *= opts_.mu_shrink;
    }
    return finish(IpmStatus::IterLimit, s, r);
  }

 private:
  const CompactNlp& nlp_;
  IpmOptions opts_;
  KktAssembler kkt_;
};

struct AcopfSolution {
  OriginalNlp nlp;
  IpmResult result;
};

inline IpmResult solve_acopf(const CompactNlp& nlp, const IpmOptions& opts, const IterationObserver& observer = {}) {
  return InteriorPointSolver(nlp, opts).solve(observer);
}

inline IpmResult solve_acopf(const GridCase& c, const IpmOptions& opts, const IterationObserver& observer = {}) {
  auto nlp = to_compact(assemble_nlp(c));
  return solve_acopf(nlp, opts, observer);
}

}  // namespace gridkkt

#endif  // GRIDKKT_INTERIOR_POINT_HPP
