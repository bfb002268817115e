#ifndef GRIDKKT_ACOPF_NLP_HPP
#define GRIDKKT_ACOPF_NLP_HPP

// Polar-form ACOPF and its compact slack form
//
//   min f(y)  s.t.  c(y) = 0,  y >= 0,   y = (x', x'', s', s'')
//
// with x = x_lo + x', the bound pair x - x_lo = x', x_hi - x = x'' tied together by
// explicit linking rows x' + x'' = x_hi - x_lo, and the branch-flow inequalities
// h_lo <= h(x) <= h_hi turned into h - h_lo - s' = 0 and h_hi - h - s'' = 0.
//
// Constraint rows of c, in order:
//   [0, nb)                 real power balance     sum Pg - Pd - P(V)
//   [nb, 2nb)               reactive power balance sum Qg - Qd - Q(V)
//   [2nb, 2nb+nh)           h(x) - h_lo - s'
//   [2nb+nh, 2nb+2nh)       h_hi - h(x) - s''
//   [2nb+2nh, 2nb+2nh+nx)   x' + x'' - (x_hi - x_lo)
//
// Jacobian and Hessian patterns are fixed at construction: every evaluation emits
// the same sequence of (row, col) contributions, mapped once to storage slots.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridkkt/grid_model.hpp"
#include "gridkkt/sparse_core.hpp"

namespace gridkkt {

// ---------------------------------------------------------------------------
// Fixed-pattern assembly

/// Pattern plus the storage slot of every emitted contribution.
struct AssemblyMap {
  CscMatrix pattern;
  std::vector<Index> slot;

  static AssemblyMap build(Index rows, Index cols, const std::vector<std::pair<Index, Index>>& coords) {
    TripletMatrix t(rows, cols);
    t.entries.reserve(coords.size());
    for (const auto& [r, c] : coords) t.add(r, c, 0.0);
    AssemblyMap m;
    m.pattern = compress(t);
    std::fill(m.pattern.values.begin(), m.pattern.values.end(), 0.0);
    m.slot.resize(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const auto [r, c] = coords[k];
      auto first = m.pattern.row_ind.begin() + m.pattern.col_ptr[c];
      auto last = m.pattern.row_ind.begin() + m.pattern.col_ptr[c + 1];
      m.slot[k] = static_cast<Index>(std::lower_bound(first, last, r) - m.pattern.row_ind.begin());
    }
    return m;
  }
};

struct RecordingSink {
  std::vector<std::pair<Index, Index>> coords;
  void add(Index r, Index c, double) { coords.emplace_back(r, c); }
};

struct ValueSink {
  std::span<double> values;
  std::span<const Index> slot;
  std::size_t next = 0;
  void add(Index, Index, double v) { values[slot[next++]] += v; }
};

// ---------------------------------------------------------------------------
// Two-bus power terms

/// T = gd*Vi^2 + Vi*Vj*(a cos(thi - thj) + b sin(thi - thj)) with local variable
/// order (thi, thj, Vi, Vj). Covers bus injections and branch-end flows.
struct PairTerm {
  double value = 0.0;
  std::array<double, 4> grad{};
  std::array<std::array<double, 4>, 4> hess{};

  static PairTerm eval(double gd, double a, double b, double thi, double thj, double vi, double vj) {
    const double th = thi - thj;
    const double cs = std::cos(th), sn = std::sin(th);
    const double c = a * cs + b * sn;
    const double s1 = -a * sn + b * cs;
    const double vv = vi * vj;
    PairTerm t;
    t.value = gd * vi * vi + vv * c;
    t.grad = {vv * s1, -vv * s1, 2.0 * gd * vi + vj * c, vi * c};
    auto& h = t.hess;
    h[0][0] = -vv * c;
    h[0][1] = vv * c;
    h[1][1] = -vv * c;
    h[0][2] = vj * s1;
    h[0][3] = vi * s1;
    h[1][2] = -vj * s1;
    h[1][3] = -vi * s1;
    h[2][2] = 2.0 * gd;
    h[2][3] = c;
    h[3][3] = 0.0;
    for (int r = 0; r < 4; ++r) {
      for (int q = 0; q < r; ++q) h[r][q] = h[q][r];
    }
    return t;
  }
};

// ---------------------------------------------------------------------------
// Original problem

struct NlpOptions {
  /// Replacement for infinite or absent variable bounds.
  double infinite_bound = 1e8;
  /// Non-reference voltage angles are boxed to theta_ref +/- angle_span.
  double angle_span = std::numbers::pi;
};

/// min F(x) s.t. g(x) = 0, h_lo <= h(x) <= h_hi, x_lo <= x <= x_hi, with
/// x = (Va[nb], Vm[nb], Pg[ng], Qg[ng]).
struct OriginalNlp {
  std::string name;
  Index n_bus = 0;
  Index n_gen = 0;
  Index n_x = 0;
  Index n_h = 0;
  double base_mva = 100.0;
  Index slack = 0;
  Admittance ybus;
  std::vector<double> p_demand, q_demand;
  std::vector<Index> gen_bus;
  std::vector<double> cost_c2, cost_c1, cost_c0;  ///< $/h per MW^2, per MW, constant
  std::vector<Index> limited;                      ///< branch (ybus.branches) of each flow row
  std::vector<double> x_init, x_lo, x_hi;
  std::vector<double> h_lo, h_hi;

  [[nodiscard]] Index va(Index i) const { return i; }
  [[nodiscard]] Index vm(Index i) const { return n_bus + i; }
  [[nodiscard]] Index pg(Index k) const { return 2 * n_bus + k; }
  [[nodiscard]] Index qg(Index k) const { return 2 * n_bus + n_gen + k; }

  /// Total generation cost in $/h.
  [[nodiscard]] double objective(std::span<const double> x) const {
    double f = 0.0;
    for (Index k = 0; k < n_gen; ++k) {
      const double p = x[pg(k)] * base_mva;
      f += cost_c2[k] * p * p + cost_c1[k] * p + cost_c0[k];
    }
    return f;
  }

  [[nodiscard]] std::vector<double> objective_gradient(std::span<const double> x) const {
    std::vector<double> g(n_x, 0.0);
    for (Index k = 0; k < n_gen; ++k) {
      const double p = x[pg(k)] * base_mva;
      g[pg(k)] = (2.0 * cost_c2[k] * p + cost_c1[k]) * base_mva;
    }
    return g;
  }

  /// Power-balance mismatches (real rows then reactive rows).
  [[nodiscard]] std::vector<double> balance(std::span<const double> x) const {
    std::vector<double> g(2 * n_bus, 0.0);
    for (Index i = 0; i < n_bus; ++i) {
      g[i] = -p_demand[i];
      g[n_bus + i] = -q_demand[i];
    }
    for (Index k = 0; k < n_gen; ++k) {
      g[gen_bus[k]] += x[pg(k)];
      g[n_bus + gen_bus[k]] += x[qg(k)];
    }
    for (Index j = 0; j < n_bus; ++j) {
      for (Index p = ybus.col_ptr[j]; p < ybus.col_ptr[j + 1]; ++p) {
        const Index i = ybus.row_ind[p];
        const Complex y = ybus.values[p];
        if (i == j) {
          const double v2 = x[vm(i)] * x[vm(i)];
          g[i] -= y.real() * v2;
          g[n_bus + i] -= -y.imag() * v2;
          continue;
        }
        const double th = x[va(i)] - x[va(j)];
        const double vv = x[vm(i)] * x[vm(j)];
        g[i] -= vv * (y.real() * std::cos(th) + y.imag() * std::sin(th));
        g[n_bus + i] -= vv * (y.real() * std::sin(th) - y.imag() * std::cos(th));
      }
    }
    return g;
  }

  /// Complex power entering branch end `end` (0 = from, 1 = to) of branch b.
  [[nodiscard]] std::pair<PairTerm, PairTerm> end_flow(std::span<const double> x, Index b, int end) const {
    const auto& br = ybus.branches[b];
    const Index i = end == 0 ? br.from : br.to;
    const Index j = end == 0 ? br.to : br.from;
    const Complex yii = end == 0 ? br.yff : br.ytt;
    const Complex yij = end == 0 ? br.yft : br.ytf;
    const double thi = x[va(i)], thj = x[va(j)], vi = x[vm(i)], vj = x[vm(j)];
    return {PairTerm::eval(yii.real(), yij.real(), yij.imag(), thi, thj, vi, vj),
            PairTerm::eval(-yii.imag(), -yij.imag(), yij.real(), thi, thj, vi, vj)};
  }

  /// Squared apparent power at both ends of every limited branch.
  [[nodiscard]] std::vector<double> flows(std::span<const double> x) const {
    std::vector<double> h(n_h);
    for (Index r = 0; r < n_h; ++r) {
      auto [p, q] = end_flow(x, limited[r], static_cast<int>(r % 2));
      h[r] = p.value * p.value + q.value * q.value;
    }
    return h;
  }

  /// max over |g|, h above h_hi / below h_lo, and bound excursions.
  [[nodiscard]] double constraint_violation(std::span<const double> x) const {
    double v = 0.0;
    for (double gi : balance(x)) v = std::max(v, std::abs(gi));
    auto h = flows(x);
    for (Index r = 0; r < n_h; ++r) v = std::max({v, h[r] - h_hi[r], h_lo[r] - h[r]});
    for (Index k = 0; k < n_x; ++k) v = std::max({v, x[k] - x_hi[k], x_lo[k] - x[k]});
    return v;
  }
};

/// Builds F, g, h and the bounds from a parsed case.
inline OriginalNlp assemble_nlp(const GridCase& c, const NlpOptions& opts = {}) {
  if (c.gens.empty()) throw ModelError("case has no in-service generator");
  auto slack = c.slack_index();
  if (!slack) throw ModelError("case has no slack bus");
  if (auto lost = disconnected_buses(c, *slack); !lost.empty()) {
    throw ModelError("bus " + std::to_string(c.buses[lost.front()].id) + " is disconnected from the slack bus");
  }

  OriginalNlp nlp;
  nlp.name = c.name;
  nlp.n_bus = static_cast<Index>(c.buses.size());
  nlp.n_gen = static_cast<Index>(c.gens.size());
  nlp.n_x = 2 * nlp.n_bus + 2 * nlp.n_gen;
  nlp.base_mva = c.base_mva;
  nlp.slack = *slack;
  nlp.ybus = build_admittance(c);

  const Index nb = nlp.n_bus;
  for (const auto& b : c.buses) {
    nlp.p_demand.push_back(b.p_demand);
    nlp.q_demand.push_back(b.q_demand);
  }
  for (const auto& g : c.gens) {
    nlp.gen_bus.push_back(c.index_of(g.bus));
    nlp.cost_c2.push_back(g.cost_c2);
    nlp.cost_c1.push_back(g.cost_c1);
    nlp.cost_c0.push_back(g.cost_c0);
  }

  nlp.x_init.resize(nlp.n_x);
  nlp.x_lo.resize(nlp.n_x);
  nlp.x_hi.resize(nlp.n_x);
  const double theta_ref = c.buses[*slack].v_ang_init;
  for (Index i = 0; i < nb; ++i) {
    const auto& b = c.buses[i];
    if (i == *slack) {
      nlp.x_lo[i] = nlp.x_hi[i] = theta_ref;
    } else {
      nlp.x_lo[i] = theta_ref - opts.angle_span;
      nlp.x_hi[i] = theta_ref + opts.angle_span;
    }
    nlp.x_init[i] = theta_ref;
    nlp.x_lo[nb + i] = b.v_min;
    nlp.x_hi[nb + i] = b.v_max;
    nlp.x_init[nb + i] = 0.5 * (b.v_min + b.v_max);
  }
  for (Index k = 0; k < nlp.n_gen; ++k) {
    const auto& g = c.gens[k];
    nlp.x_lo[nlp.pg(k)] = g.p_min;
    nlp.x_hi[nlp.pg(k)] = g.p_max;
    nlp.x_lo[nlp.qg(k)] = g.q_min;
    nlp.x_hi[nlp.qg(k)] = g.q_max;
  }
  for (Index k = 0; k < nlp.n_x; ++k) {
    if (k >= 2 * nb) {
      const double lo = std::isfinite(nlp.x_lo[k]) ? nlp.x_lo[k] : -opts.infinite_bound;
      const double hi = std::isfinite(nlp.x_hi[k]) ? nlp.x_hi[k] : opts.infinite_bound;
      nlp.x_init[k] = 0.5 * (lo + hi);
    }
  }

  // Both ends of every branch with a flow rating; the unused lower side of S^2 <= rate^2
  // is written as -rate^2 so that it never binds.
  for (std::size_t b = 0, in_service = 0; b < c.branches.size(); ++b) {
    if (!c.branches[b].status) continue;
    const double rate = c.branches[b].rate_a;
    if (rate > 0.0) {
      for (int end = 0; end < 2; ++end) {
        nlp.limited.push_back(static_cast<Index>(in_service));
        nlp.h_lo.push_back(-rate * rate);
        nlp.h_hi.push_back(rate * rate);
      }
    }
    ++in_service;
  }
  nlp.n_h = static_cast<Index>(nlp.limited.size());
  return nlp;
}

// ---------------------------------------------------------------------------
// Compact problem

/// Preallocated value arrays matching a CompactNlp's fixed patterns.
struct EvalWorkspace {
  CscMatrix jacobian;  ///< m x n
  CscMatrix hessian;   ///< n x n, lower triangle
};

class CompactNlp {
 public:
  /// Ranges narrower than 2 * fixed_relax (the slack angle in particular) are widened
  /// to exactly that, centred on the original range, so x' + x'' = x_hi - x_lo keeps a
  /// strictly positive solution.
  explicit CompactNlp(OriginalNlp nlp, double infinite_bound = 1e8, double fixed_relax = 1e-4)
      : orig_(std::move(nlp)) {
    const Index nx = orig_.n_x;
    for (Index k = 0; k < nx; ++k) {
      if (!std::isfinite(orig_.x_lo[k])) orig_.x_lo[k] = -infinite_bound;
      if (!std::isfinite(orig_.x_hi[k])) orig_.x_hi[k] = infinite_bound;
      if (orig_.x_lo[k] > orig_.x_hi[k]) {
        throw ModelError("variable " + std::to_string(k) + " has lower bound above upper bound");
      }
      if (orig_.x_hi[k] - orig_.x_lo[k] < 2.0 * fixed_relax) {
        const double mid = 0.5 * (orig_.x_lo[k] + orig_.x_hi[k]);
        orig_.x_lo[k] = mid - fixed_relax;
        orig_.x_hi[k] = mid + fixed_relax;
      }
    }
    for (Index r = 0; r < orig_.n_h; ++r) {
      if (!std::isfinite(orig_.h_lo[r])) orig_.h_lo[r] = -infinite_bound;
      if (!std::isfinite(orig_.h_hi[r])) orig_.h_hi[r] = infinite_bound;
      if (orig_.h_lo[r] > orig_.h_hi[r]) throw ModelError("flow limit range is empty");
    }
    n_ = 2 * nx + 2 * orig_.n_h;
    m_ = 2 * orig_.n_bus + 2 * orig_.n_h + nx;

    std::vector<double> probe = orig_.x_init;
    RecordingSink jrec;
    emit_jacobian(probe, jrec);
    jac_ = AssemblyMap::build(m_, n_, jrec.coords);
    RecordingSink hrec;
    std::vector<double> ones(m_, 1.0);
    emit_hessian(probe, ones, hrec);
    hess_ = AssemblyMap::build(n_, n_, hrec.coords);
  }

  [[nodiscard]] Index n() const { return n_; }
  [[nodiscard]] Index m() const { return m_; }
  [[nodiscard]] Index n_x() const { return orig_.n_x; }
  [[nodiscard]] Index n_h() const { return orig_.n_h; }
  [[nodiscard]] const OriginalNlp& original() const { return orig_; }
  [[nodiscard]] const CscMatrix& jacobian_pattern() const { return jac_.pattern; }
  [[nodiscard]] const CscMatrix& hessian_pattern() const { return hess_.pattern; }

  // y layout
  [[nodiscard]] Index x_lower(Index k) const { return k; }
  [[nodiscard]] Index x_upper(Index k) const { return orig_.n_x + k; }
  [[nodiscard]] Index s_lower(Index r) const { return 2 * orig_.n_x + r; }
  [[nodiscard]] Index s_upper(Index r) const { return 2 * orig_.n_x + orig_.n_h + r; }
  // c layout
  [[nodiscard]] Index row_p(Index i) const { return i; }
  [[nodiscard]] Index row_q(Index i) const { return orig_.n_bus + i; }
  [[nodiscard]] Index row_h_lower(Index r) const { return 2 * orig_.n_bus + r; }
  [[nodiscard]] Index row_h_upper(Index r) const { return 2 * orig_.n_bus + orig_.n_h + r; }
  [[nodiscard]] Index row_link(Index k) const { return 2 * orig_.n_bus + 2 * orig_.n_h + k; }

  /// Upper bound of y[i] implied by its linking row: x_hi - x_lo or h_hi - h_lo.
  [[nodiscard]] double range(Index i) const {
    if (i < 0 || i >= n_) throw DimensionMismatch("range: index out of bounds");
    const Index nx = orig_.n_x;
    if (i < 2 * nx) {
      const Index k = i % nx;
      return orig_.x_hi[k] - orig_.x_lo[k];
    }
    const Index r = (i - 2 * nx) % orig_.n_h;
    return orig_.h_hi[r] - orig_.h_lo[r];
  }

  [[nodiscard]] EvalWorkspace make_workspace() const { return {jac_.pattern, hess_.pattern}; }

  /// x = x_lo + x'
  [[nodiscard]] std::vector<double> to_x(std::span<const double> y) const {
    check(y);
    std::vector<double> x(orig_.n_x);
    for (Index k = 0; k < orig_.n_x; ++k) x[k] = orig_.x_lo[k] + y[x_lower(k)];
    return x;
  }

  /// y(x) with slacks taken from h(x); components are not clipped.
  [[nodiscard]] std::vector<double> to_y(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != orig_.n_x) throw DimensionMismatch("to_y: x length");
    std::vector<double> y(n_);
    for (Index k = 0; k < orig_.n_x; ++k) {
      y[x_lower(k)] = x[k] - orig_.x_lo[k];
      y[x_upper(k)] = orig_.x_hi[k] - x[k];
    }
    auto h = orig_.flows(x);
    for (Index r = 0; r < orig_.n_h; ++r) {
      y[s_lower(r)] = h[r] - orig_.h_lo[r];
      y[s_upper(r)] = orig_.h_hi[r] - h[r];
    }
    return y;
  }

  /// Factor applied to f, its gradient and its Hessian in every eval_* call. The
  /// original problem's objective is left untouched.
  [[nodiscard]] double objective_scale() const { return obj_scale_; }
  void set_objective_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ModelError("objective scale must be positive and finite");
    obj_scale_ = s;
  }

  [[nodiscard]] double eval_objective(std::span<const double> y) const { return obj_scale_ * orig_.objective(to_x(y)); }

  [[nodiscard]] std::vector<double> eval_gradient(std::span<const double> y) const {
    auto gx = orig_.objective_gradient(to_x(y));
    for (auto& v : gx) v *= obj_scale_;
    std::vector<double> g(n_, 0.0);
    std::copy(gx.begin(), gx.end(), g.begin());
    return g;
  }

  [[nodiscard]] std::vector<double> eval_constraints(std::span<const double> y) const {
    auto x = to_x(y);
    std::vector<double> c(m_);
    auto g = orig_.balance(x);
    std::copy(g.begin(), g.end(), c.begin());
    auto h = orig_.flows(x);
    for (Index r = 0; r < orig_.n_h; ++r) {
      c[row_h_lower(r)] = h[r] - orig_.h_lo[r] - y[s_lower(r)];
      c[row_h_upper(r)] = orig_.h_hi[r] - h[r] - y[s_upper(r)];
    }
    for (Index k = 0; k < orig_.n_x; ++k) {
      c[row_link(k)] = y[x_lower(k)] + y[x_upper(k)] - (orig_.x_hi[k] - orig_.x_lo[k]);
    }
    return c;
  }

  /// Writes Jacobian values into ws.jacobian; its index arrays are never touched.
  const CscMatrix& eval_jacobian(std::span<const double> y, EvalWorkspace& ws) const {
    if (!ws.jacobian.same_pattern(jac_.pattern)) throw PatternMismatch("eval_jacobian: foreign workspace");
    auto x = to_x(y);
    std::fill(ws.jacobian.values.begin(), ws.jacobian.values.end(), 0.0);
    ValueSink sink{ws.jacobian.values, jac_.slot};
    emit_jacobian(x, sink);
    return ws.jacobian;
  }

  /// Lower triangle of grad^2 f + sum lambda_i grad^2 c_i.
  const CscMatrix& eval_hessian(std::span<const double> y, std::span<const double> lambda,
                                EvalWorkspace& ws) const {
    if (static_cast<Index>(lambda.size()) != m_) throw DimensionMismatch("eval_hessian: multiplier length");
    if (!ws.hessian.same_pattern(hess_.pattern)) throw PatternMismatch("eval_hessian: foreign workspace");
    auto x = to_x(y);
    std::fill(ws.hessian.values.begin(), ws.hessian.values.end(), 0.0);
    ValueSink sink{ws.hessian.values, hess_.slot};
    emit_hessian(x, lambda, sink);
    return ws.hessian;
  }

 private:
  void check(std::span<const double> y) const {
    if (static_cast<Index>(y.size()) != n_) {
      throw DimensionMismatch("primal vector has length " + std::to_string(y.size()) + ", expected " +
                              std::to_string(n_));
    }
  }

  template <class Sink>
  void emit_jacobian(std::span<const double> x, Sink& sink) const {
    const auto& o = orig_;
    const Index nb = o.n_bus;
    // Power balance: d/dx of (sum gen - demand - injection).
    for (Index j = 0; j < nb; ++j) {
      for (Index p = o.ybus.col_ptr[j]; p < o.ybus.col_ptr[j + 1]; ++p) {
        const Index i = o.ybus.row_ind[p];
        const Complex y = o.ybus.values[p];
        if (i == j) {
          const double vi = x[o.vm(i)];
          sink.add(row_p(i), x_lower(o.va(i)), 0.0);
          sink.add(row_p(i), x_lower(o.vm(i)), -2.0 * y.real() * vi);
          sink.add(row_q(i), x_lower(o.va(i)), 0.0);
          sink.add(row_q(i), x_lower(o.vm(i)), 2.0 * y.imag() * vi);
          continue;
        }
        const Index vars[4] = {o.va(i), o.va(j), o.vm(i), o.vm(j)};
        auto tp = PairTerm::eval(0.0, y.real(), y.imag(), x[vars[0]], x[vars[1]], x[vars[2]], x[vars[3]]);
        auto tq = PairTerm::eval(0.0, -y.imag(), y.real(), x[vars[0]], x[vars[1]], x[vars[2]], x[vars[3]]);
        for (int a = 0; a < 4; ++a) sink.add(row_p(i), x_lower(vars[a]), -tp.grad[a]);
        for (int a = 0; a < 4; ++a) sink.add(row_q(i), x_lower(vars[a]), -tq.grad[a]);
      }
    }
    for (Index k = 0; k < o.n_gen; ++k) {
      sink.add(row_p(o.gen_bus[k]), x_lower(o.pg(k)), 1.0);
      sink.add(row_q(o.gen_bus[k]), x_lower(o.qg(k)), 1.0);
    }
    // Flow limits.
    for (Index r = 0; r < o.n_h; ++r) {
      const int end = static_cast<int>(r % 2);
      const auto& br = o.ybus.branches[o.limited[r]];
      const Index i = end == 0 ? br.from : br.to;
      const Index j = end == 0 ? br.to : br.from;
      const Index vars[4] = {o.va(i), o.va(j), o.vm(i), o.vm(j)};
      auto [tp, tq] = o.end_flow(x, o.limited[r], end);
      for (int a = 0; a < 4; ++a) {
        const double dh = 2.0 * (tp.value * tp.grad[a] + tq.value * tq.grad[a]);
        sink.add(row_h_lower(r), x_lower(vars[a]), dh);
        sink.add(row_h_upper(r), x_lower(vars[a]), -dh);
      }
      sink.add(row_h_lower(r), s_lower(r), -1.0);
      sink.add(row_h_upper(r), s_upper(r), -1.0);
    }
    for (Index k = 0; k < o.n_x; ++k) {
      sink.add(row_link(k), x_lower(k), 1.0);
      sink.add(row_link(k), x_upper(k), 1.0);
    }
  }

  template <class Sink>
  static void emit_local_hessian(Sink& sink, const Index (&vars)[4], const std::array<std::array<double, 4>, 4>& h,
                                 double weight) {
    for (int a = 0; a < 4; ++a) {
      for (int b = a; b < 4; ++b) {
        const Index r = std::max(vars[a], vars[b]);
        const Index c = std::min(vars[a], vars[b]);
        // Off-diagonal local pairs landing on the same global diagonal appear twice.
        double v = weight * h[a][b];
        if (a != b && vars[a] == vars[b]) v *= 2.0;
        sink.add(r, c, v);
      }
    }
  }

  template <class Sink>
  void emit_hessian(std::span<const double> x, std::span<const double> lambda, Sink& sink) const {
    const auto& o = orig_;
    const Index nb = o.n_bus;
    // x' occupies y[0, n_x) with identical indices, so x-space indices are used directly.
    for (Index k = 0; k < o.n_gen; ++k) {
      sink.add(o.pg(k), o.pg(k), 2.0 * obj_scale_ * o.cost_c2[k] * o.base_mva * o.base_mva);
    }
    for (Index j = 0; j < nb; ++j) {
      for (Index p = o.ybus.col_ptr[j]; p < o.ybus.col_ptr[j + 1]; ++p) {
        const Index i = o.ybus.row_ind[p];
        const Complex y = o.ybus.values[p];
        const double wp = -lambda[row_p(i)];
        const double wq = -lambda[row_q(i)];
        if (i == j) {
          sink.add(o.vm(i), o.vm(i), wp * 2.0 * y.real() - wq * 2.0 * y.imag());
          sink.add(o.va(i), o.va(i), 0.0);
          continue;
        }
        const Index vars[4] = {o.va(i), o.va(j), o.vm(i), o.vm(j)};
        auto tp = PairTerm::eval(0.0, y.real(), y.imag(), x[vars[0]], x[vars[1]], x[vars[2]], x[vars[3]]);
        auto tq = PairTerm::eval(0.0, -y.imag(), y.real(), x[vars[0]], x[vars[1]], x[vars[2]], x[vars[3]]);
        std::array<std::array<double, 4>, 4> h{};
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) h[a][b] = wp * tp.hess[a][b] + wq * tq.hess[a][b];
        }
        emit_local_hessian(sink, vars, h, 1.0);
      }
    }
    for (Index r = 0; r < o.n_h; ++r) {
      const int end = static_cast<int>(r % 2);
      const auto& br = o.ybus.branches[o.limited[r]];
      const Index i = end == 0 ? br.from : br.to;
      const Index j = end == 0 ? br.to : br.from;
      const Index vars[4] = {o.va(i), o.va(j), o.vm(i), o.vm(j)};
      auto [tp, tq] = o.end_flow(x, o.limited[r], end);
      const double w = lambda[row_h_lower(r)] - lambda[row_h_upper(r)];
      std::array<std::array<double, 4>, 4> h{};
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          h[a][b] = 2.0 * (tp.grad[a] * tp.grad[b] + tp.value * tp.hess[a][b] + tq.grad[a] * tq.grad[b] +
                           tq.value * tq.hess[a][b]);
        }
      }
      emit_local_hessian(sink, vars, h, w);
    }
  }

  OriginalNlp orig_;
  double obj_scale_ = 1.0;
  Index n_ = 0;
  Index m_ = 0;
  AssemblyMap jac_;
  AssemblyMap hess_;
};

inline CompactNlp to_compact(OriginalNlp nlp, double infinite_bound = 1e8, double fixed_relax = 1e-4) {
  return CompactNlp(std::move(nlp), infinite_bound, fixed_relax);
}

}  // namespace gridkkt

#endif  // GRIDKKT_ACOPF_NLP_HPP
