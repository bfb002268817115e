#include <gtest/gtest.h>

#include <random>

#include "gridkkt/linear_solver.hpp"
#include "gridkkt/ordering.hpp"
#include "kkt_stream.hpp"
#include "oracles.hpp"

using namespace gridkkt;

namespace {

/// max |(P S_r A S_c Q - L U)_ij| computed densely.
double factor_error(const RefactorizationHandle& h, const CscMatrix& a) {
  auto scaled = apply_scaling(a, h.row_scale(), h.col_scale());
  auto paq = oracle::to_dense(permute_system(scaled, h.row_permutation(), h.column_permutation()));
  auto [l, u] = split_lu(h.factors());
  auto dl = oracle::to_dense(l);
  auto du = oracle::to_dense(u);
  double err = 0.0;
  for (Index i = 0; i < a.n_rows; ++i) {
    for (Index j = 0; j < a.n_cols; ++j) {
      long double s = 0.0L;
      for (Index k = 0; k <= std::min(i, j); ++k) s += static_cast<long double>(dl(i, k)) * du(k, j);
      err = std::max(err, std::abs(static_cast<double>(paq(i, j) - s)));
    }
  }
  return err;
}

const stream::RecordedSolve& case30_stream() {
  static const auto rec = stream::record("case30");
  return rec;
}

}  // namespace

TEST(AnalyzeAndFactorize, IdentityGivesIdentityFactors) {
  auto h = analyze_and_factorize(identity_csc(6));
  const auto& lu = h.factors();
  EXPECT_EQ(lu.nnz(), 6);
  EXPECT_EQ(lu.l_nnz(), 0);
  for (Index i = 0; i < 6; ++i) {
    EXPECT_EQ(lu.values[lu.diag_pos[i]], 1.0);
    EXPECT_EQ(lu.p[i], i);
    EXPECT_EQ(lu.q[i], i);
  }
}

TEST(AnalyzeAndFactorize, DenseFiveByFiveMatchesDenseLu) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  TripletMatrix t(5, 5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) t.add(i, j, val(rng));
  }
  auto a = compress(t);
  auto h = analyze_and_factorize(a);
  auto scaled = apply_scaling(a, h.row_scale(), h.col_scale());
  const double scale = norm_inf(scaled);
  EXPECT_LT(factor_error(h, a), 1e-12 * scale);

  // Column order fixed by the handle, rows chosen by partial pivoting: the dense
  // oracle run on (S_r A S_c Q) must produce the same U.
  auto aq = oracle::to_dense(permute_system(scaled, Permutation::identity(5), h.column_permutation()));
  auto ref = oracle::dense_lu(aq);
  auto [l, u] = split_lu(h.factors());
  auto du = oracle::to_dense(u);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i; j < 5; ++j) EXPECT_NEAR(du(i, j), ref.u(i, j), 1e-12 * scale);
  }
}

TEST(AnalyzeAndFactorize, AmdReducesFillOnArrowhead) {
  const Index n = 40;
  TripletMatrix t(n, n);
  for (Index i = 0; i < n; ++i) {
    t.add(i, i, i == 0 ? 100.0 : 4.0);
    if (i > 0) {
      t.add(0, i, 1.0);
      t.add(i, 0, 1.0);
    }
  }
  auto a = compress(t);
  auto natural = analyze_and_factorize(a, Permutation::identity(n));
  auto amd = analyze_and_factorize(a, amd_order(a));
  EXPECT_LT(amd.factors().nnz(), natural.factors().nnz());
  EXPECT_EQ(natural.factors().nnz(), n * n);
  EXPECT_EQ(amd.factors().nnz(), 3 * n - 2);
}

TEST(AnalyzeAndFactorize, StructurallySingularThrows) {
  TripletMatrix t(3, 3);
  t.add(0, 0, 1.0);
  t.add(1, 0, 1.0);
  t.add(2, 1, 1.0);
  t.add(2, 2, 1.0);
  t.add(0, 2, 1.0);
  t.add(1, 2, 1.0);
  EXPECT_THROW(analyze_and_factorize(compress(t)), SingularMatrix);
}

TEST(AnalyzeAndFactorize, FactorizationResidualBoundedByGrowth) {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_nonsingular(60, 0.05, rng);
    auto h = analyze_and_factorize(a);
    auto scaled = apply_scaling(a, h.row_scale(), h.col_scale());
    const double bound = 1e-12 * norm_inf(scaled) * std::max(1.0, h.diagnostics().growth);
    EXPECT_LE(factor_error(h, a), bound) << "trial " << trial;
  }
}

TEST(Refactorize, SameMatrixReproducesFactors) {
  std::mt19937_64 rng(107);
  auto a = oracle::random_nonsingular(80, 0.05, rng);
  auto h = analyze_and_factorize(a);
  const auto before = h.factors().values;
  auto d = refactorize(h, a);
  EXPECT_EQ(d.status, FactorStatus::Ok);
  const auto& after = h.factors().values;
  double scale = 0.0;
  for (double v : before) scale = std::max(scale, std::abs(v));
  for (std::size_t t = 0; t < before.size(); ++t) EXPECT_LE(std::abs(after[t] - before[t]), 1e-15 * scale);
}

TEST(Refactorize, DoubledDiagonalDoublesU) {
  TripletMatrix t(4, 4);
  const double d[] = {3.0, -1.5, 0.25, 8.0};
  for (Index i = 0; i < 4; ++i) t.add(i, i, d[i]);
  auto a = compress(t);
  FactorOptions opts;
  opts.freeze_scaling = true;
  auto h = analyze_and_factorize(a, opts);
  auto [l0, u0] = split_lu(h.factors());
  auto a2 = a;
  for (auto& v : a2.values) v *= 2.0;
  refactorize(h, a2);
  auto [l1, u1] = split_lu(h.factors());
  EXPECT_EQ(l1.values, l0.values);
  for (std::size_t k = 0; k < u0.values.size(); ++k) EXPECT_EQ(u1.values[k], 2.0 * u0.values[k]);
}

TEST(Refactorize, PatternMismatchThrows) {
  auto h = analyze_and_factorize(identity_csc(3));
  TripletMatrix t(3, 3);
  for (Index i = 0; i < 3; ++i) t.add(i, i, 1.0);
  t.add(0, 2, 1.0);
  EXPECT_THROW(refactorize(h, compress(t)), PatternMismatch);
}

TEST(Refactorize, PatternFrozenAcrossCalls) {
  std::mt19937_64 rng(109);
  auto a = oracle::random_nonsingular(70, 0.05, rng);
  auto h = analyze_and_factorize(a);
  const auto row_ptr = h.factors().row_ptr;
  const auto col_ind = h.factors().col_ind;
  const auto p = h.row_permutation().forward();
  std::uniform_real_distribution<double> wiggle(0.9, 1.1);
  for (int k = 0; k < 10; ++k) {
    auto b = a;
    for (auto& v : b.values) v *= wiggle(rng);
    refactorize(h, b);
    EXPECT_EQ(h.factors().row_ptr, row_ptr);
    EXPECT_EQ(h.factors().col_ind, col_ind);
    EXPECT_EQ(h.row_permutation().forward(), p);
    if (h.numerically_valid()) {
      const double bound = 1e-12 * norm_inf(apply_scaling(b, h.row_scale(), h.col_scale())) *
                           std::max(1.0, h.diagnostics().growth);
      EXPECT_LE(factor_error(h, b), bound);
    }
  }
}

TEST(Refactorize, ZeroFrozenPivotIsReportedUnstable) {
  TripletMatrix t(2, 2);
  t.add(0, 0, 1.0);
  t.add(0, 1, 1.0);
  t.add(1, 0, 1.0);
  t.add(1, 1, 2.0);
  auto a = compress(t);
  auto h = analyze_and_factorize(a, Permutation::identity(2));
  auto b = a;
  b.values[3] = 1.0;  // A(1,1) = 1: the second pivot vanishes under the frozen order
  auto d = refactorize(h, b);
  EXPECT_EQ(d.status, FactorStatus::UnstablePivot);
  EXPECT_GE(d.unstable_row, 0);
  EXPECT_FALSE(h.numerically_valid());
}

TEST(Refactorize, Case30IterationTenMatchesFreshFactorization) {
  const auto& rec = case30_stream();
  ASSERT_GE(rec.systems.size(), 10u);
  auto h = analyze_and_factorize(rec.systems[0].matrix);
  const auto& k10 = rec.systems[9];
  refactorize(h, k10.matrix);
  ASSERT_TRUE(h.numerically_valid());
  auto x = triangular_solve(h, k10.rhs);
  refine(h, k10.matrix, k10.rhs, x);
  auto ref = stream::fresh_solve(k10.matrix, k10.rhs);
  EXPECT_LT(oracle::rel_err(x, ref), 1e-8);
}

TEST(TriangularSolve, IdentityFactorsReturnRhs) {
  auto h = analyze_and_factorize(identity_csc(4));
  std::vector<double> b = {1.0, -2.0, 0.5, 7.0};
  EXPECT_EQ(triangular_solve(h, b), b);
}

TEST(TriangularSolve, ZeroRhsGivesZero) {
  std::mt19937_64 rng(113);
  auto a = oracle::random_nonsingular(50, 0.06, rng);
  auto h = analyze_and_factorize(a);
  EXPECT_EQ(triangular_solve(h, std::vector<double>(50, 0.0)), std::vector<double>(50, 0.0));
}

TEST(TriangularSolve, MatchesDenseSolveOnRandomSystem) {
  std::mt19937_64 rng(127);
  auto a = oracle::random_nonsingular(100, 0.04, rng);
  auto b = oracle::random_vector(100, rng);
  auto h = analyze_and_factorize(a);
  auto ref = oracle::dense_solve(oracle::to_dense(a), b);
  EXPECT_LT(oracle::rel_err(triangular_solve(h, b), ref), 1e-10);
}

TEST(Refine, ExactSolutionNeedsNoSweep) {
  std::mt19937_64 rng(131);
  auto a = oracle::random_nonsingular(40, 0.08, rng);
  std::vector<double> x_true = oracle::random_vector(40, rng);
  // Integer data keeps b = A x exact.
  for (auto& v : a.values) v = std::round(v * 8.0);
  for (auto& v : x_true) v = std::round(v * 8.0);
  auto h = analyze_and_factorize(a);
  auto b = spmv(a, x_true);
  auto x = x_true;
  auto st = refine(h, a, b, x);
  EXPECT_EQ(st.iterations, 0);
  EXPECT_LE(st.final_residual, 1e-12);
  EXPECT_EQ(x, x_true);
}

TEST(Refine, NoisyStartImprovesTenfoldPerSweep) {
  std::mt19937_64 rng(137);
  auto a = oracle::random_nonsingular(120, 0.03, rng);
  auto b = oracle::random_vector(120, rng);
  auto h = analyze_and_factorize(a);
  auto x = oracle::dense_solve(oracle::to_dense(a), b);
  std::normal_distribution<double> noise(0.0, 1e-4);
  for (auto& v : x) v += noise(rng);
  RefineOptions opts;
  opts.rtol = 0.0;  // run until the floor is reached
  auto st = refine(h, a, b, x, opts);
  ASSERT_GE(st.history.size(), 2u);
  EXPECT_GT(st.history.front(), 1e-8);
  for (std::size_t k = 1; k < st.history.size(); ++k) {
    const bool tenfold = st.history[k] <= 0.1 * st.history[k - 1];
    const bool at_floor = st.history[k] <= 1e-14;
    EXPECT_TRUE(tenfold || at_floor) << "sweep " << k << ": " << st.history[k - 1] << " -> " << st.history[k];
  }
  EXPECT_LE(st.final_residual, 1e-14);
}

TEST(Refine, ResidualHistoryIsNonincreasing) {
  std::mt19937_64 rng(139);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = oracle::random_nonsingular(60, 0.05, rng);
    auto b = oracle::random_vector(60, rng);
    auto h = analyze_and_factorize(a);
    auto x = triangular_solve(h, b);
    auto st = refine(h, a, b, x);
    for (std::size_t k = 1; k < st.history.size(); ++k) EXPECT_LE(st.history[k], st.history[k - 1]);
    EXPECT_EQ(st.final_residual, st.history.back());
  }
}

TEST(Refine, WrongFactorsStagnate) {
  // Factors of a different matrix cannot drive the residual down: the sweep
  // diverges or stalls and refinement reports stagnation instead of looping.
  std::mt19937_64 rng(149);
  auto a = oracle::random_nonsingular(50, 0.06, rng);
  auto other = a;
  for (auto& v : other.values) v = -v + 0.3;
  auto h = analyze_and_factorize(other);
  auto b = oracle::random_vector(50, rng);
  std::vector<double> x(50, 0.0);
  auto st = refine(h, a, b, x);
  EXPECT_TRUE(st.stagnated);
  EXPECT_LT(st.iterations, RefineOptions{}.max_iters);
  EXPECT_LE(st.final_residual, st.initial_residual);
}

TEST(SolveSequence, SingleSystemEqualsDirectPipeline) {
  std::mt19937_64 rng(151);
  auto a = oracle::random_nonsingular(90, 0.04, rng);
  auto b = oracle::random_vector(90, rng);
  std::vector<CscMatrix> mats{a};
  std::vector<std::vector<double>> rhs{b};
  auto steps = solve_sequence(mats, rhs);
  ASSERT_EQ(steps.size(), 1u);
  auto h = analyze_and_factorize(a);
  auto x = triangular_solve(h, b);
  refine(h, a, b, x);
  EXPECT_EQ(steps[0].x, x);
  EXPECT_TRUE(steps[0].analyzed);
}

TEST(SolveSequence, RejectsEmptyAndMismatchedStreams) {
  std::vector<CscMatrix> none;
  std::vector<std::vector<double>> no_rhs;
  EXPECT_THROW(solve_sequence(none, no_rhs), DimensionMismatch);
  std::vector<CscMatrix> mats{identity_csc(2), identity_csc(3)};
  std::vector<std::vector<double>> rhs{{1.0, 1.0}, {1.0, 1.0, 1.0}};
  EXPECT_THROW(solve_sequence(mats, rhs), PatternMismatch);
}

TEST(SolveSequence, Case30StreamMatchesFreshFactorizations) {
  const auto& rec = case30_stream();
  ASSERT_GE(rec.systems.size(), 50u);
  SequenceSolver solver;
  for (std::size_t k = 0; k < 50; ++k) {
    const auto& s = rec.systems[k];
    auto step = solver.solve(s.matrix, s.rhs);
    auto ref = stream::fresh_solve(s.matrix, s.rhs);
    EXPECT_LT(oracle::rel_err(step.x, ref), 1e-8) << "system " << k;
  }
  EXPECT_EQ(solver.analyses(), 1);
  EXPECT_EQ(solver.fallbacks(), 0);
}

TEST(SolveSequence, InjectedPivotFailureFallsBackOnce) {
  const auto& rec = case30_stream();
  ASSERT_GE(rec.systems.size(), 50u);
  std::vector<CscMatrix> mats;
  std::vector<std::vector<double>> rhs;
  for (std::size_t k = 0; k < 50; ++k) {
    mats.push_back(rec.systems[k].matrix);
    rhs.push_back(rec.systems[k].rhs);
  }
  SequenceSolver solver;
  for (std::size_t k = 0; k < 24; ++k) solver.solve(mats[k], rhs[k]);
  stream::zero_frozen_pivot(*solver.handle(), mats[24]);
  for (std::size_t k = 24; k < 50; ++k) {
    auto step = solver.solve(mats[k], rhs[k]);
    EXPECT_EQ(step.stats.fallback, k == 24) << "system " << k;
    EXPECT_TRUE(solver.handle()->matches_pattern(mats[k]));
    auto ref = stream::fresh_solve(mats[k], rhs[k]);
    EXPECT_LT(oracle::rel_err(step.x, ref), 1e-8) << "system " << k;
    EXPECT_LT(step.stats.final_residual, 1e-10) << "system " << k;
  }
  EXPECT_EQ(solver.fallbacks(), 1);
}

TEST(SolveSequence, FactorizeEachNeverRefactorizes) {
  const auto& rec = case30_stream();
  SequenceOptions opts;
  opts.strategy = Strategy::FactorizeEach;
  SequenceSolver solver(opts);
  for (std::size_t k = 0; k < 10; ++k) {
    auto step = solver.solve(rec.systems[k].matrix, rec.systems[k].rhs);
    EXPECT_FALSE(step.refactorized);
  }
  EXPECT_EQ(solver.analyses(), 1);
  EXPECT_EQ(solver.factorizations(), 9);
  EXPECT_EQ(solver.refactorizations(), 0);
}

TEST(OracleEquivalence, RandomSystemsUpToTwoHundred) {
  std::mt19937_64 rng(157);
  std::uniform_int_distribution<Index> size(5, 200);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = size(rng);
    auto a = oracle::random_nonsingular(n, std::min(0.05, 4.0 / n + 0.01), rng);
    auto b = oracle::random_vector(n, rng);
    auto h = analyze_and_factorize(a);
    auto x = triangular_solve(h, b);
    refine(h, a, b, x);
    EXPECT_LT(oracle::rel_err(x, oracle::dense_solve(oracle::to_dense(a), b)), 1e-9) << "n = " << n;
  }
}
