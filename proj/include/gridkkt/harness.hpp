#ifndef GRIDKKT_HARNESS_HPP
#define GRIDKKT_HARNESS_HPP

// Reporting side of the command-line tool: run reports, strategy comparisons,
// JSON-lines / CSV serialization, phase aggregation of logs, static SVG charts,
// and loading of dumped KKT sequences for replay.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gridkkt/interior_point.hpp"
#include "gridkkt/matrix_market.hpp"

namespace gridkkt::harness {

using json = nlohmann::json;

inline constexpr std::string_view kSchemaVersion = "1.0";

inline double to_ms(std::int64_t ns) { return static_cast<double>(ns) * 1e-6; }

// ---------------------------------------------------------------------------
// Phase breakdown

/// The four reported phases. KKT assembly is counted as "other".
struct PhaseBreakdown {
  static constexpr std::array<std::string_view, 4> kNames = {"factorization", "triangular_solve", "model_eval",
                                                             "other"};
  std::array<double, 4> ms{};  ///< same order as kNames

  [[nodiscard]] double total_ms() const { return ms[0] + ms[1] + ms[2] + ms[3]; }

  /// Shares in percent; they sum to 100 up to rounding whenever total_ms() > 0.
  [[nodiscard]] std::array<double, 4> percentages() const {
    std::array<double, 4> p{};
    const double t = total_ms();
    if (t <= 0.0) return p;
    for (std::size_t i = 0; i < 4; ++i) p[i] = 100.0 * ms[i] / t;
    return p;
  }

  /// factorization + triangular solve, in percent.
  [[nodiscard]] double linear_solver_share() const {
    auto p = percentages();
    return p[0] + p[1];
  }
};

/// Breakdown of a solve. Time spent outside the Newton iterations (setup, the final
/// residual check, observers) goes to "other", so the four phases sum to total_ns.
inline PhaseBreakdown breakdown_of(const IpmResult& r) {
  PhaseTimes sum;
  for (const auto& rec : r.log) sum += rec.phases;
  PhaseBreakdown b;
  b.ms[0] = to_ms(sum.factorization);
  b.ms[1] = to_ms(sum.triangular_solve);
  b.ms[2] = to_ms(sum.model_eval);
  const std::int64_t rest = r.total_ns - sum.factorization - sum.triangular_solve - sum.model_eval;
  b.ms[3] = to_ms(std::max<std::int64_t>(0, rest));
  return b;
}

// ---------------------------------------------------------------------------
// Run report and benchmark pair

struct RunReport {
  std::string case_name;
  std::string strategy;
  double total_s = 0.0;
  int iterations = 0;
  PhaseBreakdown phases;
  double objective = 0.0;
  std::string status;
  double constraint_violation = 0.0;
  double kkt_residual = 0.0;
  int analyses = 0;
  int refactorizations = 0;
  int factorizations = 0;
  int fallbacks = 0;
  int regularizations = 0;

  /// Factorization time per Newton step; the one-time analysis and first
  /// factorization are included, so their cost is amortized over the run.
  [[nodiscard]] double factorization_ms_per_iteration() const {
    return iterations > 0 ? phases.ms[0] / iterations : 0.0;
  }
  [[nodiscard]] double ms_per_iteration(std::size_t phase) const {
    return iterations > 0 ? phases.ms.at(phase) / iterations : 0.0;
  }
};

inline RunReport make_run_report(std::string case_name, Strategy strategy, const IpmResult& r) {
  RunReport rep;
  rep.case_name = std::move(case_name);
  rep.strategy = to_string(strategy);
  rep.total_s = static_cast<double>(r.total_ns) * 1e-9;
  rep.iterations = static_cast<int>(r.log.size());
  rep.phases = breakdown_of(r);
  rep.objective = r.objective;
  rep.status = to_string(r.status);
  rep.constraint_violation = r.constraint_violation;
  rep.kkt_residual = r.kkt_residual;
  rep.analyses = r.analyses;
  rep.refactorizations = r.refactorizations;
  rep.factorizations = r.factorizations;
  rep.fallbacks = r.fallbacks;
  rep.regularizations = r.regularizations;
  return rep;
}

/// baseline = FactorizeEach, candidate = RefactorizeSequence on the same case and options.
struct BenchmarkPair {
  RunReport baseline;
  RunReport candidate;

  [[nodiscard]] double total_speedup() const {
    return candidate.total_s > 0.0 ? baseline.total_s / candidate.total_s : 0.0;
  }
  /// Ratio of amortized per-iteration factorization times.
  [[nodiscard]] double factorization_speedup() const {
    const double c = candidate.factorization_ms_per_iteration();
    return c > 0.0 ? baseline.factorization_ms_per_iteration() / c : 0.0;
  }
};

inline BenchmarkPair make_benchmark_pair(RunReport baseline, RunReport candidate) {
  if (baseline.case_name != candidate.case_name) {
    throw Error("benchmark pair mixes cases '" + baseline.case_name + "' and '" + candidate.case_name + "'");
  }
  if (baseline.strategy != to_string(Strategy::FactorizeEach) ||
      candidate.strategy != to_string(Strategy::RefactorizeSequence)) {
    throw Error("benchmark pair expects factorize-each as baseline and refactorize as candidate");
  }
  return {std::move(baseline), std::move(candidate)};
}

// ---------------------------------------------------------------------------
// JSON

inline json phases_json(const PhaseBreakdown& b) {
  json ms = json::object();
  json pct = json::object();
  auto p = b.percentages();
  for (std::size_t i = 0; i < 4; ++i) {
    ms[std::string(PhaseBreakdown::kNames[i])] = b.ms[i];
    pct[std::string(PhaseBreakdown::kNames[i])] = p[i];
  }
  return {{"ms", ms}, {"percent", pct}, {"linear_solver_percent", b.linear_solver_share()}};
}

inline json to_json(const RunReport& r) {
  return {{"type", "run"},
          {"schema_version", kSchemaVersion},
          {"case", r.case_name},
          {"strategy", r.strategy},
          {"status", r.status},
          {"total_s", r.total_s},
          {"iterations", r.iterations},
          {"objective", r.objective},
          {"constraint_violation", r.constraint_violation},
          {"kkt_residual", r.kkt_residual},
          {"phases", phases_json(r.phases)},
          {"factorization_ms_per_iteration", r.factorization_ms_per_iteration()},
          {"linear_solver",
           {{"analyses", r.analyses},
            {"refactorizations", r.refactorizations},
            {"factorizations", r.factorizations},
            {"fallbacks", r.fallbacks},
            {"regularizations", r.regularizations}}}};
}

inline json to_json(const BenchmarkPair& b) {
  return {{"type", "benchmark"},
          {"schema_version", kSchemaVersion},
          {"case", b.candidate.case_name},
          {"baseline", to_json(b.baseline)},
          {"candidate", to_json(b.candidate)},
          {"baseline_factorization_ms_per_iteration", b.baseline.factorization_ms_per_iteration()},
          {"candidate_factorization_ms_per_iteration", b.candidate.factorization_ms_per_iteration()},
          {"factorization_speedup", b.factorization_speedup()},
          {"total_speedup", b.total_speedup()}};
}

inline json to_json(const IterationRecord& r) {
  return {{"type", "iteration"},
          {"schema_version", kSchemaVersion},
          {"k", r.k},
          {"outer", r.outer},
          {"mu", r.mu},
          {"r_y_inf", r.r_y_inf},
          {"r_lambda_inf", r.r_lambda_inf},
          {"kkt_residual", r.kkt_residual},
          {"alpha_primal", r.alpha_primal},
          {"alpha_dual", r.alpha_dual},
          {"objective", r.objective},
          {"refinement",
           {{"iterations", r.refine_iterations},
            {"initial_residual", r.refine_initial_residual},
            {"final_residual", r.refine_final_residual},
            {"fallback", r.fallback}}},
          {"analyzed", r.analyzed},
          {"regularized", r.regularized},
          {"kkt_pattern_hash", r.kkt_pattern_hash},
          {"phases_ns",
           {{"model_eval", r.phases.model_eval},
            {"kkt_assembly", r.phases.kkt_assembly},
            {"factorization", r.phases.factorization},
            {"triangular_solve", r.phases.triangular_solve},
            {"other", r.phases.other}}},
          {"total_ns", r.total_ns}};
}

/// Per-system replay row.
struct ReplayRow {
  std::string matrix;
  SequenceStep step;
  double residual = 0.0;  ///< unscaled relative residual of the returned x
};

inline json to_json(const ReplayRow& r) {
  return {{"type", "replay"},
          {"schema_version", kSchemaVersion},
          {"matrix", r.matrix},
          {"analyzed", r.step.analyzed},
          {"refactorized", r.step.refactorized},
          {"fallback", r.step.stats.fallback},
          {"refine_iterations", r.step.stats.iterations},
          {"initial_residual", r.step.stats.initial_residual},
          {"final_residual", r.step.stats.final_residual},
          {"residual", r.residual},
          {"stagnated", r.step.stats.stagnated},
          {"factor_ms", to_ms(r.step.analyze_ns + r.step.factor_ns)},
          {"solve_ms", to_ms(r.step.solve_ns)}};
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline std::string csv_quote(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string iteration_csv_header() {
  return "k,outer,mu,r_y_inf,r_lambda_inf,kkt_residual,alpha_primal,alpha_dual,objective,refine_iterations,"
         "refine_initial_residual,refine_final_residual,fallback,analyzed,regularized,model_eval_ns,"
         "kkt_assembly_ns,factorization_ns,triangular_solve_ns,other_ns,total_ns";
}

inline std::string to_csv(const IterationRecord& r) {
  std::ostringstream s;
  s << r.k << ',' << r.outer << ',' << csv_number(r.mu) << ',' << csv_number(r.r_y_inf) << ','
    << csv_number(r.r_lambda_inf) << ',' << csv_number(r.kkt_residual) << ',' << csv_number(r.alpha_primal) << ','
    << csv_number(r.alpha_dual) << ',' << csv_number(r.objective) << ',' << r.refine_iterations << ','
    << csv_number(r.refine_initial_residual) << ',' << csv_number(r.refine_final_residual) << ',' << r.fallback
    << ',' << r.analyzed << ',' << r.regularized << ',' << r.phases.model_eval << ',' << r.phases.kkt_assembly
    << ',' << r.phases.factorization << ',' << r.phases.triangular_solve << ',' << r.phases.other << ','
    << r.total_ns;
  return s.str();
}

inline std::string run_csv_header() {
  return "case,strategy,status,total_s,iterations,objective,constraint_violation,kkt_residual,factorization_ms,"
         "triangular_solve_ms,model_eval_ms,other_ms,factorization_pct,triangular_solve_pct,model_eval_pct,"
         "other_pct,linear_solver_pct,factorization_ms_per_iteration,analyses,refactorizations,factorizations,"
         "fallbacks";
}

inline std::string to_csv(const RunReport& r) {
  std::ostringstream s;
  s << csv_quote(r.case_name) << ',' << r.strategy << ',' << r.status << ',' << csv_number(r.total_s) << ','
    << r.iterations << ',' << csv_number(r.objective) << ',' << csv_number(r.constraint_violation) << ','
    << csv_number(r.kkt_residual);
  for (double v : r.phases.ms) s << ',' << csv_number(v);
  for (double v : r.phases.percentages()) s << ',' << csv_number(v);
  s << ',' << csv_number(r.phases.linear_solver_share()) << ',' << csv_number(r.factorization_ms_per_iteration())
    << ',' << r.analyses << ',' << r.refactorizations << ',' << r.factorizations << ',' << r.fallbacks;
  return s.str();
}

inline std::string replay_csv_header() {
  return "matrix,analyzed,refactorized,fallback,refine_iterations,initial_residual,final_residual,residual,"
         "stagnated,factor_ms,solve_ms";
}

inline std::string to_csv(const ReplayRow& r) {
  std::ostringstream s;
  s << csv_quote(r.matrix) << ',' << r.step.analyzed << ',' << r.step.refactorized << ',' << r.step.stats.fallback
    << ',' << r.step.stats.iterations << ',' << csv_number(r.step.stats.initial_residual) << ','
    << csv_number(r.step.stats.final_residual) << ',' << csv_number(r.residual) << ',' << r.step.stats.stagnated
    << ',' << csv_number(to_ms(r.step.analyze_ns + r.step.factor_ns)) << ',' << csv_number(to_ms(r.step.solve_ns));
  return s.str();
}

// ---------------------------------------------------------------------------
// Log aggregation

/// Sums the phases of every iteration record in a JSON-lines log. Lines of other
/// record types are skipped; an unparsable line is an error.
inline PhaseBreakdown aggregate_log(std::istream& in, const std::string& origin = "<log>") {
  PhaseBreakdown b;
  std::string line;
  std::size_t lineno = 0;
  std::size_t iterations = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object() || rec.value("type", "") != "iteration") continue;
    const auto& ph = rec.at("phases_ns");
    auto get = [&](const char* key) { return ph.contains(key) ? ph.at(key).get<double>() * 1e-6 : 0.0; };
    b.ms[0] += get("factorization");
    b.ms[1] += get("triangular_solve");
    b.ms[2] += get("model_eval");
    b.ms[3] += get("kkt_assembly") + get("other");
    ++iterations;
  }
  if (iterations == 0) throw Error(origin + ": no iterations in log");
  return b;
}

inline PhaseBreakdown aggregate_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open log " + path.string());
  return aggregate_log(in, path.string());
}

inline std::string format_breakdown(const PhaseBreakdown& b) {
  std::ostringstream s;
  auto p = b.percentages();
  s << std::left << std::setw(18) << "phase" << std::right << std::setw(14) << "time [ms]" << std::setw(10) << "share"
    << '\n';
  for (std::size_t i = 0; i < 4; ++i) {
    s << std::left << std::setw(18) << PhaseBreakdown::kNames[i] << std::right << std::fixed << std::setprecision(3)
      << std::setw(14) << b.ms[i] << std::setprecision(1) << std::setw(9) << p[i] << "%\n";
  }
  s << std::left << std::setw(18) << "linear solver" << std::right << std::setw(14) << "" << std::fixed
    << std::setprecision(1) << std::setw(9) << b.linear_solver_share() << "%\n";
  return s.str();
}

inline std::string format_run(const RunReport& r) {
  std::ostringstream s;
  s << "case " << r.case_name << "  strategy " << r.strategy << "  status " << r.status << '\n'
    << "iterations " << r.iterations << "  total " << std::fixed << std::setprecision(3) << r.total_s << " s"
    << "  objective " << std::setprecision(6) << r.objective << '\n'
    << std::scientific << std::setprecision(2) << "constraint violation " << r.constraint_violation
    << "  kkt residual " << r.kkt_residual << '\n'
    << std::defaultfloat << "analyses " << r.analyses << "  refactorizations " << r.refactorizations
    << "  factorizations " << r.factorizations << "  fallbacks " << r.fallbacks << '\n'
    << format_breakdown(r.phases);
  return s.str();
}

inline std::string format_benchmark(const BenchmarkPair& b) {
  std::ostringstream s;
  s << "case " << b.candidate.case_name << '\n'
    << std::left << std::setw(18) << "per iteration [ms]" << std::right << std::setw(16) << "factorize-each"
    << std::setw(14) << "refactorize" << std::setw(10) << "ratio" << '\n';
  for (std::size_t i = 0; i < 4; ++i) {
    const double base = b.baseline.ms_per_iteration(i);
    const double cand = b.candidate.ms_per_iteration(i);
    s << std::left << std::setw(18) << PhaseBreakdown::kNames[i] << std::right << std::fixed << std::setprecision(4)
      << std::setw(16) << base << std::setw(14) << cand << std::setprecision(2) << std::setw(10)
      << (cand > 0.0 ? base / cand : 0.0) << '\n';
  }
  s << "iterations " << b.baseline.iterations << " / " << b.candidate.iterations << '\n'
    << std::setprecision(2) << "factorization speedup " << b.factorization_speedup() << "x  total speedup "
    << b.total_speedup() << "x\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

inline constexpr std::array<std::string_view, 4> kPhaseColors = {"#4e79a7", "#f28e2b", "#59a14f", "#bab0ac"};

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v, int prec = 1) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace detail

/// Horizontal bars, one per phase, labelled with their share of the total.
inline std::string svg_phase_chart(const PhaseBreakdown& b, std::string_view title) {
  const auto pct = b.percentages();
  const int width = 640, bar_h = 36, top = 50, left = 150, span = 400;
  const int height = top + 4 * (bar_h + 12) + 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"13\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
    << detail::svg_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < 4; ++i) {
    const int y = top + static_cast<int>(i) * (bar_h + 12);
    const double w = span * pct[i] / 100.0;
    s << "<text x=\"" << left - 10 << "\" y=\"" << y + bar_h / 2 + 5 << "\" text-anchor=\"end\">"
      << PhaseBreakdown::kNames[i] << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << detail::fmt(w, 2) << "\" height=\"" << bar_h
      << "\" fill=\"" << detail::kPhaseColors[i] << "\"/>\n"
      << "<text x=\"" << left + w + 8 << "\" y=\"" << y + bar_h / 2 + 5 << "\">" << detail::fmt(pct[i]) << "% ("
      << detail::fmt(b.ms[i], 2) << " ms)</text>\n";
  }
  s << "<text x=\"" << left << "\" y=\"" << height - 14 << "\">linear solver share "
    << detail::fmt(b.linear_solver_share()) << "%</text>\n</svg>\n";
  return s.str();
}

/// Stacked per-iteration averages of both strategies, one column each.
inline std::string svg_benchmark_chart(const BenchmarkPair& b) {
  const int width = 520, height = 420, base_y = 360, top = 60, col_w = 120;
  const std::array<const RunReport*, 2> runs = {&b.baseline, &b.candidate};
  double max_total = 0.0;
  for (const auto* r : runs) max_total = std::max(max_total, r->iterations > 0 ? r->phases.total_ms() / r->iterations : 0.0);
  const double scale = max_total > 0.0 ? (base_y - top) / max_total : 0.0;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"13\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
    << detail::svg_escape(b.candidate.case_name) << ": average time per iteration [ms]</text>\n"
    << "<line x1=\"40\" y1=\"" << base_y << "\" x2=\"" << width - 160 << "\" y2=\"" << base_y
    << "\" stroke=\"black\"/>\n";
  for (std::size_t c = 0; c < runs.size(); ++c) {
    const auto& r = *runs[c];
    const int x = 70 + static_cast<int>(c) * (col_w + 40);
    double y = base_y;
    for (std::size_t i = 0; i < 4; ++i) {
      const double h = r.ms_per_iteration(i) * scale;
      y -= h;
      s << "<rect x=\"" << x << "\" y=\"" << detail::fmt(y, 2) << "\" width=\"" << col_w << "\" height=\""
        << detail::fmt(h, 2) << "\" fill=\"" << detail::kPhaseColors[i] << "\"/>\n";
    }
    s << "<text x=\"" << x + col_w / 2 << "\" y=\"" << detail::fmt(y - 6, 2) << "\" text-anchor=\"middle\">"
      << detail::fmt(r.iterations > 0 ? r.phases.total_ms() / r.iterations : 0.0, 3) << "</text>\n"
      << "<text x=\"" << x + col_w / 2 << "\" y=\"" << base_y + 20 << "\" text-anchor=\"middle\">" << r.strategy
      << "</text>\n";
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const int y = top + static_cast<int>(i) * 24;
    s << "<rect x=\"" << width - 150 << "\" y=\"" << y << "\" width=\"14\" height=\"14\" fill=\""
      << detail::kPhaseColors[i] << "\"/>\n"
      << "<text x=\"" << width - 130 << "\" y=\"" << y + 12 << "\">" << PhaseBreakdown::kNames[i] << "</text>\n";
  }
  s << "<text x=\"40\" y=\"" << height - 12 << "\">factorization speedup "
    << detail::fmt(b.factorization_speedup(), 2) << "x</text>\n</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// KKT dumps and replay

inline bool is_symmetric(const CscMatrix& a) {
  if (a.n_rows != a.n_cols) return false;
  auto t = transpose(a);
  return t.same_pattern(a) && t.values == a.values;
}

inline std::string sequence_name(std::string_view prefix, int k, std::string_view ext) {
  std::ostringstream s;
  s << prefix << std::setw(4) << std::setfill('0') << k << ext;
  return s.str();
}

/// Writes K_k as kkt_NNNN.mtx and its right-hand side as rhs_NNNN.mtx under dir.
inline void dump_kkt(const std::filesystem::path& dir, int k, const KktSystem& kkt) {
  std::filesystem::create_directories(dir);
  mm::write_matrix(dir / sequence_name("kkt_", k, ".mtx"), kkt.matrix,
                   is_symmetric(kkt.matrix) ? mm::Symmetry::Symmetric : mm::Symmetry::General);
  mm::write_vector(dir / sequence_name("rhs_", k, ".mtx"), kkt.rhs);
}

struct ReplaySequence {
  std::vector<std::string> names;
  std::vector<CscMatrix> matrices;
  std::vector<std::vector<double>> rhs;
};

inline std::vector<std::filesystem::path> mtx_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".mtx") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Loads matrices and right-hand sides (paired in sorted file-name order). Every
/// matrix must share the first one's pattern; the first offender is named. When
/// both directories are the same, kkt_* files are matrices and rhs_* files vectors.
inline ReplaySequence load_replay(const std::filesystem::path& matrix_dir, const std::filesystem::path& rhs_dir) {
  auto mats = mtx_files(matrix_dir);
  auto vecs = mtx_files(rhs_dir);
  if (std::filesystem::equivalent(matrix_dir, rhs_dir)) {
    auto starts = [](const std::filesystem::path& p, std::string_view pre) {
      return p.filename().string().rfind(pre, 0) == 0;
    };
    std::erase_if(mats, [&](const auto& p) { return !starts(p, "kkt_"); });
    std::erase_if(vecs, [&](const auto& p) { return !starts(p, "rhs_"); });
  }
  if (mats.empty()) throw IoError("no .mtx matrices in " + matrix_dir.string());
  if (mats.size() != vecs.size()) {
    throw DimensionMismatch(std::to_string(mats.size()) + " matrices but " + std::to_string(vecs.size()) +
                            " right-hand sides");
  }
  ReplaySequence seq;
  for (std::size_t k = 0; k < mats.size(); ++k) {
    auto a = mm::read_matrix(mats[k]);
    if (!seq.matrices.empty() && !a.same_pattern(seq.matrices.front())) {
      throw PatternMismatch("pattern of " + mats[k].string() + " differs from " + mats.front().string());
    }
    auto b = mm::read_vector(vecs[k]);
    if (static_cast<Index>(b.size()) != a.n_rows) {
      throw DimensionMismatch(vecs[k].string() + " has length " + std::to_string(b.size()) + ", matrix has " +
                              std::to_string(a.n_rows) + " rows");
    }
    seq.names.push_back(mats[k].filename().string());
    seq.matrices.push_back(std::move(a));
    seq.rhs.push_back(std::move(b));
  }
  return seq;
}

inline std::vector<ReplayRow> replay(const ReplaySequence& seq, const SequenceOptions& opts) {
  auto steps = solve_sequence(seq.matrices, seq.rhs, opts);
  std::vector<ReplayRow> rows;
  rows.reserve(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    ReplayRow r;
    r.matrix = seq.names[k];
    r.residual = relative_residual(seq.matrices[k], steps[k].x, seq.rhs[k]);
    r.step = std::move(steps[k]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gridkkt::harness

#endif  // GRIDKKT_HARNESS_HPP
