// gridkkt: ACOPF solves, strategy benchmarks, KKT replays and timing reports.
//
// Exit codes: 0 converged / success, 1 runtime error (I/O, parse, model),
// 2 iteration limit, 3 linear-solver failure, 64 usage error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gridkkt/harness.hpp"

namespace fs = std::filesystem;
using namespace gridkkt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitIterLimit = 2;
constexpr int kExitLinearFailure = 3;
constexpr int kExitUsage = 64;

int exit_code(IpmStatus s) {
  switch (s) {
    case IpmStatus::Converged: return kExitOk;
    case IpmStatus::IterLimit: return kExitIterLimit;
    case IpmStatus::LinearSolverFailure: return kExitLinearFailure;
  }
  return kExitError;
}

struct SolverFlags {
  std::string strategy = "refactorize";
  double mu_init = 0.1;
  double tol = 1e-6;
  int max_iter = -1;
  bool freeze_scaling = false;
  std::string format = "json";
  std::string out;

  void attach(CLI::App& cmd, bool with_solver) {
    if (with_solver) {
      cmd.add_option("--mu-init", mu_init, "initial barrier parameter")->check(CLI::PositiveNumber);
      cmd.add_option("--tol", tol, "scaled KKT residual tolerance")->check(CLI::PositiveNumber);
      cmd.add_option("--max-iter", max_iter, "cap on Newton steps")->check(CLI::NonNegativeNumber);
    }
    cmd.add_option("--strategy", strategy, "refactorize | factorize-each")
        ->check(CLI::IsMember({"refactorize", "factorize-each"}));
    cmd.add_flag("--freeze-scaling", freeze_scaling, "reuse the first system's equilibration");
    cmd.add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
    cmd.add_option("--out", out, "output directory");
  }

  [[nodiscard]] Strategy strategy_enum() const {
    return strategy == "factorize-each" ? Strategy::FactorizeEach : Strategy::RefactorizeSequence;
  }

  [[nodiscard]] IpmOptions ipm(Strategy s) const {
    IpmOptions o;
    o.mu_init = mu_init;
    o.kkt_tol = tol;
    if (max_iter >= 0) o.max_iterations = max_iter;
    o.linear.strategy = s;
    o.linear.factor.freeze_scaling = freeze_scaling;
    return o;
  }
};

fs::path out_dir(const SolverFlags& f) {
  fs::path d = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

struct SolveRun {
  harness::RunReport report;
  IpmStatus status;
};

/// One solve with JSON-lines/CSV iteration logs, optional KKT dumps and a phase chart.
SolveRun run_solve(const std::string& path, const SolverFlags& flags, Strategy strategy, int dump_kkt,
                   bool write_files) {
  const auto c = read_case(path);
  const auto nlp = to_compact(assemble_nlp(c));
  const std::string tag = c.name + "_" + to_string(strategy);

  std::ofstream jsonl;
  std::ofstream csv;
  fs::path dir;
  if (write_files) {
    dir = out_dir(flags);
    jsonl.open(dir / (tag + ".jsonl"));
    csv.open(dir / (tag + ".csv"));
    if (!jsonl || !csv) throw IoError("cannot write logs under " + dir.string());
    csv << harness::iteration_csv_header() << '\n';
  }
  int dumped = 0;
  auto observer = [&](const IterationRecord& rec, const KktSystem& kkt) {
    if (!write_files) return;
    jsonl << harness::to_json(rec).dump() << '\n';
    csv << harness::to_csv(rec) << '\n';
    if (dumped < dump_kkt) harness::dump_kkt(dir / "kkt", ++dumped, kkt);
  };
  auto result = solve_acopf(nlp, flags.ipm(strategy), observer);
  auto report = harness::make_run_report(c.name, strategy, result);
  if (write_files) {
    jsonl << harness::to_json(report).dump() << '\n';
    write_text(dir / (tag + "_phases.svg"),
               harness::svg_phase_chart(report.phases, c.name + " (" + to_string(strategy) + ")"));
  }
  return {std::move(report), result.status};
}

void print_run(const harness::RunReport& r, const std::string& format) {
  if (format == "csv") {
    std::cout << harness::run_csv_header() << '\n' << harness::to_csv(r) << '\n';
  } else {
    std::cout << harness::to_json(r).dump(2) << '\n';
  }
}

int cmd_solve(const std::string& path, const SolverFlags& flags, int dump_kkt) {
  auto run = run_solve(path, flags, flags.strategy_enum(), dump_kkt, true);
  std::cerr << harness::format_run(run.report);
  print_run(run.report, flags.format);
  return exit_code(run.status);
}

struct BenchOutcome {
  harness::BenchmarkPair pair;
  int code = kExitOk;
};

BenchOutcome bench_one(const std::string& path, const SolverFlags& flags) {
  auto base = run_solve(path, flags, Strategy::FactorizeEach, 0, false);
  auto cand = run_solve(path, flags, Strategy::RefactorizeSequence, 0, false);
  BenchOutcome out{harness::make_benchmark_pair(base.report, cand.report), kExitOk};
  out.code = std::max(exit_code(base.status), exit_code(cand.status));
  return out;
}

int cmd_bench(const std::vector<std::string>& paths, const SolverFlags& flags, bool parallel_cases) {
  std::vector<BenchOutcome> outcomes;
  if (parallel_cases && paths.size() > 1) {
    std::vector<std::future<BenchOutcome>> jobs;
    for (const auto& p : paths) jobs.push_back(std::async(std::launch::async, bench_one, p, std::cref(flags)));
    for (auto& j : jobs) outcomes.push_back(j.get());
  } else {
    for (const auto& p : paths) outcomes.push_back(bench_one(p, flags));
  }
  const auto dir = out_dir(flags);
  int code = kExitOk;
  if (flags.format == "csv") {
    std::cout << "role," << harness::run_csv_header() << '\n';
  }
  for (const auto& o : outcomes) {
    const auto& name = o.pair.candidate.case_name;
    std::cerr << harness::format_benchmark(o.pair);
    write_text(dir / (name + "_bench.json"), harness::to_json(o.pair).dump(2) + "\n");
    write_text(dir / (name + "_bench.svg"), harness::svg_benchmark_chart(o.pair));
    if (flags.format == "csv") {
      std::cout << "baseline," << harness::to_csv(o.pair.baseline) << '\n'
                << "candidate," << harness::to_csv(o.pair.candidate) << '\n';
    } else {
      std::cout << harness::to_json(o.pair).dump() << '\n';
    }
    code = std::max(code, o.code);
  }
  return code;
}

int cmd_replay(const std::string& matrix_dir, const std::string& rhs_dir, const SolverFlags& flags) {
  auto seq = harness::load_replay(matrix_dir, rhs_dir.empty() ? matrix_dir : rhs_dir);
  SequenceOptions opts;
  opts.strategy = flags.strategy_enum();
  opts.factor.freeze_scaling = flags.freeze_scaling;
  auto rows = harness::replay(seq, opts);
  if (flags.format == "csv") {
    std::cout << harness::replay_csv_header() << '\n';
    for (const auto& r : rows) std::cout << harness::to_csv(r) << '\n';
  } else {
    for (const auto& r : rows) std::cout << harness::to_json(r).dump() << '\n';
  }
  return kExitOk;
}

int cmd_report(const std::string& log, const SolverFlags& flags) {
  auto b = harness::aggregate_log(fs::path(log));
  std::cout << harness::format_breakdown(b);
  if (!flags.out.empty()) {
    write_text(out_dir(flags) / (fs::path(log).stem().string() + "_report.svg"),
               harness::svg_phase_chart(b, fs::path(log).filename().string()));
  }
  return kExitOk;
}

int cmd_summary(const std::string& path, const SolverFlags& flags) {
  auto c = read_case(path);
  auto s = case_summary(c);
  if (flags.format == "csv") {
    std::cout << "case,buses,generators,branches,base_mva\n"
              << harness::csv_quote(c.name) << ',' << s.n_bus << ',' << s.n_gen << ',' << s.n_branch << ','
              << harness::csv_number(s.base_mva) << '\n';
  } else {
    harness::json j = {{"case", c.name},
                       {"buses", s.n_bus},
                       {"generators", s.n_gen},
                       {"branches", s.n_branch},
                       {"base_mva", s.base_mva},
                       {"dropped_generators", c.dropped_gens.size()},
                       {"dropped_branches", c.dropped_branches.size()}};
    std::cout << j.dump(2) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse ACOPF interior-point solver with frozen-pattern LU refactorization"};
  app.require_subcommand(1);

  SolverFlags solve_flags, bench_flags, replay_flags, report_flags, summary_flags;

  std::string solve_case;
  int dump_kkt = 0;
  auto* solve = app.add_subcommand("solve", "solve one case and log every Newton step");
  solve->add_option("case", solve_case, "MATPOWER .m file")->required();
  solve->add_option("--dump-kkt", dump_kkt, "write the first N KKT systems as Matrix Market")
      ->check(CLI::NonNegativeNumber);
  solve_flags.attach(*solve, true);

  std::vector<std::string> bench_cases;
  bool parallel_cases = false;
  auto* bench = app.add_subcommand("bench", "compare factorize-each against refactorize");
  bench->add_option("cases", bench_cases, "MATPOWER .m files")->required();
  bench->add_flag("--parallel-cases", parallel_cases, "run distinct cases concurrently");
  bench_flags.attach(*bench, true);

  std::string matrix_dir, rhs_dir;
  auto* replay = app.add_subcommand("replay", "solve a dumped KKT sequence");
  replay->add_option("matrices", matrix_dir, "directory of matrix .mtx files")->required();
  replay->add_option("rhs", rhs_dir, "directory of right-hand-side .mtx files (default: same)");
  replay_flags.attach(*replay, false);

  std::string log_path;
  auto* report = app.add_subcommand("report", "phase breakdown of a JSON-lines log");
  report->add_option("log", log_path, "JSON-lines iteration log")->required();
  report_flags.attach(*report, false);

  std::string summary_case;
  auto* summary = app.add_subcommand("summary", "bus, generator and branch counts of a case");
  summary->add_option("case", summary_case, "MATPOWER .m file")->required();
  summary_flags.attach(*summary, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*solve) return cmd_solve(solve_case, solve_flags, dump_kkt);
    if (*bench) return cmd_bench(bench_cases, bench_flags, parallel_cases);
    if (*replay) return cmd_replay(matrix_dir, rhs_dir, replay_flags);
    if (*report) return cmd_report(log_path, report_flags);
    if (*summary) return cmd_summary(summary_case, summary_flags);
  } catch (const SingularMatrix& e) {
    std::cerr << "gridkkt: linear solver failure: " << e.what() << '\n';
    return kExitLinearFailure;
  } catch (const std::exception& e) {
    std::cerr << "gridkkt: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}
