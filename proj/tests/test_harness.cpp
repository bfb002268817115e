#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gridkkt/harness.hpp"
#include "kkt_stream.hpp"
#include "oracles.hpp"

using namespace gridkkt;
using namespace gridkkt::harness;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory, removed when the test ends.
class Scratch {
 public:
  Scratch() {
    static std::mt19937_64 rng(std::random_device{}());
    dir_ = fs::temp_directory_path() / ("gridkkt_test_" + std::to_string(rng()));
    fs::create_directories(dir_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;
  [[nodiscard]] const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
};

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const std::string cmd =
      std::string("\"") + GRIDKKT_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = oracle::read_file(out);
  r.err = oracle::read_file(err);
  return r;
}

std::string case_path(const std::string& name) { return (oracle::data_dir() / (name + ".m")).string(); }

const stream::RecordedSolve& case9_run() {
  static const auto rec = stream::record("case9");
  return rec;
}

PhaseBreakdown breakdown(double f, double t, double m, double o) {
  PhaseBreakdown b;
  b.ms = {f, t, m, o};
  return b;
}

std::string iteration_line(std::int64_t factor, std::int64_t solve, std::int64_t eval, std::int64_t other) {
  IterationRecord r;
  r.k = 1;
  r.phases.factorization = factor;
  r.phases.triangular_solve = solve;
  r.phases.model_eval = eval;
  r.phases.other = other;
  r.total_ns = factor + solve + eval + other;
  return to_json(r).dump() + "\n";
}

/// Drops every field that depends on the wall clock.
json mask_timing(json j) {
  for (const char* key : {"total_s", "total_ns", "phases", "phases_ns", "factorization_ms_per_iteration",
                          "factor_ms", "solve_ms"}) {
    j.erase(key);
  }
  return j;
}

}  // namespace

TEST(PhaseBreakdown, PercentagesSumToHundred) {
  auto p = breakdown(3.7, 1.1, 8.25, 0.4).percentages();
  EXPECT_NEAR(p[0] + p[1] + p[2] + p[3], 100.0, 1e-9);
}

TEST(PhaseBreakdown, TableEchoesSharesAndLinearSolverTotal) {
  auto b = breakdown(48.0, 12.0, 30.0, 10.0);
  EXPECT_DOUBLE_EQ(b.linear_solver_share(), 60.0);
  const auto table = format_breakdown(b);
  for (const char* share : {"48.0%", "12.0%", "30.0%", "10.0%", "60.0%"}) {
    EXPECT_NE(table.find(share), std::string::npos) << share << "\n" << table;
  }
}

TEST(PhaseBreakdown, SinglePhaseTakesEverything) {
  auto p = breakdown(0.0, 0.0, 7.0, 0.0).percentages();
  EXPECT_EQ(p[2], 100.0);
  EXPECT_EQ(p[0] + p[1] + p[3], 0.0);
}

TEST(PhaseBreakdown, EmptyBreakdownHasNoShares) {
  auto p = PhaseBreakdown{}.percentages();
  EXPECT_EQ(p[0] + p[1] + p[2] + p[3], 0.0);
}

TEST(AggregateLog, SumsPhasesAndFoldsAssemblyIntoOther) {
  std::stringstream log;
  log << iteration_line(4'000'000, 1'000'000, 2'000'000, 0);
  log << "{\"type\":\"run\"}\n\n";
  log << iteration_line(4'000'000, 1'000'000, 2'000'000, 1'000'000);
  auto b = aggregate_log(log);
  EXPECT_DOUBLE_EQ(b.ms[0], 8.0);
  EXPECT_DOUBLE_EQ(b.ms[1], 2.0);
  EXPECT_DOUBLE_EQ(b.ms[2], 4.0);
  EXPECT_DOUBLE_EQ(b.ms[3], 1.0);
}

TEST(AggregateLog, NoIterationsIsAnError) {
  std::stringstream log("{\"type\":\"run\"}\n");
  try {
    (void)aggregate_log(log, "empty.jsonl");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no iterations in log"), std::string::npos);
  }
}

TEST(AggregateLog, UnparsableLineNamesLocation) {
  std::stringstream log(iteration_line(1, 1, 1, 1) + "{not json\n");
  try {
    (void)aggregate_log(log, "broken.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.jsonl:2"), std::string::npos);
  }
}

TEST(RunReport, PhasesCoverWholeSolve) {
  const auto& res = case9_run().result;
  auto rep = make_run_report("case9", Strategy::RefactorizeSequence, res);
  EXPECT_NEAR(rep.phases.total_ms(), to_ms(res.total_ns), 1e-9 * to_ms(res.total_ns));
  auto p = rep.phases.percentages();
  EXPECT_NEAR(p[0] + p[1] + p[2] + p[3], 100.0, 0.1);
  EXPECT_EQ(rep.iterations, static_cast<int>(res.log.size()));
}

TEST(TimingIntegrity, PhaseSumNeverExceedsIterationTotal) {
  for (const auto& rec : case9_run().records) {
    EXPECT_LE(rec.phases.sum() - rec.phases.other, rec.total_ns);
    EXPECT_GE(rec.total_ns, 0);
  }
  const auto& res = case9_run().result;
  std::int64_t iter_total = 0;
  for (const auto& rec : res.log) iter_total += rec.total_ns;
  EXPECT_LE(iter_total, res.total_ns);
}

TEST(BenchmarkPair, RejectsMismatchedRoles) {
  const auto& res = case9_run().result;
  auto each = make_run_report("case9", Strategy::FactorizeEach, res);
  auto refac = make_run_report("case9", Strategy::RefactorizeSequence, res);
  EXPECT_NO_THROW((void)make_benchmark_pair(each, refac));
  EXPECT_THROW((void)make_benchmark_pair(refac, each), Error);
  auto other = make_run_report("case14", Strategy::RefactorizeSequence, res);
  EXPECT_THROW((void)make_benchmark_pair(each, other), Error);
}

TEST(Schemas, EveryRecordTypeValidates) {
  const auto& run = case9_run();
  auto iteration = oracle::load_schema("iteration.schema.json");
  for (const auto& rec : run.records) {
    auto err = iteration.validate(to_json(rec));
    ASSERT_TRUE(err.empty()) << err;
  }
  auto refac = make_run_report("case9", Strategy::RefactorizeSequence, run.result);
  auto each = make_run_report("case9", Strategy::FactorizeEach, run.result);
  auto err = oracle::load_schema("run.schema.json").validate(to_json(refac));
  EXPECT_TRUE(err.empty()) << err;
  err = oracle::load_schema("benchmark.schema.json").validate(to_json(make_benchmark_pair(each, refac)));
  EXPECT_TRUE(err.empty()) << err;

  std::vector<CscMatrix> mats;
  std::vector<std::vector<double>> rhs;
  for (std::size_t k = 0; k < 3; ++k) {
    mats.push_back(run.systems[k].matrix);
    rhs.push_back(run.systems[k].rhs);
  }
  ReplaySequence seq{{"a.mtx", "b.mtx", "c.mtx"}, mats, rhs};
  auto replay_schema = oracle::load_schema("replay.schema.json");
  for (const auto& row : replay(seq, SequenceOptions{})) {
    err = replay_schema.validate(to_json(row));
    EXPECT_TRUE(err.empty()) << err;
  }
}

TEST(Schemas, ValidatorRejectsUnknownAndMissingFields) {
  auto schema = oracle::load_schema("run.schema.json");
  auto doc = to_json(make_run_report("case9", Strategy::RefactorizeSequence, case9_run().result));
  auto extra = doc;
  extra["surprise"] = 1;
  EXPECT_FALSE(schema.validate(extra).empty());
  auto missing = doc;
  missing.erase("objective");
  EXPECT_FALSE(schema.validate(missing).empty());
  auto version = doc;
  version["schema_version"] = "0.9";
  EXPECT_FALSE(schema.validate(version).empty());
}

TEST(Csv, RowsMatchHeaders) {
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  const auto& run = case9_run();
  EXPECT_EQ(count(to_csv(run.records.front())), count(iteration_csv_header()));
  auto rep = make_run_report("case9", Strategy::RefactorizeSequence, run.result);
  EXPECT_EQ(count(to_csv(rep)), count(run_csv_header()));
  EXPECT_EQ(csv_quote("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_quote("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_quote("plain"), "plain");
}

TEST(Determinism, RepeatedRunsDifferOnlyInTiming) {
  auto a = stream::record("case9");
  auto b = stream::record("case9");
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(mask_timing(to_json(a.records[k])), mask_timing(to_json(b.records[k]))) << k;
  }
  auto ra = make_run_report("case9", Strategy::RefactorizeSequence, a.result);
  auto rb = make_run_report("case9", Strategy::RefactorizeSequence, b.result);
  EXPECT_EQ(mask_timing(to_json(ra)), mask_timing(to_json(rb)));
}

TEST(Svg, ChartsAreWellFormedAndEscaped) {
  auto svg = svg_phase_chart(breakdown(48.0, 12.0, 30.0, 10.0), "a<b & c");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
  for (auto name : PhaseBreakdown::kNames) EXPECT_NE(svg.find(std::string(name)), std::string::npos);
  const auto& res = case9_run().result;
  auto pair = make_benchmark_pair(make_run_report("case9", Strategy::FactorizeEach, res),
                                  make_run_report("case9", Strategy::RefactorizeSequence, res));
  auto bench = svg_benchmark_chart(pair);
  EXPECT_EQ(bench.rfind("<svg", 0), 0u);
  EXPECT_NE(bench.find("</svg>"), std::string::npos);
}

TEST(Replay, DumpedSequenceRoundTrips) {
  Scratch tmp;
  const auto& run = case9_run();
  for (int k = 1; k <= 4; ++k) dump_kkt(tmp.path(), k, run.systems[k - 1]);
  auto seq = load_replay(tmp.path(), tmp.path());
  ASSERT_EQ(seq.matrices.size(), 4u);
  EXPECT_EQ(seq.names.front(), "kkt_0001.mtx");
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_TRUE(seq.matrices[k].same_pattern(run.systems[k].matrix));
    EXPECT_EQ(seq.matrices[k].values, run.systems[k].matrix.values);
    EXPECT_EQ(seq.rhs[k], run.systems[k].rhs);
  }
  auto rows = replay(seq, SequenceOptions{});
  for (const auto& r : rows) EXPECT_LT(r.residual, 1e-10) << r.matrix;
  EXPECT_TRUE(rows.front().step.analyzed);
  EXPECT_TRUE(rows.back().step.refactorized);
}

TEST(Replay, MixedPatternNamesFirstOffender) {
  Scratch tmp;
  const auto& run = case9_run();
  for (int k = 1; k <= 4; ++k) dump_kkt(tmp.path(), k, run.systems[k - 1]);
  const auto n = run.systems.front().matrix.n_rows;
  mm::write_matrix(tmp.path() / "kkt_0003.mtx", identity_csc(n), mm::Symmetry::General);
  mm::write_matrix(tmp.path() / "kkt_0004.mtx", identity_csc(n), mm::Symmetry::General);
  try {
    (void)load_replay(tmp.path(), tmp.path());
    FAIL() << "expected PatternMismatch";
  } catch (const PatternMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("kkt_0003.mtx"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("kkt_0004.mtx"), std::string::npos) << msg;
  }
}

TEST(Replay, CountMismatchAndMissingDirectory) {
  Scratch tmp;
  dump_kkt(tmp.path(), 1, case9_run().systems.front());
  fs::remove(tmp.path() / "rhs_0001.mtx");
  EXPECT_THROW((void)load_replay(tmp.path(), tmp.path()), DimensionMismatch);
  EXPECT_THROW((void)load_replay(tmp.path() / "absent", tmp.path()), IoError);
}

TEST(Cli, SummaryReportsCounts) {
  Scratch tmp;
  auto r = run_cli("summary \"" + case_path("case30") + "\"", tmp.path());
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j.at("buses"), 30);
  EXPECT_EQ(j.at("generators"), 6);
  EXPECT_EQ(j.at("branches"), 41);
}

TEST(Cli, UsageErrorsExitWith64) {
  Scratch tmp;
  EXPECT_EQ(run_cli("solve --no-such-flag \"" + case_path("case9") + "\"", tmp.path()).code, 64);
  EXPECT_EQ(run_cli("", tmp.path()).code, 64);
  EXPECT_EQ(run_cli("solve \"" + case_path("case9") + "\" --strategy sideways", tmp.path()).code, 64);
}

TEST(Cli, MissingCaseIsAnIoFailure) {
  Scratch tmp;
  auto r = run_cli("solve /nonexistent/case_missing.m --out \"" + tmp.path().string() + "\"", tmp.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/case_missing.m"), std::string::npos) << r.err;
}

TEST(Cli, IterationLimitExitsWith2) {
  Scratch tmp;
  auto r = run_cli("solve \"" + case_path("case9") + "\" --max-iter 3 --out \"" + tmp.path().string() + "\"",
                   tmp.path());
  EXPECT_EQ(r.code, 2) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j.at("status"), "IterLimit");
  EXPECT_EQ(j.at("iterations"), 3);
}

TEST(Cli, SolveWritesLogsAndDumps) {
  Scratch tmp;
  auto r = run_cli("solve \"" + case_path("case9") + "\" --dump-kkt=3 --out \"" + tmp.path().string() + "\"",
                   tmp.path());
  ASSERT_EQ(r.code, 0) << r.err;
  auto run_doc = json::parse(r.out);
  auto err = oracle::load_schema("run.schema.json").validate(run_doc);
  EXPECT_TRUE(err.empty()) << err;

  const auto kdir = tmp.path() / "kkt";
  std::vector<fs::path> mats;
  for (const auto& e : fs::directory_iterator(kdir)) {
    if (e.path().filename().string().rfind("kkt_", 0) == 0) mats.push_back(e.path());
  }
  ASSERT_EQ(mats.size(), 3u);
  auto first = mm::read_matrix(mats.front());
  for (const auto& p : mats) EXPECT_TRUE(mm::read_matrix(p).same_pattern(first)) << p;

  const auto stem = std::string("case9_") + to_string(Strategy::RefactorizeSequence);
  std::ifstream jsonl(tmp.path() / (stem + ".jsonl"));
  ASSERT_TRUE(jsonl.good());
  auto iteration = oracle::load_schema("iteration.schema.json");
  auto run_schema = oracle::load_schema("run.schema.json");
  std::string line;
  int iterations = 0;
  while (std::getline(jsonl, line)) {
    auto j = json::parse(line);
    auto e = j.at("type") == "iteration" ? iteration.validate(j) : run_schema.validate(j);
    EXPECT_TRUE(e.empty()) << e;
    iterations += j.at("type") == "iteration";
  }
  EXPECT_EQ(iterations, run_doc.at("iterations").get<int>());
  EXPECT_TRUE(fs::exists(tmp.path() / (stem + ".csv")));
  EXPECT_TRUE(fs::exists(tmp.path() / (stem + "_phases.svg")));

  auto rep = run_cli("report \"" + (tmp.path() / (stem + ".jsonl")).string() + "\"", tmp.path());
  EXPECT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("linear solver"), std::string::npos);

  auto rp = run_cli("replay \"" + kdir.string() + "\"", tmp.path());
  ASSERT_EQ(rp.code, 0) << rp.err;
  std::istringstream rows(rp.out);
  auto replay_schema = oracle::load_schema("replay.schema.json");
  int n_rows = 0;
  while (std::getline(rows, line)) {
    auto e = replay_schema.validate(json::parse(line));
    EXPECT_TRUE(e.empty()) << e;
    ++n_rows;
  }
  EXPECT_EQ(n_rows, 3);
}

TEST(Cli, ReportOnEmptyLogFails) {
  Scratch tmp;
  std::ofstream(tmp.path() / "empty.jsonl") << "\n";
  auto r = run_cli("report \"" + (tmp.path() / "empty.jsonl").string() + "\"", tmp.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no iterations in log"), std::string::npos) << r.err;
}

TEST(Cli, BenchOnOneIterationRun) {
  Scratch tmp;
  auto r = run_cli("bench \"" + case_path("case9") + "\" --max-iter 1 --out \"" + tmp.path().string() + "\"",
                   tmp.path());
  EXPECT_EQ(r.code, 2) << r.err;
  auto j = json::parse(r.out);
  auto err = oracle::load_schema("benchmark.schema.json").validate(j);
  EXPECT_TRUE(err.empty()) << err;
  EXPECT_EQ(j.at("baseline").at("iterations"), 1);
  EXPECT_EQ(j.at("candidate").at("iterations"), 1);
  EXPECT_EQ(j.at("candidate").at("linear_solver").at("refactorizations"), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "case9_bench.json"));
  EXPECT_TRUE(fs::exists(tmp.path() / "case9_bench.svg"));
}
