#ifndef GRIDKKT_GRID_MODEL_HPP
#define GRIDKKT_GRID_MODEL_HPP

// MATPOWER case ingestion and the pi-model network admittances.
//
// All quantities are converted to per unit on base_mva exactly once, in
// parse_matpower(); angles are stored in radians. Generator cost coefficients stay
// in MATPOWER units ($/h per MW^2, $/h per MW, $/h).

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gridkkt/errors.hpp"
#include "gridkkt/sparse_core.hpp"

namespace gridkkt {

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

struct BusRecord {
  int id = 0;
  BusType bus_type = BusType::PQ;
  double p_demand = 0.0;
  double q_demand = 0.0;
  double g_shunt = 0.0;
  double b_shunt = 0.0;
  double v_mag_init = 1.0;
  double v_ang_init = 0.0;
  double v_min = 0.9;
  double v_max = 1.1;
  double base_kv = 0.0;

  friend bool operator==(const BusRecord&, const BusRecord&) = default;
};

struct GenRecord {
  int bus = 0;
  double p_init = 0.0;
  double q_init = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_set = 1.0;
  double cost_c2 = 0.0;
  double cost_c1 = 0.0;
  double cost_c0 = 0.0;
  bool status = true;

  friend bool operator==(const GenRecord&, const GenRecord&) = default;
};

struct BranchRecord {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap_ratio = 0.0;  ///< 0 means 1.0
  double phase_shift = 0.0;
  double rate_a = 0.0;  ///< 0 means unlimited
  bool status = true;

  [[nodiscard]] double effective_tap() const { return tap_ratio == 0.0 ? 1.0 : tap_ratio; }

  friend bool operator==(const BranchRecord&, const BranchRecord&) = default;
};

/// Columns skipped while parsing, per block (0-based column indices).
struct ParseReport {
  std::map<std::string, std::vector<int>> ignored_columns;
  int ignored_gencost_rows = 0;

  friend bool operator==(const ParseReport&, const ParseReport&) = default;
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<BusRecord> buses;
  std::vector<GenRecord> gens;
  std::vector<BranchRecord> branches;
  /// Out-of-service records removed at parse time, kept for provenance.
  std::vector<GenRecord> dropped_gens;
  std::vector<BranchRecord> dropped_branches;
  std::unordered_map<int, Index> bus_index;  ///< external id -> 0..n_bus-1
  ParseReport report;

  [[nodiscard]] Index index_of(int bus_id) const {
    auto it = bus_index.find(bus_id);
    if (it == bus_index.end()) throw ModelError("unknown bus id " + std::to_string(bus_id));
    return it->second;
  }

  [[nodiscard]] std::optional<Index> slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
      if (buses[i].bus_type == BusType::Slack) return static_cast<Index>(i);
    }
    return std::nullopt;
  }

  bool operator==(const GridCase& o) const {
    return name == o.name && base_mva == o.base_mva && buses == o.buses && gens == o.gens &&
           branches == o.branches && dropped_gens == o.dropped_gens &&
           dropped_branches == o.dropped_branches && bus_index == o.bus_index;
  }
};

struct CaseSummary {
  Index n_bus = 0;
  Index n_gen = 0;
  Index n_branch = 0;
  double base_mva = 0.0;

  friend bool operator==(const CaseSummary&, const CaseSummary&) = default;
};

inline CaseSummary case_summary(const GridCase& c) {
  return {static_cast<Index>(c.buses.size()), static_cast<Index>(c.gens.size()),
          static_cast<Index>(c.branches.size()), c.base_mva};
}

namespace detail {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

inline std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_string = false;
  for (char ch : text) {
    if (ch == '\n') {
      in_comment = false;
      in_string = false;
      out.push_back(ch);
      continue;
    }
    if (in_comment) continue;
    if (ch == '\'') in_string = !in_string;
    if (ch == '%' && !in_string) {
      in_comment = true;
      continue;
    }
    out.push_back(ch);
  }
  return out;
}

using Rows = std::vector<std::vector<double>>;

/// Finds `mpc.<name> = [ ... ];` and returns its numeric rows.
inline std::optional<Rows> matrix_block(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t after = pos + key.size();
    std::size_t eq = text.find_first_not_of(" \t", after);
    if (eq == std::string::npos || text[eq] != '=') {
      pos = after;
      continue;
    }
    std::size_t open = text.find_first_not_of(" \t\r\n", eq + 1);
    if (open == std::string::npos || text[open] != '[') {
      pos = after;
      continue;
    }
    std::size_t close = text.find(']', open);
    if (close == std::string::npos) throw ParseError("mpc." + name + ": unterminated matrix");
    std::string body = text.substr(open + 1, close - open - 1);
    Rows rows;
    std::string row_text;
    auto flush = [&]() {
      std::replace(row_text.begin(), row_text.end(), ',', ' ');
      std::istringstream rs(row_text);
      std::vector<double> row;
      std::string tok;
      while (rs >> tok) {
        try {
          std::size_t used = 0;
          double v;
          if (tok == "Inf" || tok == "inf") {
            v = HUGE_VAL;
          } else if (tok == "-Inf" || tok == "-inf") {
            v = -HUGE_VAL;
          } else {
            v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
          }
          row.push_back(v);
        } catch (const std::exception&) {
          throw ParseError("mpc." + name + ": malformed value '" + tok + "' in row " +
                           std::to_string(rows.size() + 1));
        }
      }
      if (!row.empty()) rows.push_back(std::move(row));
      row_text.clear();
    };
    for (char ch : body) {
      if (ch == ';' || ch == '\n') {
        flush();
      } else {
        row_text.push_back(ch);
      }
    }
    flush();
    return rows;
  }
  return std::nullopt;
}

inline std::optional<double> scalar_field(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = text.find(key);
  while (pos != std::string::npos) {
    std::size_t eq = text.find_first_not_of(" \t", pos + key.size());
    if (eq != std::string::npos && text[eq] == '=') {
      std::istringstream vs(text.substr(eq + 1, text.find(';', eq) - eq - 1));
      double v;
      if (vs >> v) return v;
      throw ParseError("mpc." + name + ": malformed scalar");
    }
    pos = text.find(key, pos + key.size());
  }
  return std::nullopt;
}

inline void require_width(const Rows& rows, std::size_t width, const std::string& block) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() < width) {
      throw ParseError("mpc." + block + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(rows[r].size()) + " columns, need at least " + std::to_string(width));
    }
  }
}

inline std::vector<int> ignored(const Rows& rows, const std::vector<int>& used) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  std::vector<int> out;
  for (int c = 0; c < static_cast<int>(width); ++c) {
    if (std::find(used.begin(), used.end(), c) == used.end()) out.push_back(c);
  }
  return out;
}

inline int as_id(double v, const std::string& what) {
  if (v != std::floor(v)) throw ParseError(what + ": expected an integer, got " + std::to_string(v));
  return static_cast<int>(v);
}

/// Physical value w with fl(w / base) == v, so that per-unit values survive a
/// write/parse cycle unchanged.
inline double invert_scale(double v, double base) {
  if (!std::isfinite(v)) return v;
  double w = v * base;
  if (w / base == v) return w;
  double up = w, down = w;
  for (int k = 0; k < 4; ++k) {
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
    if (up / base == v) return up;
    if (down / base == v) return down;
  }
  return w;
}

/// Degrees d with fl(d * pi/180) == v.
inline double invert_angle(double v) {
  double w = v / kDegToRad;
  if (w * kDegToRad == v) return w;
  double up = w, down = w;
  for (int k = 0; k < 4; ++k) {
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
    if (up * kDegToRad == v) return up;
    if (down * kDegToRad == v) return down;
  }
  return w;
}

}  // namespace detail

/// Parses the MATPOWER subset used by the ACOPF formulation.
inline GridCase parse_matpower(std::string_view source, std::string name = "case") {
  using namespace detail;
  const std::string text = strip_comments(source);
  GridCase c;
  c.name = std::move(name);

  auto base = scalar_field(text, "baseMVA");
  if (!base) throw ParseError("missing required block mpc.baseMVA");
  if (!(*base > 0.0)) throw ParseError("mpc.baseMVA must be positive");
  c.base_mva = *base;
  const double mva = c.base_mva;

  auto bus = matrix_block(text, "bus");
  auto gen = matrix_block(text, "gen");
  auto branch = matrix_block(text, "branch");
  auto gencost = matrix_block(text, "gencost");
  if (!bus) throw ParseError("missing required block mpc.bus");
  if (!gen) throw ParseError("missing required block mpc.gen");
  if (!branch) throw ParseError("missing required block mpc.branch");
  if (!gencost) throw ParseError("missing required block mpc.gencost");

  require_width(*bus, 13, "bus");
  require_width(*gen, 10, "gen");
  require_width(*branch, 11, "branch");

  c.report.ignored_columns["bus"] = ignored(*bus, {0, 1, 2, 3, 4, 5, 7, 8, 9, 11, 12});
  c.report.ignored_columns["gen"] = ignored(*gen, {0, 1, 2, 3, 4, 5, 7, 8, 9});
  c.report.ignored_columns["branch"] = ignored(*branch, {0, 1, 2, 3, 4, 5, 8, 9, 10});

  int slack_count = 0;
  for (const auto& r : *bus) {
    BusRecord b;
    b.id = as_id(r[0], "bus id");
    const int type = as_id(r[1], "bus type");
    if (type < 1 || type > 3) {
      throw ParseError("bus " + std::to_string(b.id) + ": unsupported bus type " + std::to_string(type));
    }
    b.bus_type = static_cast<BusType>(type);
    slack_count += (b.bus_type == BusType::Slack);
    b.p_demand = r[2] / mva;
    b.q_demand = r[3] / mva;
    b.g_shunt = r[4] / mva;
    b.b_shunt = r[5] / mva;
    b.v_mag_init = r[7];
    b.v_ang_init = r[8] * kDegToRad;
    b.base_kv = r[9];
    b.v_max = r[11];
    b.v_min = r[12];
    if (!(b.v_min > 0.0) || b.v_min > b.v_max) {
      throw ParseError("bus " + std::to_string(b.id) + ": need 0 < Vmin <= Vmax");
    }
    if (!c.bus_index.emplace(b.id, static_cast<Index>(c.buses.size())).second) {
      throw ParseError("duplicate bus id " + std::to_string(b.id));
    }
    c.buses.push_back(b);
  }
  if (slack_count > 1) throw ParseError("more than one slack bus");

  if (gencost->size() < gen->size()) {
    throw ParseError("mpc.gencost has " + std::to_string(gencost->size()) + " rows for " +
                     std::to_string(gen->size()) + " generators");
  }
  c.report.ignored_gencost_rows = static_cast<int>(gencost->size() - gen->size());
  for (std::size_t k = 0; k < gen->size(); ++k) {
    const auto& r = (*gen)[k];
    const auto& cost = (*gencost)[k];
    GenRecord g;
    g.bus = as_id(r[0], "gen bus");
    if (!c.bus_index.contains(g.bus)) {
      throw ParseError("gen " + std::to_string(k + 1) + " references unknown bus " + std::to_string(g.bus));
    }
    g.p_init = r[1] / mva;
    g.q_init = r[2] / mva;
    g.q_max = r[3] / mva;
    g.q_min = r[4] / mva;
    g.v_set = r[5];
    g.status = r[7] > 0.0;
    g.p_max = r[8] / mva;
    g.p_min = r[9] / mva;
    if (g.p_min > g.p_max || g.q_min > g.q_max) {
      throw ParseError("gen " + std::to_string(k + 1) + ": lower output bound exceeds upper bound");
    }
    if (cost.size() < 4) throw ParseError("mpc.gencost: row " + std::to_string(k + 1) + " is too short");
    const int model = as_id(cost[0], "gencost model");
    if (model != 2) {
      throw ParseError("mpc.gencost row " + std::to_string(k + 1) +
                       ": only polynomial cost (model 2) is supported; piecewise-linear costs are rejected");
    }
    const int ncost = as_id(cost[3], "gencost n");
    if (ncost < 0 || ncost > 3) {
      throw ParseError("mpc.gencost row " + std::to_string(k + 1) + ": polynomial degree " +
                       std::to_string(ncost - 1) + " exceeds 2");
    }
    if (static_cast<int>(cost.size()) < 4 + ncost) {
      throw ParseError("mpc.gencost row " + std::to_string(k + 1) + ": missing coefficients");
    }
    double coeff[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
    for (int t = 0; t < ncost; ++t) coeff[ncost - 1 - t] = cost[4 + t];
    g.cost_c0 = coeff[0];
    g.cost_c1 = coeff[1];
    g.cost_c2 = coeff[2];
    (g.status ? c.gens : c.dropped_gens).push_back(g);
  }

  for (std::size_t k = 0; k < branch->size(); ++k) {
    const auto& r = (*branch)[k];
    BranchRecord br;
    br.from_bus = as_id(r[0], "branch from bus");
    br.to_bus = as_id(r[1], "branch to bus");
    if (!c.bus_index.contains(br.from_bus) || !c.bus_index.contains(br.to_bus)) {
      throw ParseError("branch " + std::to_string(k + 1) + " references an unknown bus");
    }
    if (br.from_bus == br.to_bus) throw ParseError("branch " + std::to_string(k + 1) + " is a self loop");
    br.r = r[2];
    br.x = r[3];
    br.b_charging = r[4];
    br.rate_a = r[5] / mva;
    br.tap_ratio = r[8];
    br.phase_shift = r[9] * kDegToRad;
    br.status = r[10] > 0.0;
    (br.status ? c.branches : c.dropped_branches).push_back(br);
  }
  return c;
}

inline GridCase read_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matpower(ss.str(), path.stem().string());
}

/// Serializes back to MATPOWER text; parse_matpower(write_matpower(c)) == c.
inline std::string write_matpower(const GridCase& c) {
  using detail::invert_angle;
  using detail::invert_scale;
  const double mva = c.base_mva;
  std::ostringstream out;
  out << std::setprecision(17);
  out << "function mpc = " << c.name << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << mva << ";\n\n";
  out << "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
  for (const auto& b : c.buses) {
    out << "\t" << b.id << "\t" << static_cast<int>(b.bus_type) << "\t" << invert_scale(b.p_demand, mva) << "\t"
        << invert_scale(b.q_demand, mva) << "\t" << invert_scale(b.g_shunt, mva) << "\t"
        << invert_scale(b.b_shunt, mva) << "\t1\t" << b.v_mag_init << "\t" << invert_angle(b.v_ang_init) << "\t"
        << b.base_kv << "\t1\t" << b.v_max << "\t" << b.v_min << ";\n";
  }
  out << "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
  auto all_gens = c.gens;
  all_gens.insert(all_gens.end(), c.dropped_gens.begin(), c.dropped_gens.end());
  for (const auto& g : all_gens) {
    out << "\t" << g.bus << "\t" << invert_scale(g.p_init, mva) << "\t" << invert_scale(g.q_init, mva) << "\t"
        << invert_scale(g.q_max, mva) << "\t" << invert_scale(g.q_min, mva) << "\t" << g.v_set << "\t" << mva
        << "\t" << (g.status ? 1 : 0) << "\t" << invert_scale(g.p_max, mva) << "\t" << invert_scale(g.p_min, mva)
        << ";\n";
  }
  out << "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status\nmpc.branch = [\n";
  auto all_branches = c.branches;
  all_branches.insert(all_branches.end(), c.dropped_branches.begin(), c.dropped_branches.end());
  for (const auto& br : all_branches) {
    out << "\t" << br.from_bus << "\t" << br.to_bus << "\t" << br.r << "\t" << br.x << "\t" << br.b_charging
        << "\t" << invert_scale(br.rate_a, mva) << "\t0\t0\t" << br.tap_ratio << "\t"
        << invert_angle(br.phase_shift) << "\t" << (br.status ? 1 : 0) << ";\n";
  }
  out << "];\n\n%% 2 startup shutdown n c2 c1 c0\nmpc.gencost = [\n";
  for (const auto& g : all_gens) {
    out << "\t2\t0\t0\t3\t" << g.cost_c2 << "\t" << g.cost_c1 << "\t" << g.cost_c0 << ";\n";
  }
  out << "];\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Admittances

using Complex = std::complex<double>;

/// Two-port admittances of one in-service branch (indices are internal bus indices).
struct BranchAdmittance {
  Index from = 0;
  Index to = 0;
  Complex yff;
  Complex yft;
  Complex ytf;
  Complex ytt;
};

/// Complex bus admittance matrix in CSC form with a symmetric pattern.
struct Admittance {
  Index n_bus = 0;
  std::vector<Index> col_ptr;
  std::vector<Index> row_ind;
  std::vector<Complex> values;
  std::vector<BranchAdmittance> branches;  ///< parallel to GridCase::branches
  std::vector<Complex> shunts;             ///< per-bus shunt admittance

  [[nodiscard]] Complex at(Index row, Index col) const {
    auto first = row_ind.begin() + col_ptr[col];
    auto last = row_ind.begin() + col_ptr[col + 1];
    auto it = std::lower_bound(first, last, row);
    return (it != last && *it == row) ? values[it - row_ind.begin()] : Complex{};
  }
};

/// Standard pi model with off-nominal tap and phase shift:
///   ys = 1/(r + jx), t = tap e^{j shift}
///   yff = (ys + j b/2) / |t|^2, yft = -ys / conj(t), ytf = -ys / t, ytt = ys + j b/2.
inline BranchAdmittance branch_admittance(const BranchRecord& br, Index from, Index to) {
  if (br.r == 0.0 && br.x == 0.0) {
    throw ModelError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                     " has zero impedance");
  }
  const Complex ys = 1.0 / Complex(br.r, br.x);
  const Complex t = std::polar(br.effective_tap(), br.phase_shift);
  const Complex ytt = ys + Complex(0.0, br.b_charging / 2.0);
  return {from, to, ytt / std::norm(t), -ys / std::conj(t), -ys / t, ytt};
}

inline Admittance build_admittance(const GridCase& c) {
  Admittance y;
  const Index n = static_cast<Index>(c.buses.size());
  y.n_bus = n;
  std::vector<std::map<Index, Complex>> cols(n);
  y.shunts.resize(n);
  for (Index i = 0; i < n; ++i) {
    y.shunts[i] = Complex(c.buses[i].g_shunt, c.buses[i].b_shunt);
    cols[i][i] += y.shunts[i];
  }
  for (const auto& br : c.branches) {
    if (!br.status) continue;
    const Index f = c.index_of(br.from_bus);
    const Index t = c.index_of(br.to_bus);
    auto ba = branch_admittance(br, f, t);
    cols[f][f] += ba.yff;
    cols[t][f] += ba.ytf;
    cols[f][t] += ba.yft;
    cols[t][t] += ba.ytt;
    y.branches.push_back(ba);
  }
  y.col_ptr.assign(n + 1, 0);
  for (Index j = 0; j < n; ++j) {
    for (const auto& [i, v] : cols[j]) {
      y.row_ind.push_back(i);
      y.values.push_back(v);
    }
    y.col_ptr[j + 1] = static_cast<Index>(y.row_ind.size());
  }
  return y;
}

/// Buses not reachable from the first bus through in-service branches.
inline std::vector<Index> disconnected_buses(const GridCase& c, Index root) {
  const Index n = static_cast<Index>(c.buses.size());
  std::vector<std::vector<Index>> adj(n);
  for (const auto& br : c.branches) {
    if (!br.status) continue;
    const Index f = c.index_of(br.from_bus);
    const Index t = c.index_of(br.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{root};
  seen[root] = 1;
  while (!stack.empty()) {
    Index v = stack.back();
    stack.pop_back();
    for (Index w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  std::vector<Index> out;
  for (Index i = 0; i < n; ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

}  // namespace gridkkt

#endif  // GRIDKKT_GRID_MODEL_HPP
