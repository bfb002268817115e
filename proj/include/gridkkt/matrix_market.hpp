#ifndef GRIDKKT_MATRIX_MARKET_HPP
#define GRIDKKT_MATRIX_MARKET_HPP

// Matrix Market coordinate (real general/symmetric) and array (dense vector)
// I/O. Files are 1-based; everything in memory is 0-based.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gridkkt/sparse_core.hpp"

namespace gridkkt::mm {

enum class Symmetry { General, Symmetric };

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Header {
  std::string format;  // coordinate | array
  Symmetry symmetry = Symmetry::General;
};

inline Header read_header(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty Matrix Market stream");
  std::istringstream hs(line);
  std::string banner, object, format, field, sym;
  hs >> banner >> object >> format >> field >> sym;
  if (banner != "%%MatrixMarket" || lower(object) != "matrix") {
    throw ParseError(origin + ": missing %%MatrixMarket matrix banner");
  }
  if (lower(field) != "real" && lower(field) != "integer") {
    throw ParseError(origin + ": only real/integer fields are supported");
  }
  Header h;
  h.format = lower(format);
  sym = lower(sym);
  if (sym == "symmetric") {
    h.symmetry = Symmetry::Symmetric;
  } else if (sym != "general") {
    throw ParseError(origin + ": unsupported symmetry '" + sym + "'");
  }
  return h;
}

inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '%') continue;
    return true;
  }
  return false;
}

}  // namespace detail

/// Reads a coordinate matrix. Symmetric files are expanded to both triangles.
inline CscMatrix read_matrix(std::istream& in, const std::string& origin = "<stream>") {
  auto h = detail::read_header(in, origin);
  if (h.format != "coordinate") throw ParseError(origin + ": expected coordinate format");
  std::string line;
  if (!detail::next_data_line(in, line)) throw ParseError(origin + ": missing size line");
  long rows = 0, cols = 0, entries = 0;
  if (!(std::istringstream(line) >> rows >> cols >> entries)) throw ParseError(origin + ": bad size line");
  TripletMatrix t(static_cast<Index>(rows), static_cast<Index>(cols));
  t.entries.reserve(entries * (h.symmetry == Symmetry::Symmetric ? 2 : 1));
  for (long k = 0; k < entries; ++k) {
    if (!detail::next_data_line(in, line)) throw ParseError(origin + ": truncated entry list");
    long i = 0, j = 0;
    double v = 0.0;
    if (!(std::istringstream(line) >> i >> j >> v)) throw ParseError(origin + ": bad entry '" + line + "'");
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError(origin + ": entry index out of range");
    t.add(static_cast<Index>(i - 1), static_cast<Index>(j - 1), v);
    if (h.symmetry == Symmetry::Symmetric && i != j) t.add(static_cast<Index>(j - 1), static_cast<Index>(i - 1), v);
  }
  return compress(t);
}

inline CscMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_matrix(in, path.string());
}

/// Writes every stored entry (explicit zeros included). With Symmetric only
/// the lower triangle is written.
inline void write_matrix(std::ostream& out, const CscMatrix& a, Symmetry sym = Symmetry::General) {
  Index count = 0;
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      if (sym == Symmetry::General || a.row_ind[p] >= j) ++count;
    }
  }
  out << "%%MatrixMarket matrix coordinate real " << (sym == Symmetry::General ? "general" : "symmetric") << "\n";
  out << a.n_rows << " " << a.n_cols << " " << count << "\n";
  out << std::setprecision(17);
  for (Index j = 0; j < a.n_cols; ++j) {
    for (Index p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      if (sym == Symmetry::Symmetric && a.row_ind[p] < j) continue;
      out << a.row_ind[p] + 1 << " " << j + 1 << " " << a.values[p] << "\n";
    }
  }
}

inline void write_matrix(const std::filesystem::path& path, const CscMatrix& a,
                         Symmetry sym = Symmetry::General) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_matrix(out, a, sym);
}

inline std::vector<double> read_vector(std::istream& in, const std::string& origin = "<stream>") {
  auto h = detail::read_header(in, origin);
  if (h.format != "array") throw ParseError(origin + ": expected array format for a vector");
  std::string line;
  if (!detail::next_data_line(in, line)) throw ParseError(origin + ": missing size line");
  long rows = 0, cols = 0;
  if (!(std::istringstream(line) >> rows >> cols) || cols != 1) {
    throw ParseError(origin + ": vector must be an n x 1 array");
  }
  std::vector<double> v(rows);
  for (long i = 0; i < rows; ++i) {
    if (!detail::next_data_line(in, line)) throw ParseError(origin + ": truncated vector");
    if (!(std::istringstream(line) >> v[i])) throw ParseError(origin + ": bad vector entry");
  }
  return v;
}

inline std::vector<double> read_vector(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_vector(in, path.string());
}

inline void write_vector(std::ostream& out, std::span<const double> v) {
  out << "%%MatrixMarket matrix array real general\n" << v.size() << " 1\n" << std::setprecision(17);
  for (double x : v) out << x << "\n";
}

inline void write_vector(const std::filesystem::path& path, std::span<const double> v) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_vector(out, v);
}

}  // namespace gridkkt::mm

#endif  // GRIDKKT_MATRIX_MARKET_HPP
