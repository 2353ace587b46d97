#ifndef ESCAPE_CSV_IO_HPP_
#define ESCAPE_CSV_IO_HPP_

// CSV serialization. Every file starts with `# key=value` metadata lines,
// followed by one header row and the data rows. Doubles are written in the
// shortest form that parses back to the same bits.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "escape/analysis.hpp"
#include "escape/controller.hpp"
#include "escape/discretization.hpp"
#include "escape/escape_functions.hpp"

namespace escape::csv {

using Metadata = std::vector<std::pair<std::string, std::string>>;

inline std::string fmt(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, end);
}

inline std::string fmt(std::size_t x) { return std::to_string(x); }

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

inline void write_metadata(std::ostream& os, const Metadata& meta) {
  for (const auto& [k, v] : meta) os << "# " << k << '=' << v << '\n';
}

/// Writes `content` to `path` through a temporary file and a rename, so
/// readers never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Columns i, q, U_1..U_N.
inline std::string escape_functions(const EscapeFunctionStack& stack, const Metadata& meta) {
  std::ostringstream os;
  write_metadata(os, meta);
  os << "i,q";
  for (const auto& f : stack.functions) os << ",U_" << f.k;
  os << '\n';
  for (std::size_t i = 0; i < stack.grid.size(); ++i) {
    os << i << ',' << fmt(stack.grid[i]);
    for (const auto& f : stack.functions) os << ',' << fmt(f[i]);
    os << '\n';
  }
  return os.str();
}

/// Columns i, q, in_E1..in_EN as 0/1.
inline std::string escape_sets(const Grid& grid, const std::vector<EscapeSet>& sets,
                               const Metadata& meta) {
  std::ostringstream os;
  write_metadata(os, meta);
  os << "i,q";
  for (const auto& e : sets) os << ",in_E" << e.k;
  os << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << i << ',' << fmt(grid[i]);
    for (const auto& e : sets) os << ',' << (e.contains(i) ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

/// Columns n, q, xi, u, k_target, region, escaped. The last row holds the
/// final state with xi, u and k_target left empty.
inline std::string trace(const OrbitTrace& tr, const Metadata& meta) {
  std::ostringstream os;
  write_metadata(os, meta);
  os << "n,q,xi,u,k_target,region,escaped\n";
  for (const auto& s : tr.steps) {
    os << s.n << ',' << fmt(s.q) << ',' << (s.xi ? fmt(*s.xi) : "") << ','
       << (s.u ? fmt(*s.u) : "") << ',' << (s.k_target ? std::to_string(*s.k_target) : "")
       << ',' << s.region << ',' << (s.escaped ? 1 : 0) << '\n';
  }
  return os.str();
}

/// First row: corner label and the u0 values; then one row per xi0 with the
/// minimal N or `inf`.
inline std::string sweep_matrix(const SweepMatrix& m, const Metadata& meta) {
  std::ostringstream os;
  write_metadata(os, meta);
  os << "xi0\\u0";
  for (double u : m.u0s) os << ',' << fmt(u);
  os << '\n';
  for (std::size_t r = 0; r < m.xi0s.size(); ++r) {
    os << fmt(m.xi0s[r]);
    for (std::size_t c = 0; c < m.u0s.size(); ++c) {
      const auto& v = m.at(r, c);
      os << ',' << (v ? std::to_string(*v) : std::string("inf"));
    }
    os << '\n';
  }
  return os.str();
}

inline std::string escape_times(const Grid& grid, const std::vector<std::size_t>& steps,
                                const Metadata& meta) {
  std::ostringstream os;
  write_metadata(os, meta);
  os << "q0,steps\n";
  for (std::size_t i = 0; i < grid.size(); ++i) os << fmt(grid[i]) << ',' << steps[i] << '\n';
  return os.str();
}

/// A parsed CSV file: metadata, header and raw cells.
struct Table {
  std::map<std::string, std::string> meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw std::out_of_range("no column '" + name + "'");
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read(std::istream& is) {
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) t.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  return t;
}

inline Table read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read(is);
}

}  // namespace escape::csv

#endif  // ESCAPE_CSV_IO_HPP_
