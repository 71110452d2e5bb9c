#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmatch/error.hpp"

namespace mmatch {

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view tok, const std::string& where) {
  tok = trim(tok);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty())
    throw FormatError(where + ": cannot parse '" + std::string(tok) + "' as a real number");
  return v;
}

} // namespace detail

// Shortest representation that round-trips a double.
inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Reads a tab-separated real matrix. Blank lines and lines starting with '#'
// are skipped. All rows must have the same number of columns.
inline Eigen::MatrixXd read_matrix_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<double> row;
    for (auto tok : detail::split_tabs(view)) row.push_back(detail::parse_double(tok, where));
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(where + ": expected " + std::to_string(rows.front().size()) +
                        " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) m(i, j) = rows[i][j];
  return m;
}

inline void write_matrix_tsv(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << '\t';
      os << format_real(m(i, j));
    }
    os << '\n';
  }
}

// Writes to a sibling temporary and renames, so a failed write never leaves a
// truncated file behind.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline void write_matrix_tsv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  write_matrix_tsv(os, m);
  write_text_atomic(path, os.str());
}

} // namespace mmatch
