#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace lqbridge {

using CsvCell = std::variant<std::string, double>;

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<CsvCell>> rows;

  void add_row(std::vector<CsvCell> row) {
    if (row.size() != columns.size()) {
      throw std::invalid_argument("CsvTable: row width does not match header");
    }
    rows.push_back(std::move(row));
  }
};

// Full-precision scientific notation: 17 significant digits round-trips an
// IEEE double bit-exactly.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

namespace detail {

// RFC-4180 quoting: fields containing commas, quotes, or line breaks are
// quoted, with embedded quotes doubled.
inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

}  // namespace detail

inline void emit_csv(const CsvTable& table, const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: byte-identical artifacts
  if (!f) throw std::runtime_error("emit_csv: cannot open " + path);
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) f << ',';
    f << detail::csv_escape(table.columns[c]);
  }
  f << "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) f << ',';
      if (const double* d = std::get_if<double>(&row[c])) {
        f << format_full(*d);
      } else {
        f << detail::csv_escape(std::get<std::string>(row[c]));
      }
    }
    f << "\r\n";
  }
  if (!f) throw std::runtime_error("emit_csv: write failed for " + path);
}

}  // namespace lqbridge
