#pragma once

// Plain CSV tables: header row, comma separated, newline terminated. Numbers
// are written with 17 significant digits so parsing and re-emitting a file
// reproduces it byte for byte.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "nlwmix/errors.hpp"

namespace nlwmix {

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> cols) : columns(std::move(cols)) {}

  /// Appends a row of cells; numbers go through format_number().
  template <class... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> row;
    row.reserve(sizeof...(cells));
    (row.push_back(cell(cells)), ...);
    push(std::move(row));
  }

  void push(std::vector<std::string> row) {
    if (row.size() != columns.size()) {
      throw ShapeError("csv row has " + std::to_string(row.size()) + " cells, header has " +
                       std::to_string(columns.size()));
    }
    for (const auto& c : row) {
      if (c.find_first_of(",\n\r") != std::string::npos) throw ShapeError("csv cell contains a separator: " + c);
    }
    rows.push_back(std::move(row));
  }

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (columns[k] == name) return k;
    }
    throw ShapeError("csv has no column '" + name + "'");
  }

  [[nodiscard]] double number(std::size_t row, std::size_t col) const {
    const std::string& s = rows.at(row).at(col);
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
      throw ShapeError("csv cell '" + s + "' is not a number");
    }
    return x;
  }

  [[nodiscard]] std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return out;
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "1" : "0"; }
  template <class T>
  static std::string cell(const T& x) requires std::is_arithmetic_v<T> {
    if constexpr (std::is_integral_v<T>) {
      return std::to_string(x);
    } else {
      return format_number(static_cast<double>(x));
    }
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (header) {
      t.columns = std::move(cells);
      header = false;
    } else {
      if (cells.size() != t.columns.size()) {
        throw ShapeError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                         " cells, found " + std::to_string(cells.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (header) throw ShapeError("csv input has no header");
  return t;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write failed for " + path + ": " + std::strerror(errno));
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void emit_csv(const CsvTable& t, const std::string& path) { write_text(path, t.str()); }

inline CsvTable load_csv(const std::string& path) { return parse_csv(read_text(path)); }

}  // namespace nlwmix
