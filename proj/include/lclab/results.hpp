#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lclab/errors.hpp"

namespace lclab {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  if (r.ec != std::errc()) throw NumericalFailure("format_real: conversion failed");
  return std::string(buf, r.ptr);
}

/// Strict parse of a full token as a double; accepts nan and +-inf.
inline bool parse_real(const std::string& text, double& out) {
  if (text == "nan") {
    out = std::nan("");
    return true;
  }
  if (text == "inf" || text == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (text == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  const char* first = text.data();
  if (!text.empty() && text.front() == '+') ++first;
  const char* last = text.data() + text.size();
  if (first == last) return false;
  const auto r = std::from_chars(first, last, out);
  return r.ec == std::errc() && r.ptr == last;
}

inline bool parse_integer(const std::string& text, long long& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  if (first == last) return false;
  const auto r = std::from_chars(first, last, out);
  return r.ec == std::errc() && r.ptr == last;
}

/// 64-bit FNV-1a digest as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

enum class ColumnType { real, integer, text };

inline std::string to_string(ColumnType t) {
  switch (t) {
    case ColumnType::real: return "real";
    case ColumnType::integer: return "integer";
    case ColumnType::text: return "text";
  }
  return "?";
}

inline ColumnType column_type_from_string(const std::string& s) {
  if (s == "real") return ColumnType::real;
  if (s == "integer") return ColumnType::integer;
  if (s == "text") return ColumnType::text;
  throw ParseError("unknown column type '" + s + "'");
}

struct Column {
  std::string name;
  ColumnType type = ColumnType::real;

  friend bool operator==(const Column&, const Column&) = default;
};

using Cell = std::variant<double, long long, std::string>;

/// Rectangular typed table with ordered metadata, written as CSV with
/// '#'-prefixed metadata lines ahead of the header.
class ResultTable {
 public:
  ResultTable() = default;
  explicit ResultTable(std::vector<Column> columns) : columns_(std::move(columns)) {
    require(!columns_.empty(), "ResultTable: need at least one column");
    std::set<std::string> seen;
    for (const auto& c : columns_) {
      require(valid_token(c.name) && !c.name.empty(), "ResultTable: invalid column name '" + c.name + "'");
      require(seen.insert(c.name).second, "ResultTable: duplicate column '" + c.name + "'");
    }
  }

  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return metadata_; }
  std::size_t size() const { return rows_.size(); }

  void add_row(std::vector<Cell> row) {
    require(row.size() == columns_.size(), "ResultTable: row has " + std::to_string(row.size()) +
                                               " cells, expected " + std::to_string(columns_.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
      const bool ok = (columns_[i].type == ColumnType::real && std::holds_alternative<double>(row[i])) ||
                      (columns_[i].type == ColumnType::integer && std::holds_alternative<long long>(row[i])) ||
                      (columns_[i].type == ColumnType::text && std::holds_alternative<std::string>(row[i]));
      require(ok, "ResultTable: cell type mismatch in column '" + columns_[i].name + "'");
      if (const auto* s = std::get_if<std::string>(&row[i]))
        require(valid_token(*s), "ResultTable: text cell '" + *s + "' contains a separator");
    }
    rows_.push_back(std::move(row));
  }

  void set_metadata(const std::string& key, const std::string& value) {
    require(valid_token(key) && key.find('=') == std::string::npos && !key.empty(),
            "ResultTable: invalid metadata key '" + key + "'");
    require(value.find('\n') == std::string::npos, "ResultTable: metadata value contains a newline");
    for (auto& kv : metadata_)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    metadata_.emplace_back(key, value);
  }

  const std::string* find_metadata(const std::string& key) const {
    for (const auto& kv : metadata_)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].name == name) return i;
    throw InvalidArgument("ResultTable: no column '" + name + "'");
  }

  double real_at(std::size_t row, const std::string& name) const {
    return std::get<double>(rows_.at(row).at(column_index(name)));
  }

  void write_csv(std::ostream& os) const {
    for (const auto& kv : metadata_) os << "# " << kv.first << " = " << kv.second << '\n';
    os << "# columns = ";
    for (std::size_t i = 0; i < columns_.size(); ++i)
      os << (i ? "," : "") << columns_[i].name << ':' << to_string(columns_[i].type);
    os << '\n';
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i].name;
    os << '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, double>) os << format_real(v);
              else os << v;
            },
            row[i]);
      }
      os << '\n';
    }
  }

  std::string to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }

  /// Reads the dialect produced by write_csv. The column types come from the
  /// '# columns' metadata line; without it every column is read as text.
  static ResultTable read_csv(std::istream& is) {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<Column> typed;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
      throw ParseError("csv line " + std::to_string(lineno) + ": " + what);
    };
    std::vector<std::string> header;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line.front() == '#') {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos || eq < 2) fail("malformed metadata line");
        const std::string key = line.substr(2, eq - 2);
        const std::string value = line.substr(eq + 3);
        if (key == "columns") {
          for (const auto& spec : split(value, ',')) {
            const auto colon = spec.rfind(':');
            if (colon == std::string::npos) fail("malformed column spec '" + spec + "'");
            typed.push_back({spec.substr(0, colon), column_type_from_string(spec.substr(colon + 1))});
          }
        } else {
          meta.emplace_back(key, value);
        }
        continue;
      }
      header = split(line, ',');
      break;
    }
    if (header.empty()) fail("missing header line");
    std::vector<Column> cols;
    if (typed.empty()) {
      for (const auto& h : header) cols.push_back({h, ColumnType::text});
    } else {
      if (typed.size() != header.size()) fail("header does not match the column metadata");
      for (std::size_t i = 0; i < header.size(); ++i)
        if (typed[i].name != header[i]) fail("header column '" + header[i] + "' does not match metadata");
      cols = typed;
    }
    ResultTable t(cols);
    for (const auto& kv : meta) t.metadata_.push_back(kv);
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const std::vector<std::string> fields = split(line, ',');
      if (fields.size() != cols.size()) fail("expected " + std::to_string(cols.size()) + " fields");
      std::vector<Cell> row;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        switch (cols[i].type) {
          case ColumnType::real: {
            double v = 0.0;
            if (!parse_real(fields[i], v)) fail("column '" + cols[i].name + "': not a real '" + fields[i] + "'");
            row.emplace_back(v);
            break;
          }
          case ColumnType::integer: {
            long long v = 0;
            if (!parse_integer(fields[i], v)) fail("column '" + cols[i].name + "': not an integer '" + fields[i] + "'");
            row.emplace_back(v);
            break;
          }
          case ColumnType::text: row.emplace_back(fields[i]); break;
        }
      }
      t.rows_.push_back(std::move(row));
    }
    return t;
  }

  static ResultTable from_csv(const std::string& text) {
    std::istringstream is(text);
    return read_csv(is);
  }

 private:
  static bool valid_token(const std::string& s) {
    return s.find_first_of(",\n\r") == std::string::npos;
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  }

  std::vector<Column> columns_;
  std::vector<std::vector<Cell>> rows_;
  std::vector<std::pair<std::string, std::string>> metadata_;
};

}  // namespace lclab
