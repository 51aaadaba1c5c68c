#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <unordered_map>
#include <vector>

// Small CSV layer for the pipeline's fixed report schemas: comma-separated,
// mandatory header row, no quoting (fields must not contain commas or
// newlines). Numbers are written in shortest round-trip form so re-reading a
// report reproduces the exact doubles.

namespace kvol {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("cannot parse number '" + s + "' in " + context);
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

inline std::string join_csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find(',') != std::string::npos || fields[i].find('\n') != std::string::npos)
      throw std::invalid_argument("CSV field may not contain commas or newlines: '" + fields[i] + "'");
    if (i) line.push_back(',');
    line += fields[i];
  }
  return line;
}

// In-memory CSV table with header-based column access.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& context) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("missing column '" + name + "' in " + context);
  }

  bool has_column(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file '" + path.string() + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV file '" + path.string() + "' is empty (header row required)");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw std::runtime_error("CSV row with " + std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(table.header.size()) + " in '" + path.string() + "'");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV file '" + path.string() + "'");
  out << join_csv_line(table.header) << '\n';
  for (const auto& row : table.rows) out << join_csv_line(row) << '\n';
  if (!out) throw std::runtime_error("failed writing CSV file '" + path.string() + "'");
}

}  // namespace kvol
