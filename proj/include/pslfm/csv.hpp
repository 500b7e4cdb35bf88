#pragma once
// Minimal CSV reading/writing for the panel and result files.
// Comma-separated, header row, UTF-8, '.' decimal separator, no quoting.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pslfm/errors.hpp"

namespace pslfm {

// %.17g: shortest form that round-trips an IEEE double exactly.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }
  int require_column(const std::string& name) const {
    const int j = column(name);
    if (j < 0) throw SchemaError("missing required column '" + name + "'");
    return j;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file '" + path + "'");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw SchemaError("row with " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(table.header.size()) + " in '" + path + "'");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("cannot parse '" + s + "' as a number for " + what);
  }
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    path_ = path;
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j) out_ << ',';
      out_ << fields[j];
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace pslfm
