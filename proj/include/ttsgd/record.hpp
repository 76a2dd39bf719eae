#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ttsgd/errors.hpp"

namespace ttsgd {

/// I/O failure while reading or writing a record.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Decimated time series with named columns. Column 0 is time by convention.
struct TrajectoryRecord {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }

  void add_row(std::vector<double> row) {
    if (row.size() != columns.size())
      throw DimensionError("record row has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(columns.size()));
    rows.push_back(std::move(row));
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw DimensionError("record has no column '" + name + "'");
  }

  std::vector<double> column(const std::string& name) const {
    const std::size_t j = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
  }

  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    return {};
  }
};

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const TrajectoryRecord& rec, std::ostream& os) {
  for (const auto& [k, v] : rec.metadata) os << "# " << k << ": " << v << '\n';
  for (std::size_t j = 0; j < rec.columns.size(); ++j) os << (j ? "," : "") << rec.columns[j];
  os << '\n';
  for (const auto& row : rec.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << format_double(row[j]);
    os << '\n';
  }
}

/// Writes the record; throws IoError if the file cannot be written.
inline void emit_csv(const TrajectoryRecord& rec, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_csv(rec, os);
  os.flush();
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline TrajectoryRecord parse_csv(std::istream& is, const std::string& name = "<stream>") {
  TrajectoryRecord rec;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1);
      const auto colon = body.find(": ");
      if (colon == std::string::npos)
        rec.metadata.emplace_back(body, "");
      else
        rec.metadata.emplace_back(body.substr(0, colon), body.substr(colon + 2));
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!have_header) {
      rec.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != rec.columns.size())
      throw IoError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(rec.columns.size()) +
                    " fields, got " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& s : fields) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw IoError(name + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
      row.push_back(v);
    }
    rec.rows.push_back(std::move(row));
  }
  return rec;
}

inline TrajectoryRecord read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return parse_csv(is, path);
}

}  // namespace ttsgd
