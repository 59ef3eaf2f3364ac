/*
 * Copyright 2026 The Zaya Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Row-oriented report that renders as CSV or as a JSON array of objects with
// the same field names.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zaya/numcore/matrix.hpp"

namespace zaya::cli {

using json = nlohmann::json;

enum class Format { csv, json };

inline Format parse_format(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  throw ConfigError("unknown format '" + s + "' (expected csv or json)");
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add(std::vector<json> row) {
    if (row.size() != columns.size())
      throw ShapeError(zaya::detail::concat("table row has ", row.size(), " cells, expected ", columns.size()));
    rows.push_back(std::move(row));
  }
  const json& at(std::size_t row, const std::string& col) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == col) return rows.at(row).at(c);
    throw ConfigError("no column '" + col + "'");
  }
};

inline std::string format_cell(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  if (v.is_null()) return "";
  return v.dump();
}

inline void write_csv(std::ostream& os, const Table& t) {
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_cell(r[c]);
    os << '\n';
  }
}

inline json to_json(const Table& t) {
  json arr = json::array();
  for (const auto& r : t.rows) {
    json o = json::object();
    for (std::size_t c = 0; c < r.size(); ++c) o[t.columns[c]] = r[c];
    arr.push_back(std::move(o));
  }
  return arr;
}

inline void write_table(std::ostream& os, const Table& t, Format f) {
  if (f == Format::csv)
    write_csv(os, t);
  else
    os << to_json(t).dump(2) << '\n';
}

}  // namespace zaya::cli
