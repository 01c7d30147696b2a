// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace carte {

RawTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // a blank line is not a record
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw ParseError("quote inside an unquoted field", line);
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // CRLF: handled at the '\n'
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", line);
  if (field_started || !field.empty() || !record.empty()) end_record();

  RawTable table;
  if (records.empty()) throw ParseError("CSV has no header row", 1);
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw std::runtime_error("CSV record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                               " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

RawTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv(const RawTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto write_record = [&](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(rec[i]);
    }
    out << '\n';
  };
  write_record(table.header);
  for (const auto& r : table.rows) write_record(r);
}

bool parse_number(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::vector<double> Dataset::column_values(std::size_t column) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (const double* v = std::get_if<double>(&r.at(column))) out.push_back(*v);
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> index) const {
  Dataset out;
  out.schema = schema;
  out.class_labels = class_labels;
  for (std::size_t i : index) {
    out.rows.push_back(rows.at(i));
    if (!targets.empty()) out.targets.push_back(targets.at(i));
  }
  return out;
}

namespace {

bool is_empty_field(const std::string& s) { return s.empty(); }

}  // namespace

Dataset make_dataset(const RawTable& raw, std::string_view target, Task task, const LoadOptions& options) {
  const auto tcol_it = std::find(raw.header.begin(), raw.header.end(), target);
  if (tcol_it == raw.header.end()) throw std::invalid_argument("target column '" + std::string(target) + "' not found");
  const std::size_t tcol = static_cast<std::size_t>(tcol_it - raw.header.begin());

  // target values
  std::vector<std::size_t> kept_rows;
  std::vector<double> targets;
  std::vector<std::string> labels;
  if (task == Task::regression) {
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      const auto& f = raw.rows[r][tcol];
      if (is_empty_field(f)) continue;
      double v;
      if (!parse_number(f, v)) {
        throw std::invalid_argument("regression target '" + std::string(target) + "' has non-numeric value '" + f +
                                    "' in row " + std::to_string(r + 1));
      }
      kept_rows.push_back(r);
      targets.push_back(v);
    }
  } else {
    std::set<std::string> distinct;
    for (const auto& row : raw.rows) {
      if (!is_empty_field(row[tcol])) distinct.insert(row[tcol]);
    }
    if (distinct.size() != 2) {
      throw std::invalid_argument("classification target '" + std::string(target) + "' has " +
                                  std::to_string(distinct.size()) + " distinct values, expected 2");
    }
    labels.assign(distinct.begin(), distinct.end());
    // numeric labels sort numerically (e.g. "0" < "1", "-1" < "1")
    double a, b;
    if (parse_number(labels[0], a) && parse_number(labels[1], b) && b < a) std::swap(labels[0], labels[1]);
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      const auto& f = raw.rows[r][tcol];
      if (is_empty_field(f)) continue;
      kept_rows.push_back(r);
      targets.push_back(f == labels[1] ? 1.0 : 0.0);
    }
  }
  if (kept_rows.empty()) throw std::invalid_argument("table has no data rows");

  Dataset data;
  data.schema.target = std::string(target);
  data.class_labels = labels;
  data.targets = std::move(targets);
  std::vector<std::size_t> feature_cols;
  const double n = static_cast<double>(kept_rows.size());
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    if (c == tcol) continue;
    std::size_t non_empty = 0, parsed = 0;
    std::set<std::string> uniques;
    for (std::size_t r : kept_rows) {
      const auto& f = raw.rows[r][c];
      if (is_empty_field(f)) continue;
      ++non_empty;
      double v;
      if (parse_number(f, v)) ++parsed;
      if (uniques.size() < 2) uniques.insert(f);
    }
    if (non_empty == 0) continue;
    if (static_cast<double>(n - non_empty) > options.max_missing * n) continue;
    const bool numeric = static_cast<double>(parsed) >= options.numeric_threshold * static_cast<double>(non_empty);
    if (options.drop_constant) {
      if (numeric) {
        // compare parsed values, so "1" and "1.0" count as one value
        std::set<double> vals;
        for (std::size_t r : kept_rows) {
          double v;
          if (parse_number(raw.rows[r][c], v)) vals.insert(v);
          if (vals.size() > 1) break;
        }
        if (vals.size() < 2) continue;
      } else if (uniques.size() < 2) {
        continue;
      }
    }
    data.schema.columns.push_back({raw.header[c], numeric ? ColumnKind::numeric : ColumnKind::string});
    feature_cols.push_back(c);
  }
  data.schema.validate();
  for (std::size_t r : kept_rows) {
    Row row;
    row.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto& f = raw.rows[r][feature_cols[k]];
      if (is_empty_field(f)) {
        row.emplace_back(std::monostate{});
      } else if (data.schema.columns[k].kind == ColumnKind::numeric) {
        double v;
        if (parse_number(f, v)) {
          row.emplace_back(v);
        } else {
          row.emplace_back(std::monostate{});
        }
      } else {
        row.emplace_back(f);
      }
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

Dataset load_table(const std::filesystem::path& path, std::string_view target, Task task, const LoadOptions& options) {
  return make_dataset(read_csv(path), target, task, options);
}

std::vector<Row> conform_rows(const RawTable& raw, const TableSchema& schema) {
  std::vector<std::size_t> source;
  for (const auto& col : schema.columns) {
    auto it = std::find(raw.header.begin(), raw.header.end(), col.name);
    if (it == raw.header.end()) throw std::invalid_argument("column '" + col.name + "' is missing from the table");
    source.push_back(static_cast<std::size_t>(it - raw.header.begin()));
  }
  std::vector<Row> rows;
  rows.reserve(raw.rows.size());
  for (const auto& rec : raw.rows) {
    Row row;
    for (std::size_t k = 0; k < source.size(); ++k) {
      const auto& f = rec[source[k]];
      if (f.empty()) {
        row.emplace_back(std::monostate{});
      } else if (schema.columns[k].kind == ColumnKind::numeric) {
        double v;
        if (parse_number(f, v)) {
          row.emplace_back(v);
        } else {
          row.emplace_back(std::monostate{});
        }
      } else {
        row.emplace_back(f);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

RawTable to_raw(const Dataset& data) {
  RawTable raw;
  for (const auto& c : data.schema.columns) raw.header.push_back(c.name);
  const bool with_target = !data.targets.empty();
  if (with_target) raw.header.push_back(data.schema.target);
  char buf[32];
  auto fmt = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  };
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    std::vector<std::string> rec;
    for (const auto& cell : data.rows[i]) {
      if (const double* v = std::get_if<double>(&cell)) {
        rec.push_back(fmt(*v));
      } else if (const auto* s = std::get_if<std::string>(&cell)) {
        rec.push_back(*s);
      } else {
        rec.emplace_back();
      }
    }
    if (with_target) {
      const double t = data.targets[i];
      rec.push_back(data.class_labels.size() == 2 ? data.class_labels[t > 0.5 ? 1 : 0] : fmt(t));
    }
    raw.rows.push_back(std::move(rec));
  }
  return raw;
}

}  // namespace carte
