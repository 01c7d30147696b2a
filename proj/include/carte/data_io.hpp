// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carte/graphlet.hpp"
#include "carte/model.hpp"

namespace carte {

/// CSV as read: header plus rows of raw fields. An empty field is missing.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 style: comma separated, double-quoted fields may contain commas,
/// quotes (doubled) and line breaks. LF and CRLF line endings are accepted.
RawTable parse_csv(std::string_view text);
RawTable read_csv(const std::filesystem::path& path);
void write_csv(const RawTable& table, const std::filesystem::path& path);
std::string csv_escape(std::string_view field);

struct Dataset {
  TableSchema schema;
  std::vector<Row> rows;
  std::vector<double> targets;  // empty when the table has no target column
  // Classification tables with string labels: label text for class 0 and 1.
  std::vector<std::string> class_labels;

  std::size_t size() const noexcept { return rows.size(); }
  std::vector<double> column_values(std::size_t column) const;  // non-missing numeric cells
  Dataset subset(std::span<const std::size_t> index) const;
};

struct LoadOptions {
  double numeric_threshold = 0.9;  // share of non-empty cells that must parse
  double max_missing = 0.5;        // columns missing in more than this share are dropped
  bool drop_constant = true;       // columns with a single unique value are dropped
};

bool parse_number(std::string_view text, double& out);

/// Builds a Dataset from a CSV with a target column. Regression targets must be
/// numeric; classification targets must take exactly two values, mapped to 0/1
/// in sorted order. Rows with a missing target are skipped.
Dataset make_dataset(const RawTable& raw, std::string_view target, Task task, const LoadOptions& options = {});
Dataset load_table(const std::filesystem::path& path, std::string_view target, Task task,
                   const LoadOptions& options = {});

/// Reads rows for an already-fitted schema, matching columns by name. A
/// missing schema column is an error naming it; extra columns are ignored and
/// the target column, if present, is ignored as well.
std::vector<Row> conform_rows(const RawTable& raw, const TableSchema& schema);

/// Writes a Dataset back to CSV (target last); used by tools and tests.
RawTable to_raw(const Dataset& data);

}  // namespace carte
