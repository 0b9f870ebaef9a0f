// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kvevict/analysis.hpp"
#include "kvevict/attention.hpp"
#include "kvevict/theory.hpp"

namespace kvevict {

/// Empty cell (null), integer, real, or text.
using CsvCell = std::variant<std::monostate, std::int64_t, double, std::string>;
using CsvRow = std::vector<CsvCell>;

enum class CsvSchema { Simulation, Correlation, Bounds, Scaling, Diversity, Overlap, KeyScatter };

std::string_view to_string(CsvSchema schema);
/// Throws SchemaError for an unknown name.
CsvSchema parse_csv_schema(std::string_view name);

enum class CsvType { Int, Real, Text };

struct CsvColumn {
    std::string_view name;
    CsvType type;
    bool nullable = false;
};

std::span<const CsvColumn> csv_columns(CsvSchema schema);
std::string csv_header(CsvSchema schema);

/// RFC-4180 text with CRLF line ends. Reals are printed with 17 significant
/// digits independent of locale; nulls are empty cells. Integers are accepted
/// in real columns. Throws SchemaError for a wrong arity, a type mismatch, a
/// null in a non-nullable column, or NaN.
std::string format_csv(std::span<const CsvRow> rows, CsvSchema schema);

/// format_csv to `path`. IoError on failure.
void write_report_csv(std::span<const CsvRow> rows, CsvSchema schema, const std::filesystem::path& path);

/// Parses text produced by format_csv (CRLF or LF) back into typed rows.
/// The header must match the schema exactly. Throws SchemaError.
std::vector<CsvRow> parse_csv(std::string_view text, CsvSchema schema);

// Converters from engine reports to schema rows.

std::vector<CsvRow> simulation_rows(const SimulationReport& report);
std::vector<CsvRow> correlation_rows(std::span<const CorrelationRow> rows);
std::vector<CsvRow> bounds_rows(std::span<const VerificationSummary> summaries);
std::vector<CsvRow> scaling_rows(std::string_view policy, const ScalingResult& result);
CsvRow diversity_row(std::string_view policy, const DiversityReport& report);
std::vector<CsvRow> keyscatter_rows(std::span<const KeyScatterRow> rows);

/// "3 4 9" <-> {3, 4, 9}; the retained_time_ids cell of the simulation schema.
std::string format_id_list(std::span<const std::int64_t> ids);
std::vector<std::int64_t> parse_id_list(std::string_view text);

}  // namespace kvevict
