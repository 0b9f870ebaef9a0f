// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include "kvevict/errors.hpp"

namespace kvevict {

namespace {

constexpr std::array kSimulation = {
    CsvColumn{"layer", CsvType::Int},          CsvColumn{"head", CsvType::Int},
    CsvColumn{"block", CsvType::Int},          CsvColumn{"start_pos", CsvType::Int},
    CsvColumn{"block_len", CsvType::Int},      CsvColumn{"cache_len_before", CsvType::Int},
    CsvColumn{"cache_len_after", CsvType::Int}, CsvColumn{"retained_time_ids", CsvType::Text},
};
constexpr std::array kCorrelation = {
    CsvColumn{"layer", CsvType::Int},
    CsvColumn{"head", CsvType::Int},
    CsvColumn{"rho", CsvType::Real, true},
};
constexpr std::array kBounds = {
    CsvColumn{"check", CsvType::Text},
    CsvColumn{"instances", CsvType::Int},
    CsvColumn{"violations", CsvType::Int},
    CsvColumn{"max_slack", CsvType::Real, true},
};
constexpr std::array kScaling = {
    CsvColumn{"policy", CsvType::Text}, CsvColumn{"n", CsvType::Int},
    CsvColumn{"d", CsvType::Int},       CsvColumn{"trials", CsvType::Int},
    CsvColumn{"median_seconds", CsvType::Real},
};
constexpr std::array kDiversity = {
    CsvColumn{"policy", CsvType::Text},
    CsvColumn{"logdet_before", CsvType::Real},
    CsvColumn{"logdet_after", CsvType::Real},
    CsvColumn{"mean_cos_after", CsvType::Real, true},
};
constexpr std::array kOverlap = {
    CsvColumn{"policy_a", CsvType::Text},
    CsvColumn{"policy_b", CsvType::Text},
    CsvColumn{"overlap", CsvType::Real},
    CsvColumn{"identical_rate", CsvType::Real},
};
constexpr std::array kKeyScatter = {
    CsvColumn{"layer", CsvType::Int},   CsvColumn{"head", CsvType::Int},
    CsvColumn{"key_index", CsvType::Int}, CsvColumn{"w", CsvType::Real},
    CsvColumn{"beta_q", CsvType::Real}, CsvColumn{"keydiff_score", CsvType::Real},
};

std::string format_real(double x) {
    if (std::isnan(x)) {
        throw SchemaError("format_csv: NaN is not representable");
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string format_cell(const CsvCell& cell, const CsvColumn& col, std::size_t row) {
    auto mismatch = [&] {
        return SchemaError("row " + std::to_string(row) + ": column '" + std::string(col.name) +
                           "' has a value of the wrong type");
    };
    if (std::holds_alternative<std::monostate>(cell)) {
        if (!col.nullable) {
            throw SchemaError("row " + std::to_string(row) + ": column '" + std::string(col.name) +
                              "' may not be null");
        }
        return {};
    }
    switch (col.type) {
        case CsvType::Int:
            if (const auto* v = std::get_if<std::int64_t>(&cell)) {
                return std::to_string(*v);
            }
            throw mismatch();
        case CsvType::Real:
            if (const auto* v = std::get_if<double>(&cell)) {
                return format_real(*v);
            }
            if (const auto* v = std::get_if<std::int64_t>(&cell)) {
                return format_real(static_cast<double>(*v));
            }
            throw mismatch();
        case CsvType::Text:
            if (const auto* v = std::get_if<std::string>(&cell)) {
                return quote_if_needed(*v);
            }
            throw mismatch();
    }
    throw mismatch();
}

struct RawField {
    std::string text;
    bool quoted = false;
};

// Splits RFC-4180 text into records of raw fields.
std::vector<std::vector<RawField>> split_records(std::string_view text) {
    std::vector<std::vector<RawField>> records;
    std::vector<RawField> record;
    RawField field;
    std::size_t i = 0;
    bool at_field_start = true;
    auto end_record = [&] {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
        record.clear();
        field = {};
        at_field_start = true;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (at_field_start && c == '"') {
            field.quoted = true;
            ++i;
            while (true) {
                if (i >= text.size()) {
                    throw SchemaError("parse_csv: unterminated quoted field");
                }
                if (text[i] == '"') {
                    if (i + 1 < text.size() && text[i + 1] == '"') {
                        field.text += '"';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field.text += text[i++];
            }
            at_field_start = false;
            if (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
                throw SchemaError("parse_csv: characters after closing quote");
            }
            continue;
        }
        at_field_start = false;
        if (c == ',') {
            record.push_back(std::move(field));
            field = {};
            at_field_start = true;
            ++i;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            end_record();
            i += 2;
        } else if (c == '\n') {
            end_record();
            ++i;
        } else {
            field.text += c;
            ++i;
        }
    }
    if (!at_field_start || !record.empty()) {
        end_record();
    }
    return records;
}

CsvCell parse_cell(const RawField& f, const CsvColumn& col, std::size_t line) {
    auto bad = [&] {
        return SchemaError("line " + std::to_string(line) + ": cannot read '" + f.text + "' as column '" +
                           std::string(col.name) + "'");
    };
    if (f.text.empty() && !f.quoted && col.type != CsvType::Text) {
        if (!col.nullable) {
            throw bad();
        }
        return std::monostate{};
    }
    const char* first = f.text.data();
    const char* last = first + f.text.size();
    switch (col.type) {
        case CsvType::Int: {
            std::int64_t v = 0;
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc{} || res.ptr != last) {
                throw bad();
            }
            return v;
        }
        case CsvType::Real: {
            if (f.text == "inf") {
                return std::numeric_limits<double>::infinity();
            }
            if (f.text == "-inf") {
                return -std::numeric_limits<double>::infinity();
            }
            double v = 0.0;
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc{} || res.ptr != last) {
                throw bad();
            }
            return v;
        }
        case CsvType::Text:
            return f.text;
    }
    throw bad();
}

}  // namespace

std::string_view to_string(CsvSchema schema) {
    switch (schema) {
        case CsvSchema::Simulation: return "simulation";
        case CsvSchema::Correlation: return "correlation";
        case CsvSchema::Bounds: return "bounds";
        case CsvSchema::Scaling: return "scaling";
        case CsvSchema::Diversity: return "diversity";
        case CsvSchema::Overlap: return "overlap";
        case CsvSchema::KeyScatter: return "keyscatter";
    }
    return "unknown";
}

CsvSchema parse_csv_schema(std::string_view name) {
    for (auto s : {CsvSchema::Simulation, CsvSchema::Correlation, CsvSchema::Bounds, CsvSchema::Scaling,
                   CsvSchema::Diversity, CsvSchema::Overlap, CsvSchema::KeyScatter}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw SchemaError("unknown CSV schema '" + std::string(name) + "'");
}

std::span<const CsvColumn> csv_columns(CsvSchema schema) {
    switch (schema) {
        case CsvSchema::Simulation: return kSimulation;
        case CsvSchema::Correlation: return kCorrelation;
        case CsvSchema::Bounds: return kBounds;
        case CsvSchema::Scaling: return kScaling;
        case CsvSchema::Diversity: return kDiversity;
        case CsvSchema::Overlap: return kOverlap;
        case CsvSchema::KeyScatter: return kKeyScatter;
    }
    throw SchemaError("unknown CSV schema");
}

std::string csv_header(CsvSchema schema) {
    std::string out;
    for (const auto& col : csv_columns(schema)) {
        if (!out.empty()) {
            out += ',';
        }
        out += col.name;
    }
    return out;
}

std::string format_csv(std::span<const CsvRow> rows, CsvSchema schema) {
    const auto cols = csv_columns(schema);
    std::string out = csv_header(schema);
    out += "\r\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols.size()) {
            throw SchemaError("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                              " cells, schema " + std::string(to_string(schema)) + " has " +
                              std::to_string(cols.size()));
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c > 0) {
                out += ',';
            }
            out += format_cell(rows[r][c], cols[c], r);
        }
        out += "\r\n";
    }
    return out;
}

void write_report_csv(std::span<const CsvRow> rows, CsvSchema schema, const std::filesystem::path& path) {
    const std::string text = format_csv(rows, schema);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
        throw IoError("write to " + path.string() + " failed");
    }
}

std::vector<CsvRow> parse_csv(std::string_view text, CsvSchema schema) {
    const auto cols = csv_columns(schema);
    const auto records = split_records(text);
    if (records.empty()) {
        throw SchemaError("parse_csv: missing header");
    }
    std::string header;
    for (std::size_t i = 0; i < records[0].size(); ++i) {
        header += (i > 0 ? "," : "") + records[0][i].text;
    }
    if (header != csv_header(schema)) {
        throw SchemaError("parse_csv: header '" + header + "' does not match schema " +
                          std::string(to_string(schema)));
    }
    std::vector<CsvRow> rows;
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != cols.size()) {
            throw SchemaError("parse_csv: line " + std::to_string(r + 1) + " has " +
                              std::to_string(records[r].size()) + " fields");
        }
        CsvRow row;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            row.push_back(parse_cell(records[r][c], cols[c], r + 1));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_id_list(std::span<const std::int64_t> ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += std::to_string(ids[i]);
    }
    return out;
}

std::vector<std::int64_t> parse_id_list(std::string_view text) {
    std::vector<std::int64_t> ids;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t j = std::min(text.find(' ', i), text.size());
        std::int64_t v = 0;
        const auto res = std::from_chars(text.data() + i, text.data() + j, v);
        if (j == i || res.ec != std::errc{} || res.ptr != text.data() + j) {
            throw SchemaError("malformed id list '" + std::string(text) + "'");
        }
        ids.push_back(v);
        i = j + 1;
        if (j + 1 == text.size()) {
            throw SchemaError("malformed id list '" + std::string(text) + "'");
        }
    }
    return ids;
}

namespace {

std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

CsvCell optional_real(const std::optional<double>& v) {
    if (v) {
        return *v;
    }
    return std::monostate{};
}

}  // namespace

std::vector<CsvRow> simulation_rows(const SimulationReport& report) {
    std::vector<CsvRow> rows;
    for (const auto& stream : report.streams) {
        for (const auto& b : stream.blocks) {
            rows.push_back({as_int(b.layer), as_int(b.kv_head), as_int(b.block), b.start_pos, as_int(b.block_len),
                            as_int(b.cache_len_before), as_int(b.cache_len_after),
                            format_id_list(b.retained_time_ids)});
        }
    }
    return rows;
}

std::vector<CsvRow> correlation_rows(std::span<const CorrelationRow> rows) {
    std::vector<CsvRow> out;
    for (const auto& r : rows) {
        out.push_back({as_int(r.layer), as_int(r.head), optional_real(r.rho)});
    }
    return out;
}

std::vector<CsvRow> bounds_rows(std::span<const VerificationSummary> summaries) {
    std::vector<CsvRow> out;
    for (const auto& s : summaries) {
        out.push_back({s.check, as_int(s.instances), as_int(s.violations), optional_real(s.max_slack)});
    }
    return out;
}

std::vector<CsvRow> scaling_rows(std::string_view policy, const ScalingResult& result) {
    std::vector<CsvRow> out;
    for (const auto& p : result.points) {
        out.push_back({std::string(policy), as_int(p.n), as_int(result.d), as_int(result.trials), p.median_seconds});
    }
    return out;
}

CsvRow diversity_row(std::string_view policy, const DiversityReport& report) {
    return {std::string(policy), report.logdet_before, report.logdet_after, optional_real(report.mean_cos_after)};
}

std::vector<CsvRow> keyscatter_rows(std::span<const KeyScatterRow> rows) {
    std::vector<CsvRow> out;
    for (const auto& r : rows) {
        out.push_back({as_int(r.layer), as_int(r.head), as_int(r.key_index), r.w, r.beta_q, r.keydiff_score});
    }
    return out;
}

}  // namespace kvevict
