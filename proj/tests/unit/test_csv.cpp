// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "generators.hpp"
#include "kvevict/csv.hpp"
#include "kvevict/errors.hpp"

using namespace kvevict;
using namespace kvevict::testing;

TEST(CsvHeaders, ColumnNames) {
    EXPECT_EQ(csv_header(CsvSchema::Simulation),
              "layer,head,block,start_pos,block_len,cache_len_before,cache_len_after,retained_time_ids");
    EXPECT_EQ(csv_header(CsvSchema::Correlation), "layer,head,rho");
    EXPECT_EQ(csv_header(CsvSchema::Bounds), "check,instances,violations,max_slack");
    EXPECT_EQ(csv_header(CsvSchema::Scaling), "policy,n,d,trials,median_seconds");
    EXPECT_EQ(csv_header(CsvSchema::Diversity), "policy,logdet_before,logdet_after,mean_cos_after");
    for (auto s : {CsvSchema::Simulation, CsvSchema::Correlation, CsvSchema::Bounds, CsvSchema::Scaling,
                   CsvSchema::Diversity, CsvSchema::Overlap, CsvSchema::KeyScatter}) {
        EXPECT_EQ(parse_csv_schema(to_string(s)), s);
    }
    EXPECT_THROW(parse_csv_schema("nope"), SchemaError);
}

TEST(CsvFormat, NoRowsIsHeaderOnly) {
    EXPECT_EQ(format_csv({}, CsvSchema::Correlation), "layer,head,rho\r\n");
    EXPECT_TRUE(parse_csv("layer,head,rho\r\n", CsvSchema::Correlation).empty());
}

TEST(CsvFormat, NullsQuotingAndSpecialReals) {
    const std::vector<CsvRow> rows{
        {std::int64_t{0}, std::int64_t{1}, std::monostate{}},
        {std::int64_t{2}, std::int64_t{3}, 0.1},
    };
    EXPECT_EQ(format_csv(rows, CsvSchema::Correlation), "layer,head,rho\r\n0,1,\r\n2,3,0.10000000000000001\r\n");

    const std::vector<CsvRow> text{{std::string("a,\"b\""), std::int64_t{4}, std::int64_t{8}, std::int64_t{1}, -kInf}};
    const std::string out = format_csv(text, CsvSchema::Scaling);
    EXPECT_EQ(out, "policy,n,d,trials,median_seconds\r\n\"a,\"\"b\"\"\",4,8,1,-inf\r\n");
    const auto back = parse_csv(out, CsvSchema::Scaling);
    EXPECT_EQ(std::get<std::string>(back[0][0]), "a,\"b\"");
    EXPECT_EQ(std::get<double>(back[0][4]), -kInf);
}

TEST(CsvFormat, SchemaViolations) {
    const std::vector<CsvRow> short_row{{std::int64_t{0}, std::int64_t{1}}};
    EXPECT_THROW(format_csv(short_row, CsvSchema::Correlation), SchemaError);
    const std::vector<CsvRow> wrong_type{{0.5, std::int64_t{1}, 0.2}};
    EXPECT_THROW(format_csv(wrong_type, CsvSchema::Correlation), SchemaError);
    const std::vector<CsvRow> null_int{{std::monostate{}, std::int64_t{1}, 0.2}};
    EXPECT_THROW(format_csv(null_int, CsvSchema::Correlation), SchemaError);
    const std::vector<CsvRow> nan{{std::int64_t{0}, std::int64_t{1}, std::numeric_limits<double>::quiet_NaN()}};
    EXPECT_THROW(format_csv(nan, CsvSchema::Correlation), SchemaError);

    EXPECT_THROW(parse_csv("layer,head\r\n", CsvSchema::Correlation), SchemaError);
    EXPECT_THROW(parse_csv("layer,head,rho\r\n1,2\r\n", CsvSchema::Correlation), SchemaError);
    EXPECT_THROW(parse_csv("layer,head,rho\r\nx,2,0.5\r\n", CsvSchema::Correlation), SchemaError);
    EXPECT_THROW(parse_csv("", CsvSchema::Correlation), SchemaError);
}

TEST(CsvParse, AcceptsLfLineEnds) {
    const auto rows = parse_csv("layer,head,rho\n4,5,-0.25\n", CsvSchema::Correlation);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(std::get<double>(rows[0][2]), -0.25);
}

TEST(CsvRoundTrip, RealsSurviveExactly) {
    for_each_case(101, 50, [](Rng& rng, std::size_t) {
        std::vector<CsvRow> rows;
        for (std::size_t i = 0; i < 10; ++i) {
            const double x = rng.normal() * std::pow(10.0, rng.uniform(-300.0, 300.0));
            rows.push_back({std::int64_t(i), std::int64_t(-7), x});
        }
        const auto back = parse_csv(format_csv(rows, CsvSchema::Correlation), CsvSchema::Correlation);
        EXPECT_EQ(back, rows);
    });
}

TEST(CsvRoundTrip, SimulationReport) {
    Rng rng(102);
    const TokenTrace t = random_trace(rng, 2, 2, 1, 4, 23);
    PolicySpec p;
    const auto report = run_block_prompt(t, AttentionModel::for_trace(t), p, 7, 5);
    const auto rows = simulation_rows(report);
    ASSERT_EQ(rows.size(), 10u);
    const std::string text = format_csv(rows, CsvSchema::Simulation);
    EXPECT_EQ(parse_csv(text, CsvSchema::Simulation), rows);
    EXPECT_EQ(format_csv(simulation_rows(run_block_prompt(t, AttentionModel::for_trace(t), p, 7, 5)),
                         CsvSchema::Simulation),
              text);

    const auto recs = report.block_records();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(parse_id_list(std::get<std::string>(rows[i][7])), recs[i].retained_time_ids);
    }
}

TEST(CsvIdList, RoundTripAndErrors) {
    const std::vector<std::int64_t> ids{0, 3, 17, 1024};
    EXPECT_EQ(format_id_list(ids), "0 3 17 1024");
    EXPECT_EQ(parse_id_list("0 3 17 1024"), ids);
    EXPECT_TRUE(parse_id_list("").empty());
    EXPECT_THROW(parse_id_list("1  2"), SchemaError);
    EXPECT_THROW(parse_id_list("1 2 "), SchemaError);
    EXPECT_THROW(parse_id_list("1,2"), SchemaError);
}

TEST(CsvConverters, BoundsAndDiversity) {
    const std::vector<VerificationSummary> s{{"orthonormal_cosine_sum", 5, 0, 0, 0, 1e-16},
                                             {"anchor_similarity_bound", 0, 0, 0, 0, std::nullopt}};
    EXPECT_EQ(format_csv(bounds_rows(s), CsvSchema::Bounds),
              "check,instances,violations,max_slack\r\northonormal_cosine_sum,5,0,9.9999999999999998e-17\r\n"
              "anchor_similarity_bound,0,0,\r\n");
    const DiversityReport d{1.5, -kInf, std::nullopt};
    EXPECT_EQ(format_csv(std::vector<CsvRow>{diversity_row("sink", d)}, CsvSchema::Diversity),
              "policy,logdet_before,logdet_after,mean_cos_after\r\nsink,1.5,-inf,\r\n");
}
