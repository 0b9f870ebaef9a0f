// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "kvevict/csv.hpp"
#include "sha256.hpp"

using namespace kvevict;
using namespace kvevict::testing;

namespace {

struct RunResult {
    int code = 0;
    std::string out;
    std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        m_dir = std::filesystem::temp_directory_path() /
                ("kvevict_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::create_directories(m_dir);
        setenv("KVEVICT_WORKERS", "2", 1);
    }
    void TearDown() override {
        std::filesystem::remove_all(m_dir);
        unsetenv("KVEVICT_WORKERS");
    }
    std::string path(const std::string& name) const { return (m_dir / name).string(); }

    std::filesystem::path m_dir;
};

}  // namespace

TEST_F(CliTest, SimulateWritesOneRowPerBlock) {
    const auto r = run_cli({"simulate", "--synth", "T=64,d=16", "--budget", "16", "--block", "8"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto rows = parse_csv(r.out, CsvSchema::Simulation);
    ASSERT_EQ(rows.size(), 8u);
    for (const auto& row : rows) {
        EXPECT_LE(std::get<std::int64_t>(row[6]), 16);
    }
}

TEST_F(CliTest, SimulateIsDeterministic) {
    const std::vector<std::string> args{"simulate", "--synth", "T=100,d=8,layers=2,q_heads=4,kv_heads=2",
                                        "--policy", "random", "--budget", "20", "--block", "7", "--seed", "3",
                                        "--out"};
    auto a = args;
    a.push_back(path("a.csv"));
    auto b = args;
    b.push_back(path("b.csv"));
    ASSERT_EQ(run_cli(a).code, 0);
    setenv("KVEVICT_WORKERS", "1", 1);
    ASSERT_EQ(run_cli(b).code, 0);
    EXPECT_EQ(read_file_bytes(path("a.csv")), read_file_bytes(path("b.csv")));
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
    EXPECT_EQ(run_cli({"simulate", "--synth", "T=32", "--budget", "0"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"simulate", "--synth", "T=32", "--budget", "8", "--policy", "lru"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"simulate", "--budget", "8", "--bogus"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"verify-theory", "--inject-fault", "zero"}).code, cli::kExitConfig);
    setenv("KVEVICT_WORKERS", "abc", 1);
    EXPECT_EQ(run_cli({"simulate", "--synth", "T=32", "--budget", "8"}).code, cli::kExitConfig);
    setenv("KVEVICT_WORKERS", "0", 1);
    EXPECT_EQ(run_cli({"simulate", "--synth", "T=32", "--budget", "8"}).code, cli::kExitConfig);
}

TEST_F(CliTest, MissingTraceExitsThree) {
    const auto r = run_cli({"simulate", "--trace", path("absent.kvtr"), "--budget", "8"});
    EXPECT_EQ(r.code, cli::kExitIo);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, HelpExitsZero) {
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, CompareSinglePolicyOverlapsItself) {
    const auto r = run_cli({"compare", "--synth", "T=64", "--policies", "keydiff", "--budget", "16", "--block", "8"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out, CsvSchema::Overlap);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(std::get<double>(rows[0][2]), 1.0);
    EXPECT_EQ(std::get<double>(rows[0][3]), 1.0);
}

TEST_F(CliTest, CompareMatrixAndDiversity) {
    const auto r = run_cli({"compare", "--synth", "T=96,d=16", "--policies",
                            "keydiff:anchor=mean-normalized,keydiff-pairwise,sink:sink=2,sink:sink=2", "--budget",
                            "24", "--block", "8", "--seeds", "3", "--diversity-out", path("div.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out, CsvSchema::Overlap);
    ASSERT_EQ(rows.size(), 16u);
    // Normalized-anchor and pairwise KeyDiff rank keys identically.
    EXPECT_EQ(std::get<double>(rows[1][3]), 1.0);
    EXPECT_EQ(std::get<double>(rows[2 * 4 + 3][2]), 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(rows[i * 4 + j][2], rows[j * 4 + i][2]);
        }
    }
    const auto div = read_file_bytes(path("div.csv"));
    const auto drows = parse_csv(std::string(div.begin(), div.end()), CsvSchema::Diversity);
    ASSERT_EQ(drows.size(), 4u);
    EXPECT_EQ(drows[2][1], drows[0][1]);  // same "before" for every policy
}

TEST_F(CliTest, VerifyTheory) {
    const auto empty = run_cli({"verify-theory", "--instances", "0"});
    EXPECT_EQ(empty.code, 0);
    EXPECT_EQ(empty.out, csv_header(CsvSchema::Bounds) + "\r\n");

    const auto ok = run_cli({"verify-theory", "--instances", "200", "--seed", "4"});
    EXPECT_EQ(ok.code, 0) << ok.err;
    const auto rows = parse_csv(ok.out, CsvSchema::Bounds);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(std::get<std::string>(rows[0][0]), "attention_weight_bound");
    EXPECT_EQ(std::get<std::string>(rows[1][0]), "anchor_similarity_bound");
    EXPECT_EQ(std::get<std::string>(rows[2][0]), "orthonormal_cosine_sum");
    for (const auto& row : rows) {
        EXPECT_EQ(std::get<std::int64_t>(row[2]), 0);
    }

    const auto bad = run_cli({"verify-theory", "--instances", "200", "--inject-fault", "sign-flip"});
    EXPECT_EQ(bad.code, cli::kExitTheoryViolation);
}

TEST_F(CliTest, FlopsSpotValue) {
    const auto r = run_cli({"flops", "--n", "1024", "--d", "128"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "1672670\n");
    EXPECT_EQ(run_cli({"flops", "--n", "0", "--d", "4"}).code, cli::kExitNumeric);
}

TEST_F(CliTest, GenTraceIsReproducible) {
    ASSERT_EQ(run_cli({"gen-trace", "--synth", "T=40,d=8", "--seed", "7", "--out", path("a.kvtr")}).code, 0);
    ASSERT_EQ(run_cli({"gen-trace", "--synth", "T=40,d=8", "--seed", "7", "--out", path("b.kvtr")}).code, 0);
    EXPECT_EQ(sha256_hex(read_file_bytes(path("a.kvtr"))), sha256_hex(read_file_bytes(path("b.kvtr"))));

    const auto from_file = run_cli({"simulate", "--trace", path("a.kvtr"), "--budget", "10", "--block", "4"});
    ASSERT_EQ(from_file.code, 0) << from_file.err;
    EXPECT_EQ(parse_csv(from_file.out, CsvSchema::Simulation).size(), 10u);
}

TEST_F(CliTest, BenchSmallGrid) {
    const auto r = run_cli({"bench", "--policy", "keydiff-efficient", "--d", "4", "--n-min", "64", "--n-max", "256",
                            "--trials", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out, CsvSchema::Scaling);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(std::get<std::int64_t>(rows[2][1]), 256);
    EXPECT_NE(r.err.find("slope"), std::string::npos);
}

TEST_F(CliTest, Correlate) {
    const auto r = run_cli({"correlate", "--synth", "T=64,layers=2", "--scatter-out", path("s.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(parse_csv(r.out, CsvSchema::Correlation).size(), 2u);
    const auto s = read_file_bytes(path("s.csv"));
    EXPECT_EQ(parse_csv(std::string(s.begin(), s.end()), CsvSchema::KeyScatter).size(), 128u);
}
