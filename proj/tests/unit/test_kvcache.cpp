// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <algorithm>

#include "generators.hpp"
#include "kvevict/errors.hpp"
#include "kvevict/kvcache.hpp"

using namespace kvevict;
using namespace kvevict::testing;

namespace {

std::vector<std::int64_t> ids(const KVCache& c) { return {c.time_ids().begin(), c.time_ids().end()}; }

}  // namespace

TEST(KVCacheAppend, EmptyPlusThree) {
    Rng rng(1);
    KVCache c(4, 8);
    c.append(random_mat(rng, 3, 4), random_mat(rng, 3, 4), 0);
    EXPECT_EQ(c.size(), 3u);
    EXPECT_EQ(ids(c), (std::vector<std::int64_t>{0, 1, 2}));
    EXPECT_EQ(c.side_state().accumulator, (std::vector<double>(3, 0.0)));
}

TEST(KVCacheAppend, GrowsAndMayExceedBudget) {
    Rng rng(2);
    KVCache c(2, 5);
    c.append(random_mat(rng, 4, 2), random_mat(rng, 4, 2), 0);
    c.append(random_mat(rng, 2, 2), random_mat(rng, 2, 2), 4);
    EXPECT_EQ(c.size(), 6u);
    EXPECT_TRUE(c.over_budget());
}

TEST(KVCacheAppend, RejectsOutOfOrderPositions) {
    Rng rng(3);
    KVCache c(2, 16);
    c.append(random_mat(rng, 6, 2), random_mat(rng, 6, 2), 0);  // last time id 5
    EXPECT_THROW(c.append(random_mat(rng, 1, 2), random_mat(rng, 1, 2), 3), OrderError);
    EXPECT_THROW(c.append(random_mat(rng, 1, 2), random_mat(rng, 1, 2), 5), OrderError);
    EXPECT_NO_THROW(c.append(random_mat(rng, 1, 2), random_mat(rng, 1, 2), 9));  // gaps are fine
}

TEST(KVCacheAppend, RejectsShapeProblems) {
    Rng rng(4);
    KVCache c(3, 4);
    EXPECT_THROW(c.append(random_mat(rng, 2, 2), random_mat(rng, 2, 2), 0), DimError);
    EXPECT_THROW(c.append(random_mat(rng, 2, 3), random_mat(rng, 1, 3), 0), DimError);
    EXPECT_THROW(KVCache(0, 4), DimError);
}

TEST(KVCacheGather, FullSetIsIdentity) {
    Rng rng(5);
    KVCache c(3, 4);
    c.append(random_mat(rng, 5, 3), random_mat(rng, 5, 3), 0);
    c.side_state().accumulator = {1, 2, 3, 4, 5};
    EXPECT_EQ(c.gather(std::vector<std::size_t>{0, 1, 2, 3, 4}), c);
    EXPECT_EQ(c.gather(std::vector<std::size_t>{4, 2, 0, 1, 3}), c);  // order of the request does not matter
}

TEST(KVCacheGather, EmptySelection) {
    Rng rng(6);
    KVCache c(3, 4);
    c.append(random_mat(rng, 5, 3), random_mat(rng, 5, 3), 0);
    const KVCache e = c.gather(std::vector<std::size_t>{});
    EXPECT_EQ(e.size(), 0u);
    EXPECT_EQ(e.dim(), 3u);
    EXPECT_EQ(e.keys().rows(), 0u);
}

TEST(KVCacheGather, MatchesListFilterOracle) {
    for_each_case(7, 50, [](Rng& rng, std::size_t) {
        const std::size_t n = pick(rng, 1, 20);
        KVCache c(3, n);
        c.append(random_mat(rng, n, 3), random_mat(rng, n, 3), static_cast<std::int64_t>(pick(rng, 0, 100)));
        std::vector<double> acc(n);
        for (double& a : acc) {
            a = rng.uniform();
        }
        c.side_state().accumulator = acc;

        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.4) {
                keep.push_back(i);
            }
        }
        auto shuffled = keep;
        std::reverse(shuffled.begin(), shuffled.end());
        const KVCache g = c.gather(shuffled);

        ASSERT_EQ(g.size(), keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
            const std::size_t src = keep[r];
            EXPECT_EQ(g.time_ids()[r], c.time_ids()[src]);
            EXPECT_TRUE(std::ranges::equal(g.keys().row(r), c.keys().row(src)));
            EXPECT_TRUE(std::ranges::equal(g.values().row(r), c.values().row(src)));
            EXPECT_EQ(g.side_state().accumulator[r], acc[src]);
        }
        EXPECT_TRUE(std::ranges::is_sorted(g.time_ids()));
    });
}

TEST(KVCacheGather, RejectsDuplicatesAndOutOfRange) {
    Rng rng(8);
    KVCache c(2, 4);
    c.append(random_mat(rng, 3, 2), random_mat(rng, 3, 2), 0);
    EXPECT_THROW(c.gather(std::vector<std::size_t>{1, 1}), IndexError);
    EXPECT_THROW(c.gather(std::vector<std::size_t>{3}), IndexError);
}

TEST(KVCacheGather, RetainIsInPlaceGather) {
    Rng rng(9);
    KVCache c(2, 4);
    c.append(random_mat(rng, 6, 2), random_mat(rng, 6, 2), 10);
    const std::vector<std::size_t> keep{1, 4, 5};
    const KVCache expected = c.gather(keep);
    c.retain(keep);
    EXPECT_EQ(c, expected);
    EXPECT_EQ(ids(c), (std::vector<std::int64_t>{11, 14, 15}));
}
