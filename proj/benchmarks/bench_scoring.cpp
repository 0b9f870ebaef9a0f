// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <benchmark/benchmark.h>

#include <numeric>

#include "kvevict/numerics.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/rng.hpp"

namespace {

using namespace kvevict;

Mat gaussian_keys(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> data(n * d);
    for (double& x : data) {
        x = rng.normal();
    }
    return Mat(n, d, std::move(data));
}

void BM_KeyDiffEfficient(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Mat keys = gaussian_keys(n, 128, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(score_keydiff_efficient(keys, Anchor::MeanNormalized));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KeyDiffEfficient)->RangeMultiplier(2)->Range(256, 16384)->Complexity(benchmark::oN);

void BM_KeyDiffPairwise(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Mat keys = gaussian_keys(n, 128, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(score_keydiff_pairwise(keys));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KeyDiffPairwise)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oNSquared);

void BM_TopK(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    std::vector<double> scores(n);
    for (double& s : scores) {
        s = rng.uniform();
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(topk_indices(scores, n / 2));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TopK)->RangeMultiplier(4)->Range(1024, 262144)->Complexity(benchmark::oN);

void BM_EvictBlock(benchmark::State& state) {
    const auto budget = static_cast<std::size_t>(state.range(0));
    const std::size_t block = 128;
    const std::size_t d = 128;
    const Mat keys = gaussian_keys(budget + block, d, 3);
    const Mat values = gaussian_keys(budget + block, d, 4);
    PolicySpec policy;
    for (auto _ : state) {
        state.PauseTiming();
        KVCache cache(d, budget);
        cache.append(keys, values, 0);
        state.ResumeTiming();
        benchmark::DoNotOptimize(evict(cache, policy));
    }
}
BENCHMARK(BM_EvictBlock)->Arg(512)->Arg(2048)->Arg(8192);

}  // namespace

BENCHMARK_MAIN();
