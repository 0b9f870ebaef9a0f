// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/kvcache.hpp"
#include "kvevict/numerics.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

// ---------------------------------------------------------------------------
// Subset selection oracles

inline constexpr std::size_t kMaxEnumerationKeys = 16;

struct SubsetSolution {
    std::vector<std::size_t> indices;  // ascending, size N
    double objective = 0.0;            // sum over i, j in S of CosSim_ij (diagonal included)
};

/// sum_{i,j in S} CosSim(K)_ij, computed from the keys.
double subset_cos_objective(const Mat& keys, std::span<const std::size_t> subset);

/// Exact minimizer of the pairwise-cosine subset objective over all C(n, N)
/// subsets; the lexicographically first optimum wins ties. Throws SizeError for n > 16.
SubsetSolution brute_force_subset(const Mat& keys, std::size_t budget);

/// sum_{i in S} khat_i . mean(khat): the linearized objective that the anchor
/// form of KeyDiff minimizes by sorting.
double relaxed_objective(const Mat& keys, std::span<const std::size_t> subset);

/// Calls fn(subset) for every size-k subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
    if (k > n) {
        return;
    }
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) {
        idx[i] = i;
    }
    while (true) {
        fn(std::span<const std::size_t>(idx));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + (i - 1)) {
            --i;
        }
        if (i == 0) {
            return;
        }
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// FLOP model of the anchor-form KeyDiff score

/// Per-operation costs; defaults follow x86 instruction-table latencies.
struct FlopWeights {
    std::uint64_t mul = 3;
    std::uint64_t add = 1;
    std::uint64_t div = 47;
    std::uint64_t sqrt = 1;
};

struct FlopReport {
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    std::uint64_t mults = 0;
    std::uint64_t adds = 0;
    std::uint64_t divs = 0;
    std::uint64_t sqrts = 0;
    std::uint64_t weighted_total = 0;
};

/// Operation counts for the normalized-mean anchor plus n anchor cosines.
FlopReport flop_count_keydiff(std::uint64_t n, std::uint64_t d, const FlopWeights& weights = {});

/// (12d + 97) n + 3d + 94, valid for the default weights only.
std::uint64_t flop_closed_form(std::uint64_t n, std::uint64_t d);

// ---------------------------------------------------------------------------
// Scaling benchmark

struct ScalingPoint {
    std::size_t n = 0;
    double median_seconds = 0.0;
};

struct ScalingResult {
    std::size_t d = 0;
    std::size_t trials = 0;
    std::vector<ScalingPoint> points;
    double slope = 0.0;  // least-squares slope of log(time) against log(n)
};

/// Median wall-clock time of one score() call per n. Each trial repeats the
/// call until at least `min_trial_seconds` elapse. Runs on the calling thread
/// only; timings are meaningless when other work shares the core.
ScalingResult scaling_bench(const PolicySpec& policy, std::span<const std::size_t> n_grid, std::size_t d,
                            std::size_t trials, std::uint64_t seed = 0, double min_trial_seconds = 2e-3);

double loglog_slope(std::span<const ScalingPoint> points);

// ---------------------------------------------------------------------------
// Diversity and correlation

/// Mean off-diagonal pairwise cosine; empty for fewer than two keys.
std::optional<double> mean_pairwise_cos(const Mat& keys);

struct DiversityReport {
    double logdet_before = 0.0;
    double logdet_after = 0.0;
    std::optional<double> mean_cos_after;
};

DiversityReport diversity_report(const KVCache& before, const KVCache& after);

struct CorrelationRow {
    std::size_t layer = 0;
    std::size_t head = 0;  // kv head; attention is averaged over its query group
    std::optional<double> rho;
};

/// Spearman rho, per (layer, kv head), between each key's dissimilarity
/// (minus its mean cosine to the other keys) and the mean causal attention
/// weight it receives (column mean over rows that may attend to it).
/// Streams shorter than 8 tokens or with constant scores yield an empty rho.
std::vector<CorrelationRow> correlation_report(const TokenTrace& trace, const AttentionModel& model);

/// The two per-key series correlation_report ranks, for one stream.
struct KeyAttentionSeries {
    std::vector<double> dissimilarity;
    std::vector<double> mean_attention;
};
KeyAttentionSeries key_attention_series(const TokenTrace& trace, const AttentionModel& model, std::size_t layer,
                                        std::size_t kv_head);

}  // namespace kvevict
