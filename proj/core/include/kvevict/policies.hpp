// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvevict/kvcache.hpp"
#include "kvevict/numerics.hpp"

namespace kvevict {

enum class PolicyKind {
    KeyDiffPairwise,
    KeyDiffEfficient,
    KeyDiffSlidingWindow,
    Tova,
    H2O,
    SnapKV,
    Sink,
    KeyL2Norm,
    NoEvict,
    Random,
};

/// Reference point the efficient KeyDiff variant measures keys against.
enum class Anchor { MeanNormalized, MeanRaw, Median };

/// Similarity between the anchor and a key. Euclidean is oriented so that a
/// key far from the anchor scores high (is retained).
enum class Metric { Cosine, DotProduct, Euclidean };

struct PolicySpec {
    PolicyKind kind = PolicyKind::KeyDiffEfficient;
    Anchor anchor = Anchor::MeanRaw;
    Metric metric = Metric::Cosine;
    double window_fraction = 0.20;
    /// Sliding-window variant scores the non-window tokens with pairwise KeyDiff instead of the anchor form.
    bool window_over_pairwise = false;
    std::size_t snap_kernel = 7;
    std::size_t snap_recent = 32;
    std::size_t sink_count = 4;
    std::uint64_t seed = 0;

    /// Throws ConfigError if the parameters cannot work with `budget`.
    void validate(std::size_t budget) const;

    /// Short human label, e.g. "keydiff-efficient(mean-raw,cosine)".
    std::string label() const;
};

std::string_view to_string(PolicyKind kind);
std::string_view to_string(Anchor anchor);
std::string_view to_string(Metric metric);
/// Accepts the CLI spellings ("keydiff", "keydiff-pairwise", "tova", "h2o", ...). Throws ConfigError.
PolicyKind parse_policy_kind(std::string_view name);
Anchor parse_anchor(std::string_view name);
Metric parse_metric(std::string_view name);

bool requires_attention(PolicyKind kind);

/// Everything a policy may look at when scoring a cache of n tokens.
struct ScoringContext {
    const Mat* keys = nullptr;                  // n x d
    std::span<const std::int64_t> time_ids;     // n
    const Mat* block_attention = nullptr;       // B x n, post-softmax, group-averaged
    std::span<const double> accumulator;        // n, H2O running sums (zeros for fresh tokens)
    std::size_t budget = 0;
    std::uint64_t round = 0;

    static ScoringContext of(const KVCache& cache, const Mat* block_attention = nullptr);
    std::size_t size() const noexcept { return time_ids.size(); }
};

/// -sum_j CosSim(K)_ij, including the diagonal unless told otherwise.
/// O(n^2 d) time, O(n) extra memory.
ScoreVector score_keydiff_pairwise(const Mat& keys, bool include_diagonal = true);

std::vector<double> anchor_vector(const Mat& keys, Anchor anchor);

/// -metric(anchor, k_i); O(n d).
ScoreVector score_keydiff_efficient(const Mat& keys, Anchor anchor = Anchor::MeanRaw, Metric metric = Metric::Cosine);

/// floor(fraction * budget); throws ConfigError unless 1 <= w < budget.
std::size_t sliding_window_size(double window_fraction, std::size_t budget);

/// Marks the w most recent tokens +inf, leaving the rest of `base` untouched.
ScoreVector score_keydiff_sliding(ScoreVector base, double window_fraction, std::size_t budget);

/// Last row of the block attention.
ScoreVector score_tova(const ScoringContext& ctx);

/// accumulator + column sums of the block attention.
ScoreVector score_h2o(const ScoringContext& ctx);

/// Same-length moving average; windows are truncated at the borders.
std::vector<double> smooth_average(std::span<const double> values, std::size_t kernel);

/// Smoothed column sums of the block attention; the `recent` newest tokens get +inf.
ScoreVector score_snapkv(const ScoringContext& ctx, std::size_t kernel = 7, std::size_t recent = 32);

/// First `sink_count` tokens +inf, everything else scored by its time id.
ScoreVector score_sink(const ScoringContext& ctx, std::size_t sink_count, std::size_t budget);

/// -|k_i|.
ScoreVector score_key_l2norm(const Mat& keys);

/// Uniform [0, 1) scores, a pure function of (n, seed, round).
ScoreVector score_random(std::size_t n, std::uint64_t seed, std::uint64_t round);

ScoreVector score(const PolicySpec& policy, const ScoringContext& ctx);

struct EvictionResult {
    bool evicted = false;
    /// Indices (into the pre-eviction cache) that survived.
    std::vector<std::size_t> retained;
};

/// Enforces the cache budget. Attention-based policies need the block's
/// group-averaged attention (B x cache.size()); H2O folds it into the
/// accumulator on every call, including calls that do not evict.
/// Throws ContextError when attention is missing or misaligned and
/// ConfigError when NoEvict is asked to shrink an over-budget cache.
EvictionResult evict(KVCache& cache, const PolicySpec& policy, const Mat* block_attention = nullptr);

}  // namespace kvevict
