// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/policies.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "kvevict/errors.hpp"

namespace kvevict {

namespace {

constexpr std::array<std::pair<std::string_view, PolicyKind>, 12> kPolicyNames{{
    {"keydiff-pairwise", PolicyKind::KeyDiffPairwise},
    {"keydiff-efficient", PolicyKind::KeyDiffEfficient},
    {"keydiff-sliding", PolicyKind::KeyDiffSlidingWindow},
    {"tova", PolicyKind::Tova},
    {"h2o", PolicyKind::H2O},
    {"snapkv", PolicyKind::SnapKV},
    {"sink", PolicyKind::Sink},
    {"key-l2norm", PolicyKind::KeyL2Norm},
    {"no-evict", PolicyKind::NoEvict},
    {"random", PolicyKind::Random},
    // aliases
    {"keydiff", PolicyKind::KeyDiffEfficient},
    {"keydiff-sw", PolicyKind::KeyDiffSlidingWindow},
}};

const Mat& require_attention(const ScoringContext& ctx, const char* who) {
    if (ctx.block_attention == nullptr) {
        throw ContextError(std::string(who) + ": block attention required");
    }
    if (ctx.block_attention->cols() != ctx.size() || ctx.block_attention->rows() == 0) {
        throw ContextError(std::string(who) + ": attention has " + std::to_string(ctx.block_attention->cols()) +
                           " columns for " + std::to_string(ctx.size()) + " cached tokens");
    }
    return *ctx.block_attention;
}

std::vector<double> column_sums(const Mat& attention) {
    std::vector<double> sums(attention.cols(), 0.0);
    for (std::size_t i = 0; i < attention.rows(); ++i) {
        const auto row = attention.row(i);
        for (std::size_t j = 0; j < sums.size(); ++j) {
            sums[j] += row[j];
        }
    }
    return sums;
}

void mark_recent(ScoreVector& scores, std::size_t count) {
    const std::size_t n = scores.size();
    for (std::size_t i = n - std::min(count, n); i < n; ++i) {
        scores[i] = kInf;
    }
}

}  // namespace

void PolicySpec::validate(std::size_t budget) const {
    switch (kind) {
        case PolicyKind::KeyDiffSlidingWindow:
            sliding_window_size(window_fraction, budget);
            break;
        case PolicyKind::SnapKV:
            if (snap_kernel == 0 || snap_kernel % 2 == 0) {
                throw ConfigError("snapkv: kernel size must be odd, got " + std::to_string(snap_kernel));
            }
            break;
        case PolicyKind::Sink:
            if (budget <= sink_count) {
                throw ConfigError("sink: budget " + std::to_string(budget) + " must exceed sink count " +
                                  std::to_string(sink_count));
            }
            break;
        default:
            break;
    }
}

std::string PolicySpec::label() const {
    std::string out(to_string(kind));
    switch (kind) {
        case PolicyKind::KeyDiffEfficient:
            out += "(" + std::string(to_string(anchor)) + "," + std::string(to_string(metric)) + ")";
            break;
        case PolicyKind::KeyDiffSlidingWindow:
            out += "(" + std::to_string(window_fraction) + (window_over_pairwise ? ",pairwise)" : ")");
            break;
        case PolicyKind::SnapKV:
            out += "(" + std::to_string(snap_kernel) + "," + std::to_string(snap_recent) + ")";
            break;
        case PolicyKind::Sink:
            out += "(" + std::to_string(sink_count) + ")";
            break;
        case PolicyKind::Random:
            out += "(" + std::to_string(seed) + ")";
            break;
        default:
            break;
    }
    return out;
}

std::string_view to_string(PolicyKind kind) {
    for (const auto& [name, k] : kPolicyNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

std::string_view to_string(Anchor anchor) {
    switch (anchor) {
        case Anchor::MeanNormalized: return "mean-normalized";
        case Anchor::MeanRaw: return "mean-raw";
        case Anchor::Median: return "median";
    }
    return "unknown";
}

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::Cosine: return "cosine";
        case Metric::DotProduct: return "dot";
        case Metric::Euclidean: return "euclidean";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
    for (const auto& [n, k] : kPolicyNames) {
        if (n == name) {
            return k;
        }
    }
    throw ConfigError("unknown policy '" + std::string(name) + "'");
}

Anchor parse_anchor(std::string_view name) {
    for (Anchor a : {Anchor::MeanNormalized, Anchor::MeanRaw, Anchor::Median}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw ConfigError("unknown anchor '" + std::string(name) + "'");
}

Metric parse_metric(std::string_view name) {
    if (name == "dot-product") {
        return Metric::DotProduct;
    }
    for (Metric m : {Metric::Cosine, Metric::DotProduct, Metric::Euclidean}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown metric '" + std::string(name) + "'");
}

bool requires_attention(PolicyKind kind) {
    return kind == PolicyKind::Tova || kind == PolicyKind::H2O || kind == PolicyKind::SnapKV;
}

ScoringContext ScoringContext::of(const KVCache& cache, const Mat* block_attention) {
    ScoringContext ctx;
    ctx.keys = &cache.keys();
    ctx.time_ids = cache.time_ids();
    ctx.block_attention = block_attention;
    ctx.accumulator = cache.side_state().accumulator;
    ctx.budget = cache.budget();
    ctx.round = cache.side_state().eviction_rounds;
    return ctx;
}

ScoreVector score_keydiff_pairwise(const Mat& keys, bool include_diagonal) {
    const std::size_t n = keys.rows();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = l2_norm(keys.row(i));
    }
    std::vector<double> sums(n, include_diagonal ? 1.0 : 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ki = keys.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = std::clamp(dot(ki, keys.row(j)) / std::max(norms[i] * norms[j], kCosEps), -1.0, 1.0);
            sums[i] += c;
            sums[j] += c;
        }
    }
    for (double& s : sums) {
        s = -s;
    }
    return sums;
}

std::vector<double> anchor_vector(const Mat& keys, Anchor anchor) {
    const std::size_t n = keys.rows();
    const std::size_t d = keys.cols();
    if (n == 0) {
        throw DimError("anchor_vector: empty key set");
    }
    std::vector<double> a(d, 0.0);
    switch (anchor) {
        case Anchor::MeanNormalized:
        case Anchor::MeanRaw:
            for (std::size_t i = 0; i < n; ++i) {
                const auto k = keys.row(i);
                const double scale = anchor == Anchor::MeanNormalized ? 1.0 / std::max(l2_norm(k), kCosEps) : 1.0;
                for (std::size_t c = 0; c < d; ++c) {
                    a[c] += k[c] * scale;
                }
            }
            for (double& v : a) {
                v /= static_cast<double>(n);
            }
            break;
        case Anchor::Median: {
            std::vector<double> column(n);
            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t i = 0; i < n; ++i) {
                    column[i] = keys(i, c);
                }
                std::ranges::sort(column);
                a[c] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
            }
            break;
        }
    }
    return a;
}

ScoreVector score_keydiff_efficient(const Mat& keys, Anchor anchor, Metric metric) {
    const auto a = anchor_vector(keys, anchor);
    const double anchor_norm = l2_norm(a);
    ScoreVector scores(keys.rows());
    std::vector<double> diff(keys.cols());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        const auto k = keys.row(i);
        switch (metric) {
            case Metric::Cosine:
                scores[i] = -std::clamp(dot(a, k) / std::max(anchor_norm * l2_norm(k), kCosEps), -1.0, 1.0);
                break;
            case Metric::DotProduct:
                scores[i] = -dot(a, k);
                break;
            case Metric::Euclidean:
                for (std::size_t c = 0; c < diff.size(); ++c) {
                    diff[c] = a[c] - k[c];
                }
                scores[i] = l2_norm(diff);
                break;
        }
    }
    return scores;
}

std::size_t sliding_window_size(double window_fraction, std::size_t budget) {
    if (!(window_fraction > 0.0 && window_fraction < 1.0)) {
        throw ConfigError("sliding window fraction must lie in (0, 1), got " + std::to_string(window_fraction));
    }
    const auto w = static_cast<std::size_t>(std::floor(window_fraction * static_cast<double>(budget)));
    if (w < 1) {
        throw ConfigError("sliding window of " + std::to_string(window_fraction) + " x budget " +
                          std::to_string(budget) + " is empty");
    }
    if (w >= budget) {
        throw ConfigError("sliding window " + std::to_string(w) + " leaves no scored slots in budget " +
                          std::to_string(budget));
    }
    return w;
}

ScoreVector score_keydiff_sliding(ScoreVector base, double window_fraction, std::size_t budget) {
    mark_recent(base, sliding_window_size(window_fraction, budget));
    return base;
}

ScoreVector score_tova(const ScoringContext& ctx) {
    const Mat& attention = require_attention(ctx, "tova");
    const auto last = attention.row(attention.rows() - 1);
    return {last.begin(), last.end()};
}

ScoreVector score_h2o(const ScoringContext& ctx) {
    const Mat& attention = require_attention(ctx, "h2o");
    if (ctx.accumulator.size() != ctx.size()) {
        throw ContextError("h2o: accumulator has " + std::to_string(ctx.accumulator.size()) + " entries for " +
                           std::to_string(ctx.size()) + " cached tokens");
    }
    auto scores = column_sums(attention);
    for (std::size_t j = 0; j < scores.size(); ++j) {
        scores[j] += ctx.accumulator[j];
    }
    return scores;
}

std::vector<double> smooth_average(std::span<const double> values, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ConfigError("smoothing kernel must be odd, got " + std::to_string(kernel));
    }
    const std::size_t n = values.size();
    const std::size_t half = kernel / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        prefix[i + 1] = prefix[i] + values[i];
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

ScoreVector score_snapkv(const ScoringContext& ctx, std::size_t kernel, std::size_t recent) {
    const Mat& attention = require_attention(ctx, "snapkv");
    auto scores = smooth_average(column_sums(attention), kernel);
    mark_recent(scores, recent);
    return scores;
}

ScoreVector score_sink(const ScoringContext& ctx, std::size_t sink_count, std::size_t budget) {
    if (budget <= sink_count) {
        throw ConfigError("sink: budget " + std::to_string(budget) + " must exceed sink count " +
                          std::to_string(sink_count));
    }
    ScoreVector scores(ctx.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = i < sink_count ? kInf : static_cast<double>(ctx.time_ids[i]);
    }
    return scores;
}

ScoreVector score_key_l2norm(const Mat& keys) {
    ScoreVector scores(keys.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        scores[i] = -l2_norm(keys.row(i));
    }
    return scores;
}

ScoreVector score_random(std::size_t n, std::uint64_t seed, std::uint64_t round) {
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (round + 1)));
    ScoreVector scores(n);
    for (double& s : scores) {
        s = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    }
    return scores;
}

ScoreVector score(const PolicySpec& policy, const ScoringContext& ctx) {
    if (ctx.keys == nullptr || ctx.keys->rows() != ctx.size()) {
        throw ContextError("score: keys and time ids disagree");
    }
    const Mat& keys = *ctx.keys;
    switch (policy.kind) {
        case PolicyKind::KeyDiffPairwise:
            return score_keydiff_pairwise(keys);
        case PolicyKind::KeyDiffEfficient:
            return score_keydiff_efficient(keys, policy.anchor, policy.metric);
        case PolicyKind::KeyDiffSlidingWindow: {
            auto base = policy.window_over_pairwise ? score_keydiff_pairwise(keys)
                                                    : score_keydiff_efficient(keys, policy.anchor, policy.metric);
            return score_keydiff_sliding(std::move(base), policy.window_fraction, ctx.budget);
        }
        case PolicyKind::Tova:
            return score_tova(ctx);
        case PolicyKind::H2O:
            return score_h2o(ctx);
        case PolicyKind::SnapKV:
            return score_snapkv(ctx, policy.snap_kernel, policy.snap_recent);
        case PolicyKind::Sink:
            return score_sink(ctx, policy.sink_count, ctx.budget);
        case PolicyKind::KeyL2Norm:
            return score_key_l2norm(keys);
        case PolicyKind::NoEvict:
            return ScoreVector(ctx.size(), 0.0);
        case PolicyKind::Random:
            return score_random(ctx.size(), policy.seed, ctx.round);
    }
    throw ConfigError("score: unhandled policy");
}

EvictionResult evict(KVCache& cache, const PolicySpec& policy, const Mat* block_attention) {
    if (requires_attention(policy.kind)) {
        const auto ctx = ScoringContext::of(cache, block_attention);
        require_attention(ctx, std::string(to_string(policy.kind)).c_str());
    }

    if (policy.kind == PolicyKind::H2O) {
        // The accumulator absorbs every block's attention, whether or not the cache is full yet.
        auto updated = score_h2o(ScoringContext::of(cache, block_attention));
        cache.side_state().accumulator = std::move(updated);
    }

    EvictionResult result;
    if (!cache.over_budget()) {
        result.retained.resize(cache.size());
        for (std::size_t i = 0; i < cache.size(); ++i) {
            result.retained[i] = i;
        }
        return result;
    }
    if (policy.kind == PolicyKind::NoEvict) {
        throw ConfigError("no-evict: cache of " + std::to_string(cache.size()) + " tokens exceeds budget " +
                          std::to_string(cache.budget()));
    }

    ScoreVector scores;
    if (policy.kind == PolicyKind::H2O) {
        scores = cache.side_state().accumulator;
    } else {
        scores = score(policy, ScoringContext::of(cache, block_attention));
    }
    result.retained = topk_indices(scores, cache.budget());
    result.evicted = true;
    cache.retain(result.retained);
    ++cache.side_state().eviction_rounds;
    return result;
}

}  // namespace kvevict
