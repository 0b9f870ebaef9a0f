// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "kvevict/errors.hpp"
#include "kvevict/rng.hpp"

namespace kvevict {

namespace {

std::vector<double> row_norms(const Mat& keys) {
    std::vector<double> norms(keys.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        norms[i] = l2_norm(keys.row(i));
    }
    return norms;
}

void check_subset(std::span<const std::size_t> subset, std::size_t n) {
    for (std::size_t i : subset) {
        if (i >= n) {
            throw IndexError("subset index " + std::to_string(i) + " out of range " + std::to_string(n));
        }
    }
}

}  // namespace

double subset_cos_objective(const Mat& keys, std::span<const std::size_t> subset) {
    check_subset(subset, keys.rows());
    const auto norms = row_norms(keys);
    double total = 0.0;
    for (std::size_t a : subset) {
        for (std::size_t b : subset) {
            total += a == b ? 1.0
                            : std::clamp(dot(keys.row(a), keys.row(b)) / std::max(norms[a] * norms[b], kCosEps),
                                         -1.0, 1.0);
        }
    }
    return total;
}

SubsetSolution brute_force_subset(const Mat& keys, std::size_t budget) {
    const std::size_t n = keys.rows();
    if (n > kMaxEnumerationKeys) {
        throw SizeError("brute_force_subset: n=" + std::to_string(n) + " exceeds enumeration cap " +
                        std::to_string(kMaxEnumerationKeys));
    }
    if (budget > n) {
        throw SizeError("brute_force_subset: budget exceeds key count");
    }
    const Mat cos = pairwise_cos_sim(keys);
    SubsetSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    for_each_subset(n, budget, [&](std::span<const std::size_t> s) {
        double total = 0.0;
        for (std::size_t a : s) {
            for (std::size_t b : s) {
                total += cos(a, b);
            }
        }
        if (total < best.objective) {
            best.objective = total;
            best.indices.assign(s.begin(), s.end());
        }
    });
    if (budget == 0) {
        best.objective = 0.0;
    }
    return best;
}

double relaxed_objective(const Mat& keys, std::span<const std::size_t> subset) {
    check_subset(subset, keys.rows());
    if (subset.empty()) {
        return 0.0;
    }
    const auto anchor = anchor_vector(keys, Anchor::MeanNormalized);
    double total = 0.0;
    for (std::size_t i : subset) {
        const auto k = keys.row(i);
        total += dot(k, anchor) / std::max(l2_norm(k), kCosEps);
    }
    return total;
}

FlopReport flop_count_keydiff(std::uint64_t n, std::uint64_t d, const FlopWeights& w) {
    if (n == 0 || d == 0) {
        throw DomainError("flop_count_keydiff: n and d must be positive");
    }
    FlopReport r;
    r.n = n;
    r.d = d;
    // Anchor mean(k_i / |k_i|): norms (nd mul, n(d-1) add, n sqrt), scaling by
    // one reciprocal per key (nd mul, n div), mean ((n-1)d add, 1 div).
    const std::uint64_t anchor_mul = 2 * n * d;
    const std::uint64_t anchor_add = 2 * n * d - n - d;
    const std::uint64_t anchor_div = n + 1;
    const std::uint64_t anchor_sqrt = n;
    // Cosines: dots (nd mul, n(d-1) add), |anchor| (d mul, d-1 add, 1 sqrt),
    // |a||k_i| (n mul), max with eps (n add), quotients (n+1 div).
    const std::uint64_t cos_mul = n * d + d + n;
    const std::uint64_t cos_add = n * d + d - 1;
    const std::uint64_t cos_div = n + 1;
    const std::uint64_t cos_sqrt = 1;

    r.mults = anchor_mul + cos_mul;
    r.adds = anchor_add + cos_add;
    r.divs = anchor_div + cos_div;
    r.sqrts = anchor_sqrt + cos_sqrt;
    r.weighted_total = w.mul * r.mults + w.add * r.adds + w.div * r.divs + w.sqrt * r.sqrts;
    return r;
}

std::uint64_t flop_closed_form(std::uint64_t n, std::uint64_t d) { return (12 * d + 97) * n + 3 * d + 94; }

double loglog_slope(std::span<const ScalingPoint> points) {
    if (points.size() < 2) {
        throw DomainError("loglog_slope: need at least two points");
    }
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& p : points) {
        sx += std::log(static_cast<double>(p.n));
        sy += std::log(p.median_seconds);
    }
    const double m = static_cast<double>(points.size());
    const double mx = sx / m;
    const double my = sy / m;
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& p : points) {
        const double x = std::log(static_cast<double>(p.n)) - mx;
        sxy += x * (std::log(p.median_seconds) - my);
        sxx += x * x;
    }
    if (sxx == 0.0) {
        throw DomainError("loglog_slope: all n equal");
    }
    return sxy / sxx;
}

ScalingResult scaling_bench(const PolicySpec& policy, std::span<const std::size_t> n_grid, std::size_t d,
                            std::size_t trials, std::uint64_t seed, double min_trial_seconds) {
    if (!std::ranges::is_sorted(n_grid)) {
        throw ConfigError("scaling_bench: n grid must be ascending");
    }
    if (trials == 0 || d == 0) {
        throw ConfigError("scaling_bench: trials and d must be positive");
    }
    using clock = std::chrono::steady_clock;
    ScalingResult result;
    result.d = d;
    result.trials = trials;
    volatile double sink = 0.0;

    for (std::size_t n : n_grid) {
        Rng rng(seed ^ n);
        std::vector<double> data(n * d);
        for (double& x : data) {
            x = rng.normal();
        }
        const Mat keys(n, d, std::move(data));
        std::vector<std::int64_t> time_ids(n);
        std::iota(time_ids.begin(), time_ids.end(), std::int64_t{0});
        const std::vector<double> accumulator(n, 0.0);
        const Mat attention(1, n, std::vector<double>(n, 1.0 / static_cast<double>(n)));

        ScoringContext ctx;
        ctx.keys = &keys;
        ctx.time_ids = time_ids;
        ctx.block_attention = &attention;
        ctx.accumulator = accumulator;
        ctx.budget = std::max<std::size_t>(n / 2, policy.sink_count + 1);
        policy.validate(ctx.budget);

        std::vector<double> samples;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t reps = 0;
            const auto start = clock::now();
            double elapsed = 0.0;
            do {
                const auto s = score(policy, ctx);
                sink = sink + s[0];
                ++reps;
                elapsed = std::chrono::duration<double>(clock::now() - start).count();
            } while (elapsed < min_trial_seconds);
            samples.push_back(elapsed / static_cast<double>(reps));
        }
        std::ranges::sort(samples);
        const std::size_t mid = samples.size() / 2;
        const double median =
            samples.size() % 2 == 1 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
        result.points.push_back({n, median});
    }
    result.slope = result.points.size() >= 2 ? loglog_slope(result.points) : 0.0;
    return result;
}

std::optional<double> mean_pairwise_cos(const Mat& keys) {
    const std::size_t n = keys.rows();
    if (n < 2) {
        return std::nullopt;
    }
    const Mat c = pairwise_cos_sim(keys);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) {
                total += c(i, j);
            }
        }
    }
    return total / static_cast<double>(n * (n - 1));
}

DiversityReport diversity_report(const KVCache& before, const KVCache& after) {
    if (before.size() == 0 || after.size() == 0) {
        throw DimError("diversity_report: caches must be nonempty");
    }
    DiversityReport r;
    r.logdet_before = log_det_gram(before.keys());
    r.logdet_after = log_det_gram(after.keys());
    r.mean_cos_after = mean_pairwise_cos(after.keys());
    return r;
}

KeyAttentionSeries key_attention_series(const TokenTrace& trace, const AttentionModel& model, std::size_t layer,
                                        std::size_t kv_head) {
    const Mat& keys = trace.key(layer, kv_head);
    const std::size_t T = keys.rows();
    const std::size_t g = model.group_size();

    KeyAttentionSeries out;
    out.mean_attention.assign(T, 0.0);
    for (std::size_t qi = 0; qi < g; ++qi) {
        const Mat w = causal_attention_weights(trace.query(layer, kv_head * g + qi), keys, model.scale);
        for (std::size_t j = 0; j < T; ++j) {
            double col = 0.0;
            for (std::size_t i = j; i < T; ++i) {
                col += w(i, j);
            }
            out.mean_attention[j] += col / static_cast<double>(T - j) / static_cast<double>(g);
        }
    }

    const Mat cos = pairwise_cos_sim(keys);
    out.dissimilarity.resize(T);
    for (std::size_t i = 0; i < T; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
            if (j != i) {
                row += cos(i, j);
            }
        }
        out.dissimilarity[i] = T > 1 ? -row / static_cast<double>(T - 1) : 0.0;
    }
    return out;
}

std::vector<CorrelationRow> correlation_report(const TokenTrace& trace, const AttentionModel& model) {
    trace.validate();
    std::vector<CorrelationRow> rows;
    for (std::size_t layer = 0; layer < trace.layers; ++layer) {
        for (std::size_t h = 0; h < trace.kv_heads; ++h) {
            CorrelationRow row{layer, h, std::nullopt};
            if (trace.seq_len >= 8) {
                const auto series = key_attention_series(trace, model, layer, h);
                try {
                    row.rho = spearman_rho(series.dissimilarity, series.mean_attention);
                } catch (const UndefinedCorrelation&) {
                    row.rho = std::nullopt;
                }
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace kvevict
