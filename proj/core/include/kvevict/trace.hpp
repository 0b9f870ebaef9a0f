// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvevict/numerics.hpp"

namespace kvevict {

enum class TraceSource { Synthetic, ModelDump };

std::string_view to_string(TraceSource source);

/// Post-projection, post-position-encoding key/query/value streams.
/// keys/values are indexed by layer * kv_heads + kv_head, queries by
/// layer * q_heads + q_head; each matrix is seq_len x head_dim.
struct TokenTrace {
    std::size_t layers = 0;
    std::size_t q_heads = 0;
    std::size_t kv_heads = 0;
    std::size_t head_dim = 0;
    std::size_t seq_len = 0;
    std::vector<Mat> keys;
    std::vector<Mat> values;
    std::vector<Mat> queries;
    TraceSource source = TraceSource::Synthetic;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> model_name;

    std::size_t group_size() const { return kv_heads == 0 ? 0 : q_heads / kv_heads; }

    const Mat& key(std::size_t layer, std::size_t kv_head) const { return keys[layer * kv_heads + kv_head]; }
    const Mat& value(std::size_t layer, std::size_t kv_head) const { return values[layer * kv_heads + kv_head]; }
    const Mat& query(std::size_t layer, std::size_t q_head) const { return queries[layer * q_heads + q_head]; }

    /// Throws DimError on any shape inconsistency.
    void validate() const;

    friend bool operator==(const TokenTrace&, const TokenTrace&) = default;
};

enum class OutlierPlacement {
    Leading,  // positions 0..k-1, sink-like
    Spread,   // evenly spaced through the stream
};

/// Parameters of the clustered-keys-plus-outliers generator.
struct SynthSpec {
    std::size_t seq_len = 64;
    std::size_t head_dim = 16;
    std::size_t layers = 1;
    std::size_t q_heads = 1;
    std::size_t kv_heads = 1;
    /// Concentration of bulk keys around their mean direction; per-token
    /// angular spread is uniform in [0, 1/sqrt(kappa)].
    double kappa = 0.5;
    std::size_t outliers = 2;
    OutlierPlacement placement = OutlierPlacement::Leading;
    /// Cosine between the key mean direction and the query mean direction.
    double key_query_cos = -0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Parses "T=64,d=16,outliers=2,..." on top of `base`. Recognized keys:
/// T, d, layers, q_heads, kv_heads, kappa, outliers, placement (leading|spread),
/// kq_cos, seed. Throws ConfigError.
SynthSpec parse_synth_spec(std::string_view text, SynthSpec base = {});

std::vector<std::size_t> synth_outlier_positions(const SynthSpec& spec);

/// Deterministic for a given spec (including seed).
TokenTrace synth_trace(const SynthSpec& spec);

}  // namespace kvevict
