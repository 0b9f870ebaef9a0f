// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvevict/numerics.hpp"

namespace kvevict {

/// Per-token state owned by stateful policies. Every per-token row here is
/// gathered together with keys and values so it never drifts out of alignment.
struct SideState {
    /// Running attention mass received by each cached token (H2O).
    std::vector<double> accumulator;
    /// Number of evict() calls that actually compacted the cache.
    std::uint64_t eviction_rounds = 0;

    friend bool operator==(const SideState&, const SideState&) = default;
};

/// Bounded key/value store for one (layer, kv-head) stream. Tokens are kept
/// in strictly increasing time order. The cache may exceed its budget between
/// append() and the eviction that follows it.
class KVCache {
public:
    KVCache(std::size_t head_dim, std::size_t budget);

    std::size_t size() const noexcept { return m_time_ids.size(); }
    std::size_t dim() const noexcept { return m_dim; }
    std::size_t budget() const noexcept { return m_budget; }
    bool over_budget() const noexcept { return size() > m_budget; }

    const Mat& keys() const noexcept { return m_keys; }
    const Mat& values() const noexcept { return m_values; }
    std::span<const std::int64_t> time_ids() const noexcept { return m_time_ids; }

    SideState& side_state() noexcept { return m_side; }
    const SideState& side_state() const noexcept { return m_side; }

    /// Adds a block of B tokens at positions start_pos .. start_pos+B-1.
    /// Throws OrderError if start_pos does not come after the newest cached token.
    void append(const Mat& new_keys, const Mat& new_values, std::int64_t start_pos);

    /// Cache restricted to `indices` (any order, no duplicates); retained
    /// tokens keep their original time ids and relative order.
    KVCache gather(std::span<const std::size_t> indices) const;

    /// In-place gather.
    void retain(std::span<const std::size_t> indices) { *this = gather(indices); }

    friend bool operator==(const KVCache&, const KVCache&) = default;

private:
    std::size_t m_dim;
    std::size_t m_budget;
    Mat m_keys;
    Mat m_values;
    std::vector<std::int64_t> m_time_ids;
    SideState m_side;
};

}  // namespace kvevict
