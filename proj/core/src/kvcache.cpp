// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/kvcache.hpp"

#include <algorithm>
#include <string>

#include "kvevict/errors.hpp"

namespace kvevict {

KVCache::KVCache(std::size_t head_dim, std::size_t budget)
    : m_dim(head_dim), m_budget(budget), m_keys(0, head_dim), m_values(0, head_dim) {
    if (head_dim == 0) {
        throw DimError("KVCache: head_dim must be positive");
    }
}

void KVCache::append(const Mat& new_keys, const Mat& new_values, std::int64_t start_pos) {
    if (new_keys.rows() == 0 || new_keys.rows() != new_values.rows()) {
        throw DimError("KVCache::append: key/value blocks must have the same positive row count");
    }
    if (new_keys.cols() != m_dim || new_values.cols() != m_dim) {
        throw DimError("KVCache::append: block width does not match head_dim " + std::to_string(m_dim));
    }
    if (start_pos < 0) {
        throw OrderError("KVCache::append: negative start position");
    }
    if (!m_time_ids.empty() && start_pos <= m_time_ids.back()) {
        throw OrderError("KVCache::append: start position " + std::to_string(start_pos) +
                         " does not follow last cached position " + std::to_string(m_time_ids.back()));
    }
    m_keys.append_rows(new_keys);
    m_values.append_rows(new_values);
    for (std::size_t i = 0; i < new_keys.rows(); ++i) {
        m_time_ids.push_back(start_pos + static_cast<std::int64_t>(i));
    }
    m_side.accumulator.resize(m_time_ids.size(), 0.0);
}

KVCache KVCache::gather(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> sorted(indices.begin(), indices.end());
    std::ranges::sort(sorted);
    if (std::ranges::adjacent_find(sorted) != sorted.end()) {
        throw IndexError("KVCache::gather: duplicate index");
    }
    if (!sorted.empty() && sorted.back() >= size()) {
        throw IndexError("KVCache::gather: index " + std::to_string(sorted.back()) + " out of range for size " +
                         std::to_string(size()));
    }

    KVCache out(m_dim, m_budget);
    out.m_keys = m_keys.gather_rows(sorted);
    out.m_values = m_values.gather_rows(sorted);
    out.m_time_ids.reserve(sorted.size());
    out.m_side.accumulator.reserve(sorted.size());
    for (std::size_t i : sorted) {
        out.m_time_ids.push_back(m_time_ids[i]);
        out.m_side.accumulator.push_back(m_side.accumulator[i]);
    }
    out.m_side.eviction_rounds = m_side.eviction_rounds;
    return out;
}

}  // namespace kvevict
