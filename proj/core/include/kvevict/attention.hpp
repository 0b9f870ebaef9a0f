// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kvevict/kvcache.hpp"
#include "kvevict/numerics.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

/// Head geometry for grouped-query attention. Query head q reads kv head
/// q / group_size().
struct AttentionModel {
    std::size_t num_q_heads = 1;
    std::size_t num_kv_heads = 1;
    std::size_t head_dim = 0;
    double scale = 0.0;

    /// scale defaults to 1/sqrt(head_dim).
    static AttentionModel make(std::size_t q_heads, std::size_t kv_heads, std::size_t head_dim);
    static AttentionModel for_trace(const TokenTrace& trace);

    std::size_t group_size() const { return num_q_heads / num_kv_heads; }
    void validate() const;
};

struct BlockResult {
    /// One B x d output per query head of the group.
    std::vector<Mat> outputs;
    /// B x (cache + B) post-softmax weights averaged over the group's query heads.
    Mat aggregated_attention;
    /// Filled by the block driver after eviction.
    std::vector<std::int64_t> retained_time_ids;
};

/// Causal attention of a block of queries (one B x d matrix per query head in
/// the group) over the cache followed by the block itself. A query at
/// position t sees every cached token and block tokens at positions <= t.
/// The cache is not modified.
BlockResult attend_block(const KVCache& cache, std::span<const Mat> group_queries, const Mat& k_block,
                         const Mat& v_block, std::int64_t start_pos, const AttentionModel& model);

struct BlockRecord {
    std::size_t layer = 0;
    std::size_t kv_head = 0;
    std::size_t block = 0;
    std::int64_t start_pos = 0;
    std::size_t block_len = 0;
    std::size_t cache_len_before = 0;  // after append, before eviction
    std::size_t cache_len_after = 0;
    std::vector<std::int64_t> retained_time_ids;
};

struct StreamResult {
    std::size_t layer = 0;
    std::size_t kv_head = 0;
    std::vector<BlockRecord> blocks;
    /// Attention outputs for every position, one T x d matrix per query head of the group.
    std::vector<Mat> outputs;
    KVCache final_cache{1, 0};
};

struct SimulationReport {
    std::vector<StreamResult> streams;  // (layer, kv_head) order

    std::vector<BlockRecord> block_records() const;
};

/// Observes each block after its eviction. Called from worker threads when
/// more than one worker is used.
using BlockHook = std::function<void(const BlockRecord&, const KVCache&, const BlockResult&)>;

/// Block prompt processing for one (layer, kv_head) stream: for each block,
/// attend, append, then evict down to `budget`.
StreamResult run_stream(const TokenTrace& trace, std::size_t layer, std::size_t kv_head,
                        const AttentionModel& model, const PolicySpec& policy, std::size_t budget,
                        std::size_t block, const BlockHook& hook = {});

/// Runs every stream of the trace. Streams are independent and may run on up
/// to `workers` threads; results come back in (layer, kv_head) order.
SimulationReport run_block_prompt(const TokenTrace& trace, const AttentionModel& model, const PolicySpec& policy,
                                  std::size_t budget, std::size_t block, std::size_t workers = 1,
                                  const BlockHook& hook = {});

/// Full causal self-attention of one query head over a whole stream (T x T weights).
Mat causal_attention_weights(const Mat& queries, const Mat& keys, double scale);

}  // namespace kvevict
