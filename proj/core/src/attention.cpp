// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/attention.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "kvevict/errors.hpp"

namespace kvevict {

AttentionModel AttentionModel::make(std::size_t q_heads, std::size_t kv_heads, std::size_t head_dim) {
    AttentionModel m;
    m.num_q_heads = q_heads;
    m.num_kv_heads = kv_heads;
    m.head_dim = head_dim;
    m.scale = head_dim == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(head_dim));
    m.validate();
    return m;
}

AttentionModel AttentionModel::for_trace(const TokenTrace& trace) {
    return make(trace.q_heads, trace.kv_heads, trace.head_dim);
}

void AttentionModel::validate() const {
    if (num_q_heads == 0 || num_kv_heads == 0 || head_dim == 0) {
        throw DimError("AttentionModel: head counts and head_dim must be positive");
    }
    if (num_q_heads % num_kv_heads != 0) {
        throw DimError("AttentionModel: num_q_heads " + std::to_string(num_q_heads) +
                       " is not a multiple of num_kv_heads " + std::to_string(num_kv_heads));
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DimError("AttentionModel: scale must be positive");
    }
}

BlockResult attend_block(const KVCache& cache, std::span<const Mat> group_queries, const Mat& k_block,
                         const Mat& v_block, std::int64_t start_pos, const AttentionModel& model) {
    const std::size_t d = model.head_dim;
    const std::size_t B = k_block.rows();
    if (B == 0 || v_block.rows() != B) {
        throw DimError("attend_block: key and value blocks must have the same positive length");
    }
    if (group_queries.size() != model.group_size()) {
        throw DimError("attend_block: expected " + std::to_string(model.group_size()) + " query heads, got " +
                       std::to_string(group_queries.size()));
    }
    if (cache.dim() != d || k_block.cols() != d || v_block.cols() != d) {
        throw DimError("attend_block: width does not match head_dim " + std::to_string(d));
    }
    for (const Mat& q : group_queries) {
        if (q.rows() != B || q.cols() != d) {
            throw DimError("attend_block: query block shape mismatch");
        }
    }
    if (!cache.time_ids().empty() && cache.time_ids().back() >= start_pos) {
        throw OrderError("attend_block: block starts before the newest cached token");
    }

    const std::size_t n_cache = cache.size();
    const std::size_t n = n_cache + B;
    auto key_row = [&](std::size_t j) { return j < n_cache ? cache.keys().row(j) : k_block.row(j - n_cache); };
    auto value_row = [&](std::size_t j) {
        return j < n_cache ? cache.values().row(j) : v_block.row(j - n_cache);
    };

    // Query r sits at start_pos + r: all cached columns plus block columns c <= r.
    Mask mask(B, n, true);
    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t c = r + 1; c < B; ++c) {
            mask.set(r, n_cache + c, false);
        }
    }

    BlockResult result;
    result.aggregated_attention = Mat(B, n);
    const double inv_group = 1.0 / static_cast<double>(group_queries.size());
    Mat logits(B, n);
    for (const Mat& q : group_queries) {
        for (std::size_t r = 0; r < B; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                logits(r, j) = mask.allowed(r, j) ? dot(q.row(r), key_row(j)) * model.scale : 0.0;
            }
        }
        const Mat weights = softmax_masked(logits, mask);
        Mat out(B, d);
        for (std::size_t r = 0; r < B; ++r) {
            auto o = out.row(r);
            for (std::size_t j = 0; j < n; ++j) {
                const double w = weights(r, j);
                if (w == 0.0) {
                    continue;
                }
                const auto v = value_row(j);
                for (std::size_t c = 0; c < d; ++c) {
                    o[c] += w * v[c];
                }
                result.aggregated_attention(r, j) += w * inv_group;
            }
        }
        result.outputs.push_back(std::move(out));
    }
    return result;
}

std::vector<BlockRecord> SimulationReport::block_records() const {
    std::vector<BlockRecord> out;
    for (const auto& s : streams) {
        out.insert(out.end(), s.blocks.begin(), s.blocks.end());
    }
    return out;
}

namespace {

Mat row_slice(const Mat& m, std::size_t begin, std::size_t count) {
    std::vector<double> data(m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
                             m.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * m.cols()));
    return Mat(count, m.cols(), std::move(data));
}

void check_trace_matches(const TokenTrace& trace, const AttentionModel& model) {
    trace.validate();
    model.validate();
    if (trace.head_dim != model.head_dim || trace.q_heads != model.num_q_heads ||
        trace.kv_heads != model.num_kv_heads) {
        throw DimError("trace geometry (q_heads=" + std::to_string(trace.q_heads) +
                       ", kv_heads=" + std::to_string(trace.kv_heads) + ", d=" + std::to_string(trace.head_dim) +
                       ") does not match the attention model");
    }
}

}  // namespace

StreamResult run_stream(const TokenTrace& trace, std::size_t layer, std::size_t kv_head,
                        const AttentionModel& model, const PolicySpec& policy, std::size_t budget,
                        std::size_t block, const BlockHook& hook) {
    check_trace_matches(trace, model);
    if (block == 0) {
        throw ConfigError("block size must be at least 1");
    }
    if (budget == 0) {
        throw ConfigError("cache budget must be at least 1");
    }
    if (layer >= trace.layers || kv_head >= trace.kv_heads) {
        throw IndexError("run_stream: stream (" + std::to_string(layer) + ", " + std::to_string(kv_head) +
                         ") out of range");
    }
    policy.validate(budget);

    const std::size_t T = trace.seq_len;
    const std::size_t g = model.group_size();
    StreamResult result;
    result.layer = layer;
    result.kv_head = kv_head;
    result.outputs.assign(g, Mat(T, model.head_dim));

    KVCache cache(model.head_dim, budget);
    const Mat& keys = trace.key(layer, kv_head);
    const Mat& values = trace.value(layer, kv_head);

    std::vector<Mat> group_q(g);
    for (std::size_t b = 0, start = 0; start < T; ++b, start += block) {
        const std::size_t len = std::min(block, T - start);
        const Mat k_block = row_slice(keys, start, len);
        const Mat v_block = row_slice(values, start, len);
        for (std::size_t qi = 0; qi < g; ++qi) {
            group_q[qi] = row_slice(trace.query(layer, kv_head * g + qi), start, len);
        }
        const auto pos = static_cast<std::int64_t>(start);

        BlockResult br = attend_block(cache, group_q, k_block, v_block, pos, model);
        for (std::size_t qi = 0; qi < g; ++qi) {
            for (std::size_t r = 0; r < len; ++r) {
                std::ranges::copy(br.outputs[qi].row(r), result.outputs[qi].row(start + r).begin());
            }
        }

        cache.append(k_block, v_block, pos);
        BlockRecord rec;
        rec.layer = layer;
        rec.kv_head = kv_head;
        rec.block = b;
        rec.start_pos = pos;
        rec.block_len = len;
        rec.cache_len_before = cache.size();
        evict(cache, policy, &br.aggregated_attention);
        rec.cache_len_after = cache.size();
        rec.retained_time_ids.assign(cache.time_ids().begin(), cache.time_ids().end());
        br.retained_time_ids = rec.retained_time_ids;
        if (hook) {
            hook(rec, cache, br);
        }
        result.blocks.push_back(std::move(rec));
    }
    result.final_cache = std::move(cache);
    return result;
}

SimulationReport run_block_prompt(const TokenTrace& trace, const AttentionModel& model, const PolicySpec& policy,
                                  std::size_t budget, std::size_t block, std::size_t workers,
                                  const BlockHook& hook) {
    check_trace_matches(trace, model);
    const std::size_t streams = trace.layers * trace.kv_heads;
    SimulationReport report;
    report.streams.resize(streams);
    std::vector<std::exception_ptr> errors(streams);

    auto run_one = [&](std::size_t s) {
        try {
            report.streams[s] =
                run_stream(trace, s / trace.kv_heads, s % trace.kv_heads, model, policy, budget, block, hook);
        } catch (...) {
            errors[s] = std::current_exception();
        }
    };

    const std::size_t pool = std::clamp<std::size_t>(workers, 1, streams);
    if (pool == 1) {
        for (std::size_t s = 0; s < streams; ++s) {
            run_one(s);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < pool; ++w) {
            threads.emplace_back([&] {
                for (std::size_t s = next++; s < streams; s = next++) {
                    run_one(s);
                }
            });
        }
        for (auto& t : threads) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return report;
}

Mat causal_attention_weights(const Mat& queries, const Mat& keys, double scale) {
    if (queries.rows() != keys.rows() || queries.cols() != keys.cols()) {
        throw DimError("causal_attention_weights: query and key streams differ in shape");
    }
    const std::size_t T = keys.rows();
    Mat logits(T, T);
    for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            logits(i, j) = dot(queries.row(i), keys.row(j)) * scale;
        }
    }
    return softmax_masked(logits, Mask::causal(T));
}

}  // namespace kvevict
