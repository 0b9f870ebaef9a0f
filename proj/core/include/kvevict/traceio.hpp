// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kvevict/trace.hpp"

namespace kvevict {

// KVTR layout (little-endian throughout), see docs/kvtr-format.md:
//   "KVTR" | u32 version | u32 layers, q_heads, kv_heads, head_dim, seq_len | u8 dtype
//   per layer: per kv head keys[T][d] then values[T][d]; then per q head queries[T][d]   (f32)
//   u64 footer length | UTF-8 JSON {"source", "seed"?, "model_name"?}
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::uint8_t kTraceDtypeF32 = 1;
inline constexpr std::size_t kTraceHeaderBytes = 29;

/// Size of the f32 matrix section in bytes.
std::uint64_t trace_payload_bytes(const TokenTrace& trace);

/// Throws DimError for shape problems, DomainError for values that are
/// non-finite or overflow f32, ConfigError for counts that do not fit u32.
std::vector<std::uint8_t> encode_trace(const TokenTrace& trace);

/// Throws ParseError carrying the offset of the first field that is missing,
/// malformed or inconsistent with the header.
TokenTrace decode_trace(std::span<const std::uint8_t> bytes);

/// Writes through a temporary sibling file and renames it into place. IoError on failure.
void write_trace(const TokenTrace& trace, const std::filesystem::path& path);

/// IoError if the file cannot be read, ParseError for malformed content.
TokenTrace read_trace(const std::filesystem::path& path);

}  // namespace kvevict
