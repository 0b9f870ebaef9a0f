// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/traceio.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <system_error>

#include <json.hpp>

#include "kvevict/errors.hpp"

namespace kvevict {

namespace {

constexpr char kMagic[4] = {'K', 'V', 'T', 'R'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t to_u32(std::size_t v, const char* field) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError(std::string("encode_trace: ") + field + " does not fit in u32");
    }
    return static_cast<std::uint32_t>(v);
}

void put_matrix(std::vector<std::uint8_t>& out, const Mat& m) {
    for (double x : m.data()) {
        if (!std::isfinite(x) || std::abs(x) > std::numeric_limits<float>::max()) {
            throw DomainError("encode_trace: value " + std::to_string(x) + " is not representable as finite f32");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

    std::uint64_t offset() const { return m_pos; }
    std::uint64_t remaining() const { return m_bytes.size() - m_pos; }

    void need(std::uint64_t n, const char* what) const {
        if (remaining() < n) {
            throw ParseError(std::string("truncated ") + what + " at offset " + std::to_string(m_pos), m_pos);
        }
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return m_bytes[m_pos++];
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(m_bytes[m_pos + i]) << (8 * i);
        }
        m_pos += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(m_bytes[m_pos + i]) << (8 * i);
        }
        m_pos += 8;
        return v;
    }

    std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
        need(n, what);
        auto s = m_bytes.subspan(m_pos, n);
        m_pos += n;
        return s;
    }

private:
    std::span<const std::uint8_t> m_bytes;
    std::uint64_t m_pos = 0;
};

Mat read_matrix(Reader& r, std::size_t rows, std::size_t cols) {
    std::vector<double> data(rows * cols);
    for (double& x : data) {
        const std::uint64_t at = r.offset();
        const float f = std::bit_cast<float>(r.u32("payload"));
        if (!std::isfinite(f)) {
            throw ParseError("non-finite payload value at offset " + std::to_string(at), at);
        }
        x = static_cast<double>(f);
    }
    return Mat(rows, cols, std::move(data));
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return a * b;
}

}  // namespace

std::uint64_t trace_payload_bytes(const TokenTrace& trace) {
    const std::uint64_t per_layer = 2 * trace.kv_heads + trace.q_heads;
    return 4ULL * trace.layers * per_layer * trace.seq_len * trace.head_dim;
}

std::vector<std::uint8_t> encode_trace(const TokenTrace& trace) {
    trace.validate();
    if (trace.layers == 0 || trace.q_heads == 0 || trace.kv_heads == 0 || trace.head_dim == 0 ||
        trace.seq_len == 0) {
        throw DimError("encode_trace: all counts must be at least 1");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kTraceHeaderBytes + trace_payload_bytes(trace) + 64);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kTraceVersion);
    put_u32(out, to_u32(trace.layers, "layers"));
    put_u32(out, to_u32(trace.q_heads, "q_heads"));
    put_u32(out, to_u32(trace.kv_heads, "kv_heads"));
    put_u32(out, to_u32(trace.head_dim, "head_dim"));
    put_u32(out, to_u32(trace.seq_len, "seq_len"));
    out.push_back(kTraceDtypeF32);

    for (std::size_t layer = 0; layer < trace.layers; ++layer) {
        for (std::size_t h = 0; h < trace.kv_heads; ++h) {
            put_matrix(out, trace.key(layer, h));
            put_matrix(out, trace.value(layer, h));
        }
        for (std::size_t qh = 0; qh < trace.q_heads; ++qh) {
            put_matrix(out, trace.query(layer, qh));
        }
    }

    nlohmann::json footer = nlohmann::json::object();
    footer["source"] = std::string(to_string(trace.source));
    if (trace.seed) {
        footer["seed"] = *trace.seed;
    }
    if (trace.model_name) {
        footer["model_name"] = *trace.model_name;
    }
    const std::string text = footer.dump();
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    return out;
}

TokenTrace decode_trace(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
        throw ParseError("bad magic: not a KVTR file", 0);
    }
    const std::uint64_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kTraceVersion) {
        throw ParseError("unsupported KVTR version " + std::to_string(version), version_at);
    }

    TokenTrace t;
    std::uint64_t count_at[5];
    std::size_t* counts[5] = {&t.layers, &t.q_heads, &t.kv_heads, &t.head_dim, &t.seq_len};
    static constexpr const char* kNames[5] = {"layers", "q_heads", "kv_heads", "head_dim", "seq_len"};
    for (int i = 0; i < 5; ++i) {
        count_at[i] = r.offset();
        *counts[i] = r.u32(kNames[i]);
        if (*counts[i] == 0) {
            throw ParseError(std::string(kNames[i]) + " must be at least 1", count_at[i]);
        }
    }
    if (t.q_heads % t.kv_heads != 0) {
        throw ParseError("q_heads is not a multiple of kv_heads", count_at[1]);
    }
    const std::uint64_t dtype_at = r.offset();
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != kTraceDtypeF32) {
        throw ParseError("unsupported dtype code " + std::to_string(dtype), dtype_at);
    }

    // Reject an undersized file before allocating anything sized by the header.
    const std::uint64_t per_matrix = saturating_mul(4ULL * t.seq_len, t.head_dim);
    const std::uint64_t matrices = saturating_mul(t.layers, 2ULL * t.kv_heads + t.q_heads);
    const std::uint64_t payload = saturating_mul(per_matrix, matrices);
    if (payload > r.remaining()) {
        const std::uint64_t at = r.offset() + r.remaining() / 4 * 4;
        throw ParseError("truncated payload at offset " + std::to_string(at), at);
    }

    for (std::size_t layer = 0; layer < t.layers; ++layer) {
        for (std::size_t h = 0; h < t.kv_heads; ++h) {
            t.keys.push_back(read_matrix(r, t.seq_len, t.head_dim));
            t.values.push_back(read_matrix(r, t.seq_len, t.head_dim));
        }
        for (std::size_t qh = 0; qh < t.q_heads; ++qh) {
            t.queries.push_back(read_matrix(r, t.seq_len, t.head_dim));
        }
    }

    const std::uint64_t len = r.u64("footer length");
    const std::uint64_t footer_at = r.offset();
    const auto text = r.take(len, "footer");
    if (r.remaining() != 0) {
        throw ParseError("trailing bytes after footer at offset " + std::to_string(r.offset()), r.offset());
    }

    nlohmann::json footer;
    try {
        footer = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("footer is not valid JSON: ") + e.what(), footer_at);
    }
    if (!footer.is_object() || !footer.contains("source") || !footer["source"].is_string()) {
        throw ParseError("footer lacks a string \"source\"", footer_at);
    }
    const auto source = footer["source"].get<std::string>();
    if (source == to_string(TraceSource::Synthetic)) {
        t.source = TraceSource::Synthetic;
    } else if (source == to_string(TraceSource::ModelDump)) {
        t.source = TraceSource::ModelDump;
    } else {
        throw ParseError("unknown trace source \"" + source + "\"", footer_at);
    }
    if (footer.contains("seed") && !footer["seed"].is_null()) {
        if (!footer["seed"].is_number_unsigned()) {
            throw ParseError("footer seed must be a non-negative integer", footer_at);
        }
        t.seed = footer["seed"].get<std::uint64_t>();
    }
    if (footer.contains("model_name") && !footer["model_name"].is_null()) {
        if (!footer["model_name"].is_string()) {
            throw ParseError("footer model_name must be a string", footer_at);
        }
        t.model_name = footer["model_name"].get<std::string>();
    }
    t.validate();
    return t;
}

void write_trace(const TokenTrace& trace, const std::filesystem::path& path) {
    const auto bytes = encode_trace(trace);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("write to " + tmp.string() + " failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move trace into place at " + path.string());
    }
}

TokenTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read from " + path.string() + " failed");
    }
    return decode_trace(bytes);
}

}  // namespace kvevict
