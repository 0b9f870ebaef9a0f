// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <charconv>
#include <cmath>
#include <string>

#include "kvevict/errors.hpp"
#include "kvevict/rng.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

std::string_view to_string(TraceSource source) {
    return source == TraceSource::Synthetic ? "synthetic" : "model_dump";
}

void TokenTrace::validate() const {
    if (layers == 0 || q_heads == 0 || kv_heads == 0 || head_dim == 0 || seq_len == 0) {
        throw DimError("TokenTrace: all dimensions must be positive");
    }
    if (q_heads % kv_heads != 0) {
        throw DimError("TokenTrace: q_heads " + std::to_string(q_heads) + " not a multiple of kv_heads " +
                       std::to_string(kv_heads));
    }
    if (keys.size() != layers * kv_heads || values.size() != layers * kv_heads ||
        queries.size() != layers * q_heads) {
        throw DimError("TokenTrace: stream count does not match layers x heads");
    }
    auto check = [&](const std::vector<Mat>& mats, const char* what) {
        for (const Mat& m : mats) {
            if (m.rows() != seq_len || m.cols() != head_dim) {
                throw DimError(std::string("TokenTrace: ") + what + " stream is " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + ", expected " + std::to_string(seq_len) + "x" +
                               std::to_string(head_dim));
            }
        }
    };
    check(keys, "key");
    check(values, "value");
    check(queries, "query");
}

void SynthSpec::validate() const {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
        throw ConfigError("synth: kappa must be positive, got " + std::to_string(kappa));
    }
    if (seq_len == 0 || head_dim < 2 || layers == 0 || q_heads == 0 || kv_heads == 0) {
        throw ConfigError("synth: T, layers and head counts must be positive and d >= 2");
    }
    if (q_heads % kv_heads != 0) {
        throw ConfigError("synth: q_heads must be a multiple of kv_heads");
    }
    if (outliers > seq_len) {
        throw ConfigError("synth: more outliers than tokens");
    }
    if (!(key_query_cos > -1.0 && key_query_cos < 1.0)) {
        throw ConfigError("synth: kq_cos must lie in (-1, 1)");
    }
}

SynthSpec parse_synth_spec(std::string_view text, SynthSpec spec) {
    auto as_count = [](std::string_view key, std::string_view v) {
        std::size_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ConfigError("synth: '" + std::string(key) + "' expects a non-negative integer, got '" +
                              std::string(v) + "'");
        }
        return out;
    };
    auto as_real = [](std::string_view key, std::string_view v) {
        try {
            std::size_t used = 0;
            const double out = std::stod(std::string(v), &used);
            if (used != v.size()) {
                throw std::invalid_argument("trailing");
            }
            return out;
        } catch (const std::exception&) {
            throw ConfigError("synth: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
        }
    };

    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("synth: expected key=value, got '" + std::string(item) + "'");
        }
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        if (key == "T") {
            spec.seq_len = as_count(key, value);
        } else if (key == "d") {
            spec.head_dim = as_count(key, value);
        } else if (key == "layers") {
            spec.layers = as_count(key, value);
        } else if (key == "q_heads") {
            spec.q_heads = as_count(key, value);
        } else if (key == "kv_heads") {
            spec.kv_heads = as_count(key, value);
        } else if (key == "kappa") {
            spec.kappa = as_real(key, value);
        } else if (key == "outliers") {
            spec.outliers = as_count(key, value);
        } else if (key == "kq_cos") {
            spec.key_query_cos = as_real(key, value);
        } else if (key == "seed") {
            spec.seed = as_count(key, value);
        } else if (key == "placement") {
            if (value == "leading") {
                spec.placement = OutlierPlacement::Leading;
            } else if (value == "spread") {
                spec.placement = OutlierPlacement::Spread;
            } else {
                throw ConfigError("synth: placement must be leading or spread");
            }
        } else {
            throw ConfigError("synth: unknown key '" + std::string(key) + "'");
        }
    }
    spec.validate();
    return spec;
}

std::vector<std::size_t> synth_outlier_positions(const SynthSpec& spec) {
    std::vector<std::size_t> pos;
    for (std::size_t j = 0; j < spec.outliers; ++j) {
        pos.push_back(spec.placement == OutlierPlacement::Leading ? j
                                                                  : (j + 1) * spec.seq_len / (spec.outliers + 1));
    }
    return pos;
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double n = 0.0;
    while (n < 1e-6) {
        for (double& x : v) {
            x = rng.normal();
        }
        n = l2_norm(v);
    }
    for (double& x : v) {
        x /= n;
    }
    return v;
}

// unit(center + sigma * N(0, I/d)) scaled to `length`
void perturbed_direction(Rng& rng, std::span<const double> center, double sigma, double length,
                         std::span<double> out) {
    const double per_coord = sigma / std::sqrt(static_cast<double>(center.size()));
    for (std::size_t c = 0; c < center.size(); ++c) {
        out[c] = center[c] + per_coord * rng.normal();
    }
    const double n = std::max(l2_norm(out), 1e-12);
    for (double& x : out) {
        x *= length / n;
    }
}

}  // namespace

TokenTrace synth_trace(const SynthSpec& spec) {
    spec.validate();
    const std::size_t T = spec.seq_len;
    const std::size_t d = spec.head_dim;
    const std::size_t g = spec.q_heads / spec.kv_heads;
    // Logit scale |k||q|/sqrt(d) stays at 4 regardless of d.
    const double length = 2.0 * std::pow(static_cast<double>(d), 0.25);
    const double max_spread = 1.0 / std::sqrt(spec.kappa);

    std::vector<bool> is_outlier(T, false);
    for (std::size_t p : synth_outlier_positions(spec)) {
        is_outlier[p] = true;
    }

    TokenTrace trace;
    trace.layers = spec.layers;
    trace.q_heads = spec.q_heads;
    trace.kv_heads = spec.kv_heads;
    trace.head_dim = d;
    trace.seq_len = T;
    trace.source = TraceSource::Synthetic;
    trace.seed = spec.seed;
    trace.keys.resize(spec.layers * spec.kv_heads);
    trace.values.resize(spec.layers * spec.kv_heads);
    trace.queries.resize(spec.layers * spec.q_heads);

    for (std::size_t layer = 0; layer < spec.layers; ++layer) {
        for (std::size_t h = 0; h < spec.kv_heads; ++h) {
            Rng rng = Rng::stream(spec.seed, layer, h);
            const auto key_mean = random_unit(rng, d);
            auto other = random_unit(rng, d);
            const double proj = dot(other, key_mean);
            for (std::size_t c = 0; c < d; ++c) {
                other[c] -= proj * key_mean[c];
            }
            const double on = l2_norm(other);
            std::vector<double> query_mean(d);
            const double s = std::sqrt(1.0 - spec.key_query_cos * spec.key_query_cos);
            for (std::size_t c = 0; c < d; ++c) {
                query_mean[c] = spec.key_query_cos * key_mean[c] + s * other[c] / on;
            }

            Mat keys(T, d);
            Mat values(T, d);
            for (std::size_t t = 0; t < T; ++t) {
                if (is_outlier[t]) {
                    perturbed_direction(rng, query_mean, 0.1, length, keys.row(t));
                } else {
                    perturbed_direction(rng, key_mean, max_spread * rng.uniform(), length, keys.row(t));
                    const double jitter = 1.0 + 0.05 * rng.normal();
                    for (double& x : keys.row(t)) {
                        x *= jitter;
                    }
                }
                for (double& x : values.row(t)) {
                    x = rng.normal();
                }
            }
            trace.keys[layer * spec.kv_heads + h] = std::move(keys);
            trace.values[layer * spec.kv_heads + h] = std::move(values);

            for (std::size_t qi = 0; qi < g; ++qi) {
                Mat queries(T, d);
                for (std::size_t t = 0; t < T; ++t) {
                    perturbed_direction(rng, query_mean, 0.2, length, queries.row(t));
                }
                trace.queries[layer * spec.q_heads + h * g + qi] = std::move(queries);
            }
        }
    }
    return trace;
}

}  // namespace kvevict
