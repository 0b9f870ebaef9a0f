// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kvevict/errors.hpp"

namespace kvevict {

namespace {

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string(what) + ": non-finite entry");
        }
    }
}

}  // namespace

Vec::Vec(std::vector<double> data) : m_data(std::move(data)) {
    if (m_data.empty()) {
        throw DimError("Vec: length must be positive");
    }
    require_finite(m_data, "Vec");
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    if (m_rows * m_cols != m_data.size()) {
        throw DimError("Mat: rows*cols=" + std::to_string(m_rows * m_cols) + " but data has " +
                       std::to_string(m_data.size()) + " entries");
    }
    require_finite(m_data, "Mat");
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n * d);
    for (const auto& r : rows) {
        if (r.size() != d) {
            throw DimError("Mat::from_rows: ragged rows");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
    return Mat(n, d, std::move(data));
}

void Mat::append_rows(const Mat& other) {
    if (other.m_rows == 0) {
        return;
    }
    if (m_cols == 0 && m_rows == 0) {
        m_cols = other.m_cols;
    }
    if (other.m_cols != m_cols) {
        throw DimError("Mat::append_rows: width " + std::to_string(other.m_cols) + " != " +
                       std::to_string(m_cols));
    }
    m_data.insert(m_data.end(), other.m_data.begin(), other.m_data.end());
    m_rows += other.m_rows;
}

Mat Mat::gather_rows(std::span<const std::size_t> indices) const {
    Mat out(indices.size(), m_cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= m_rows) {
            throw IndexError("Mat::gather_rows: index " + std::to_string(indices[r]) + " out of range " +
                             std::to_string(m_rows));
        }
        std::ranges::copy(row(indices[r]), out.row(r).begin());
    }
    return out;
}

Mask Mask::causal(std::size_t n) {
    Mask m(n, n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            m.set(i, j, true);
        }
    }
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimError("dot: length " + std::to_string(a.size()) + " != " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cos_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimError("cos_sim: length " + std::to_string(a.size()) + " != " + std::to_string(b.size()));
    }
    const double c = dot(a, b) / std::max(l2_norm(a) * l2_norm(b), kCosEps);
    return std::clamp(c, -1.0, 1.0);
}

Mat pairwise_cos_sim(const Mat& keys) {
    const std::size_t n = keys.rows();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = l2_norm(keys.row(i));
    }
    Mat out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c =
                std::clamp(dot(keys.row(i), keys.row(j)) / std::max(norms[i] * norms[j], kCosEps), -1.0, 1.0);
            out(i, j) = c;
            out(j, i) = c;
        }
    }
    return out;
}

Mat softmax_masked(const Mat& logits, const Mask& mask) {
    if (logits.rows() != mask.rows() || logits.cols() != mask.cols()) {
        throw DimError("softmax_masked: logits and mask shapes differ");
    }
    Mat out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double row_max = -kInf;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            if (mask.allowed(i, j)) {
                row_max = std::max(row_max, logits(i, j));
            }
        }
        if (row_max == -kInf) {
            throw FullyMaskedError("softmax_masked: row " + std::to_string(i) + " is fully masked");
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            if (mask.allowed(i, j)) {
                const double e = std::exp(logits(i, j) - row_max);
                out(i, j) = e;
                denom += e;
            }
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out(i, j) /= denom;
        }
    }
    return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        // positions i..j (0-based) share rank mean((i+1)..(j+1))
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimError("spearman_rho: length " + std::to_string(x.size()) + " != " + std::to_string(y.size()));
    }
    if (x.size() < 2) {
        throw UndefinedCorrelation("spearman_rho: need at least 2 observations");
    }
    require_finite(x, "spearman_rho");
    require_finite(y, "spearman_rho");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = 0.5 * static_cast<double>(x.size() + 1);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = rx[i] - mean;
        const double b = ry[i] - mean;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedCorrelation("spearman_rho: constant input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double log_det_gram(const Mat& keys) {
    const std::size_t n = keys.rows();
    if (n == 0) {
        throw DimError("log_det_gram: need at least one key");
    }
    Mat gram(n, n);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double g = dot(keys.row(i), keys.row(j));
            gram(i, j) = g;
            gram(j, i) = g;
        }
        max_diag = std::max(max_diag, gram(i, i));
    }
    if (max_diag == 0.0) {
        return -kInf;
    }
    const double pivot_floor = 1e-10 * max_diag;

    // In-place lower Cholesky.
    double logdet = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = gram(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            pivot -= gram(j, k) * gram(j, k);
        }
        if (!(pivot > pivot_floor)) {
            return -kInf;
        }
        const double ljj = std::sqrt(pivot);
        gram(j, j) = ljj;
        logdet += 2.0 * std::log(ljj);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = gram(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= gram(i, k) * gram(j, k);
            }
            gram(i, j) = s / ljj;
        }
    }
    return logdet;
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t count) {
    const std::size_t n = scores.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(scores[i])) {
            throw DomainError("topk_indices: NaN score at index " + std::to_string(i));
        }
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (count >= n) {
        return idx;
    }
    // Strict total order: higher score first, then lower index.
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), better);
    idx.resize(count);
    std::ranges::sort(idx);
    return idx;
}

}  // namespace kvevict
