// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace kvevict {

inline constexpr double kCosEps = 1e-12;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-token eviction scores aligned with cache order. Larger means retain;
/// +inf marks a token that must be kept unconditionally.
using ScoreVector = std::vector<double>;

/// Dense vector of head-dimension length. Nonempty, finite.
class Vec {
public:
    explicit Vec(std::vector<double> data);
    Vec(std::initializer_list<double> values) : Vec(std::vector<double>(values)) {}

    std::size_t size() const noexcept { return m_data.size(); }
    double operator[](std::size_t i) const { return m_data[i]; }
    std::span<const double> span() const noexcept { return m_data; }
    operator std::span<const double>() const noexcept { return m_data; }  // NOLINT
    const std::vector<double>& data() const noexcept { return m_data; }

private:
    std::vector<double> m_data;
};

/// Row-major dense matrix. Rows may be zero (an empty cache still knows its width).
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols) : m_rows(rows), m_cols(cols), m_data(rows * cols, 0.0) {}
    /// Validates rows*cols == data.size() and finiteness.
    Mat(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_rows == 0; }

    std::span<const double> row(std::size_t i) const { return {m_data.data() + i * m_cols, m_cols}; }
    std::span<double> row(std::size_t i) { return {m_data.data() + i * m_cols, m_cols}; }
    double operator()(std::size_t i, std::size_t j) const { return m_data[i * m_cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return m_data[i * m_cols + j]; }

    const std::vector<double>& data() const noexcept { return m_data; }

    /// Appends the rows of `other`; widths must agree unless this matrix has no columns yet.
    void append_rows(const Mat& other);
    /// Rows at `indices`, in the order given.
    Mat gather_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

/// Boolean attention mask: allowed(i, j) corresponds to an additive 0,
/// disallowed to an additive -inf.
class Mask {
public:
    Mask(std::size_t rows, std::size_t cols, bool allowed = true)
        : m_rows(rows), m_cols(cols), m_allowed(rows * cols, allowed ? 1 : 0) {}

    /// Lower-triangular mask of a square self-attention matrix.
    static Mask causal(std::size_t n);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool allowed(std::size_t i, std::size_t j) const { return m_allowed[i * m_cols + j] != 0; }
    void set(std::size_t i, std::size_t j, bool allowed) { m_allowed[i * m_cols + j] = allowed ? 1 : 0; }

private:
    std::size_t m_rows;
    std::size_t m_cols;
    std::vector<std::uint8_t> m_allowed;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// a.b / max(|a||b|, 1e-12), clamped to [-1, 1]. Throws DimError on length mismatch.
double cos_sim(std::span<const double> a, std::span<const double> b);

/// Symmetric n x n matrix of row cosine similarities with unit diagonal.
Mat pairwise_cos_sim(const Mat& keys);

/// Row-wise softmax of logits + mask, stabilized by the row max over allowed
/// entries. Masked entries come out exactly 0. Throws FullyMaskedError if a
/// row has no allowed entry.
Mat softmax_masked(const Mat& logits, const Mask& mask);

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. Throws
/// UndefinedCorrelation when either input is constant or shorter than 2.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// log det(K K^T) through a Cholesky factorization of the Gram matrix.
/// Returns -inf when a pivot falls below 1e-10 times the largest Gram
/// diagonal entry (rank-deficient caches, e.g. more keys than dimensions).
double log_det_gram(const Mat& keys);

/// Indices of the `count` largest scores in ascending index order. Ties go to
/// the lower index; +inf entries outrank everything else. NaN is rejected.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t count);

}  // namespace kvevict
