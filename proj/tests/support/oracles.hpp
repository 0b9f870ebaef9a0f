// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

// Reference computations used as test oracles. They are written independently
// of the engine (Eigen linear algebra or naive loops) and favour clarity over speed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kvevict/numerics.hpp"
#include "kvevict/rng.hpp"

namespace kvevict::testing {

Eigen::MatrixXd to_eigen(const Mat& m);
Mat from_eigen(const Eigen::MatrixXd& m);

double ref_cos(std::span<const double> a, std::span<const double> b);

/// exp(x_j - max) / sum over the allowed entries of one row.
std::vector<double> ref_softmax_row(std::span<const double> logits, const std::vector<bool>& allowed);

/// Sum of log eigenvalues of K K^T.
double ref_logdet_gram(const Mat& keys);

/// Orthonormal basis of R^d from the Q factor of a Gaussian matrix (rows are basis vectors).
Mat ref_qr_basis(std::size_t d, Rng& rng);

/// Pearson correlation of explicit average-rank tables.
double ref_spearman(std::span<const double> x, std::span<const double> y);

/// Stable sort by descending score (ties keep the lower index), first `count`, returned ascending.
std::vector<std::size_t> ref_topk(std::span<const double> scores, std::size_t count);

/// Same-length moving mean over [i - k/2, i + k/2] clipped to the array.
std::vector<double> ref_window_mean(std::span<const double> values, std::size_t kernel);

/// Group-averaged post-softmax weights of a block of queries (one B x d matrix
/// per query head) over `cache_keys` followed by `block_keys`, causal inside the block.
Mat ref_block_attention(const Mat& cache_keys, const Mat& block_keys, std::span<const Mat> queries, double scale);

/// Full-sequence causal attention output of one query head: T x d.
Mat ref_causal_outputs(const Mat& queries, const Mat& keys, const Mat& values, double scale);

/// Objective sum_{i,j in S} cos(k_i, k_j) evaluated with Eigen.
double ref_subset_objective(const Mat& keys, std::span<const std::size_t> subset);

}  // namespace kvevict::testing
