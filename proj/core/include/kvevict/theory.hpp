// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/numerics.hpp"
#include "kvevict/rng.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

/// A fixed unit query, n background keys and one extra key k*, all with
/// squared norm below `norm_bound`. Attention uses scale 1.
struct BoundInstance {
    std::vector<double> q;
    Mat keys;                    // n x d
    std::vector<double> k_star;
    double norm_bound = 0.0;     // M
    std::size_t n = 0;
    double w = 0.0;              // softmax weight of k* among {k*} U keys
    double alpha_q = 0.0;        // CosSim(mean of keys, q)
    double beta_q = 0.0;         // CosSim(k*, q)
};

/// Computes w, alpha_q and beta_q. Throws DomainError if |q| != 1 (1e-12),
/// a squared norm reaches M, or w falls outside (0, 1).
BoundInstance make_bound_instance(std::vector<double> q, Mat keys, std::vector<double> k_star, double norm_bound);

/// Flips the sign of the measured quantity in each check. Negative control only.
enum class Fault { None, SignFlip };

struct AttentionBoundCheck {
    double bound_finite = 0.0;      // (log(n/(n+1)) - log(1-w)) / 2M - 1
    double bound_asymptotic = 0.0;  // -log(1-w) / 2M - 1
    double cos_kstar_q = 0.0;
    bool holds = false;             // bound_finite <= cos_kstar_q + slack
};

/// Lower bound on CosSim(k*, q) implied by k* receiving attention weight w.
/// Throws DomainError unless 0 < w < 1.
AttentionBoundCheck check_attention_bound(const BoundInstance& inst, double slack = 1e-10, Fault fault = Fault::None);

struct AnchorBoundCheck {
    double lhs = 0.0;  // CosSim(mean of keys, k*)
    double rhs = 0.0;  // 1 + alpha*beta - alpha^2/2 - beta^2/2
    bool holds = false;
    bool skipped = false;  // hypotheses beta_q > 0, alpha_q < 0 not met
};

double anchor_bound_rhs(double alpha_q, double beta_q);

/// Upper bound on the similarity between the key mean and k* given their
/// cosines with q. Instances violating beta_q > 0 > alpha_q come back skipped.
AnchorBoundCheck check_anchor_bound(const BoundInstance& inst, double slack = 1e-10, Fault fault = Fault::None);

struct OrthsumCheck {
    double sum_sq = 0.0;
    bool holds = false;  // |sum_sq - 1| <= 1e-9
};

/// sum_i CosSim(x_i, y)^2 over an orthonormal basis (rows of `basis`, d x d).
/// Throws BasisError if the rows are not orthonormal to 1e-10, DomainError for y = 0.
OrthsumCheck check_orthsum(const Mat& basis, std::span<const double> y, Fault fault = Fault::None);

/// Random orthonormal basis of R^d (rows), via twice-applied modified Gram-Schmidt.
Mat random_orthonormal_basis(std::size_t d, Rng& rng);

// ---------------------------------------------------------------------------
// Randomized verification suites

struct VerificationSummary {
    std::string check;
    std::size_t instances = 0;
    std::size_t violations = 0;
    std::size_t skipped = 0;   // hypotheses unmet
    std::size_t rejected = 0;  // degenerate draws discarded before checking
    /// Largest (measured side - allowed side) seen; positive beyond the slack is a violation.
    std::optional<double> max_slack;
};

/// n in [4, 256], M in [1, 16], d in {2, 8, 64}; keys uniform in direction
/// with squared norm uniform in [0, M).
BoundInstance random_attention_instance(Rng& rng);

/// Like random_attention_instance, with k* and the key mean reflected across
/// q's orthogonal complement as needed so that beta_q > 0 > alpha_q.
/// Returns nullopt when |mean key| < 1e-8.
std::optional<BoundInstance> random_anchor_instance(Rng& rng);

VerificationSummary verify_attention_bound(std::size_t instances, std::uint64_t seed, Fault fault = Fault::None);
VerificationSummary verify_anchor_bound(std::size_t instances, std::uint64_t seed, Fault fault = Fault::None);
VerificationSummary verify_orthsum(std::size_t instances, std::uint64_t seed, Fault fault = Fault::None);

// ---------------------------------------------------------------------------
// Per-head link between attention weight, query alignment and KeyDiff score

struct KeyScatterRow {
    std::size_t layer = 0;
    std::size_t head = 0;  // query head
    std::size_t key_index = 0;
    double w = 0.0;              // weight from the head's last query
    double beta_q = 0.0;         // CosSim(k, q)
    double keydiff_score = 0.0;  // -CosSim(mean key, k)
};

struct HeadTrend {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::optional<double> rho;      // Spearman(w, keydiff_score); empty when undefined
    bool top_key_agrees = false;    // argmax w == argmax keydiff_score
};

struct BoundPipelineReport {
    std::vector<KeyScatterRow> rows;
    std::vector<HeadTrend> heads;
};

/// Uses the last query of every query head against all keys of its kv head.
BoundPipelineReport bound_pipeline(const TokenTrace& trace, const AttentionModel& model);

}  // namespace kvevict
