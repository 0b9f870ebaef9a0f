// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "kvevict/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvevict/errors.hpp"

namespace kvevict {

namespace {

std::vector<double> mean_row(const Mat& m) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            mean[c] += m(i, c);
        }
    }
    for (double& x : mean) {
        x /= static_cast<double>(m.rows());
    }
    return mean;
}

std::vector<double> random_direction(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double n = 0.0;
    while (n < 1e-12) {
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

// Direction uniform on the sphere, squared norm uniform in [0, M).
std::vector<double> random_bounded_key(Rng& rng, std::size_t d, double norm_bound) {
    auto v = random_direction(rng, d);
    const double length = std::sqrt(rng.uniform() * norm_bound);
    for (double& x : v) {
        x *= length;
    }
    return v;
}

// Householder reflection across the hyperplane orthogonal to unit q.
void reflect(std::span<double> v, std::span<const double> q) {
    const double p = dot(v, q);
    for (std::size_t c = 0; c < v.size(); ++c) {
        v[c] -= 2.0 * p * q[c];
    }
}

void track_max(std::optional<double>& current, double value) {
    current = current ? std::max(*current, value) : value;
}

}  // namespace

BoundInstance make_bound_instance(std::vector<double> q, Mat keys, std::vector<double> k_star, double norm_bound) {
    const std::size_t d = q.size();
    if (d == 0 || keys.rows() == 0 || keys.cols() != d || k_star.size() != d) {
        throw DimError("make_bound_instance: inconsistent dimensions");
    }
    if (std::abs(l2_norm(q) - 1.0) > 1e-12) {
        throw DomainError("make_bound_instance: query must have unit norm");
    }
    if (!(norm_bound > 0.0)) {
        throw DomainError("make_bound_instance: norm bound must be positive");
    }
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        if (!(dot(keys.row(i), keys.row(i)) < norm_bound)) {
            throw DomainError("make_bound_instance: key " + std::to_string(i) + " violates |k|^2 < M");
        }
    }
    if (!(dot(k_star, k_star) < norm_bound)) {
        throw DomainError("make_bound_instance: k* violates |k*|^2 < M");
    }

    BoundInstance inst;
    const double s_star = dot(k_star, q);
    double row_max = s_star;
    std::vector<double> logits(keys.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        logits[i] = dot(keys.row(i), q);
        row_max = std::max(row_max, logits[i]);
    }
    double denom = std::exp(s_star - row_max);
    for (double s : logits) {
        denom += std::exp(s - row_max);
    }
    inst.w = std::exp(s_star - row_max) / denom;
    if (!(inst.w > 0.0 && inst.w < 1.0)) {
        throw DomainError("make_bound_instance: attention weight of k* is not in (0, 1)");
    }
    inst.alpha_q = cos_sim(mean_row(keys), q);
    inst.beta_q = cos_sim(k_star, q);
    inst.n = keys.rows();
    inst.norm_bound = norm_bound;
    inst.q = std::move(q);
    inst.keys = std::move(keys);
    inst.k_star = std::move(k_star);
    return inst;
}

AttentionBoundCheck check_attention_bound(const BoundInstance& inst, double slack, Fault fault) {
    if (!(inst.w > 0.0 && inst.w < 1.0)) {
        throw DomainError("check_attention_bound: w must lie in (0, 1), got " + std::to_string(inst.w));
    }
    const double n = static_cast<double>(inst.n);
    const double two_m = 2.0 * inst.norm_bound;
    const double log_keep = std::log1p(-inst.w);
    AttentionBoundCheck r;
    r.bound_finite = (std::log(n / (n + 1.0)) - log_keep) / two_m - 1.0;
    r.bound_asymptotic = -log_keep / two_m - 1.0;
    r.cos_kstar_q = cos_sim(inst.k_star, inst.q);
    if (fault == Fault::SignFlip) {
        r.cos_kstar_q = -r.cos_kstar_q;
    }
    r.holds = r.bound_finite <= r.cos_kstar_q + slack;
    return r;
}

double anchor_bound_rhs(double alpha_q, double beta_q) {
    return 1.0 + alpha_q * beta_q - 0.5 * alpha_q * alpha_q - 0.5 * beta_q * beta_q;
}

AnchorBoundCheck check_anchor_bound(const BoundInstance& inst, double slack, Fault fault) {
    AnchorBoundCheck r;
    r.rhs = anchor_bound_rhs(inst.alpha_q, inst.beta_q);
    r.lhs = cos_sim(mean_row(inst.keys), inst.k_star);
    if (fault == Fault::SignFlip) {
        r.lhs = -r.lhs;
    }
    if (!(inst.beta_q > 0.0 && inst.alpha_q < 0.0)) {
        r.skipped = true;
        return r;
    }
    r.holds = r.lhs <= r.rhs + slack;
    return r;
}

OrthsumCheck check_orthsum(const Mat& basis, std::span<const double> y, Fault fault) {
    const std::size_t d = basis.cols();
    if (basis.rows() != d || d == 0) {
        throw BasisError("check_orthsum: basis must be square");
    }
    if (y.size() != d) {
        throw DimError("check_orthsum: y has length " + std::to_string(y.size()) + ", basis dimension " +
                       std::to_string(d));
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            const double expected = i == j ? 1.0 : 0.0;
            if (std::abs(dot(basis.row(i), basis.row(j)) - expected) > 1e-10) {
                throw BasisError("check_orthsum: rows " + std::to_string(i) + " and " + std::to_string(j) +
                                 " are not orthonormal");
            }
        }
    }
    if (l2_norm(y) == 0.0) {
        throw DomainError("check_orthsum: y must be nonzero");
    }
    OrthsumCheck r;
    for (std::size_t i = 0; i < d; ++i) {
        const double c = cos_sim(basis.row(i), y);
        r.sum_sq += c * c;
    }
    if (fault == Fault::SignFlip) {
        r.sum_sq = -r.sum_sq;
    }
    r.holds = std::abs(r.sum_sq - 1.0) <= 1e-9;
    return r;
}

Mat random_orthonormal_basis(std::size_t d, Rng& rng) {
    Mat basis(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        auto row = basis.row(i);
        for (double& x : row) {
            x = rng.normal();
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < i; ++j) {
                const double p = dot(row, basis.row(j));
                for (std::size_t c = 0; c < d; ++c) {
                    row[c] -= p * basis(j, c);
                }
            }
        }
        const double n = l2_norm(row);
        if (n < 1e-8) {
            // Vanishingly unlikely with Gaussian draws; redraw this row.
            --i;
            continue;
        }
        for (double& x : row) {
            x /= n;
        }
    }
    return basis;
}

BoundInstance random_attention_instance(Rng& rng) {
    static constexpr std::size_t kDims[] = {2, 8, 64};
    const std::size_t d = kDims[rng.uniform_int(0, 2)];
    const std::size_t n = rng.uniform_int(4, 256);
    const double m = rng.uniform(1.0, 16.0);
    auto q = random_direction(rng, d);
    Mat keys(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = random_bounded_key(rng, d, m);
        std::ranges::copy(k, keys.row(i).begin());
    }
    auto k_star = random_bounded_key(rng, d, m);
    // make_bound_instance re-checks |q| = 1 at 1e-12; renormalize once more to absorb rounding.
    const double qn = l2_norm(q);
    for (double& x : q) {
        x /= qn;
    }
    return make_bound_instance(std::move(q), std::move(keys), std::move(k_star), m);
}

std::optional<BoundInstance> random_anchor_instance(Rng& rng) {
    BoundInstance base = random_attention_instance(rng);
    Mat keys = base.keys;
    auto k_star = base.k_star;
    const auto mean = mean_row(keys);
    if (l2_norm(mean) < 1e-8) {
        return std::nullopt;
    }
    if (dot(mean, base.q) > 0.0) {
        for (std::size_t i = 0; i < keys.rows(); ++i) {
            reflect(keys.row(i), base.q);
        }
    }
    if (dot(k_star, base.q) < 0.0) {
        reflect(k_star, base.q);
    }
    return make_bound_instance(base.q, std::move(keys), std::move(k_star), base.norm_bound);
}

VerificationSummary verify_attention_bound(std::size_t instances, std::uint64_t seed, Fault fault) {
    VerificationSummary s;
    s.check = "attention_weight_bound";
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const auto inst = random_attention_instance(rng);
        const auto r = check_attention_bound(inst, 1e-10, fault);
        ++s.instances;
        track_max(s.max_slack, r.bound_finite - r.cos_kstar_q);
        if (!r.holds) {
            ++s.violations;
        }
    }
    return s;
}

VerificationSummary verify_anchor_bound(std::size_t instances, std::uint64_t seed, Fault fault) {
    VerificationSummary s;
    s.check = "anchor_similarity_bound";
    Rng rng(seed);
    while (s.instances < instances) {
        auto inst = random_anchor_instance(rng);
        if (!inst) {
            ++s.rejected;
            continue;
        }
        const auto r = check_anchor_bound(*inst, 1e-10, fault);
        ++s.instances;
        if (r.skipped) {
            ++s.skipped;
            continue;
        }
        track_max(s.max_slack, r.lhs - r.rhs);
        if (!r.holds) {
            ++s.violations;
        }
    }
    return s;
}

VerificationSummary verify_orthsum(std::size_t instances, std::uint64_t seed, Fault fault) {
    VerificationSummary s;
    s.check = "orthonormal_cosine_sum";
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = rng.uniform_int(2, 64);
        const Mat basis = random_orthonormal_basis(d, rng);
        std::vector<double> y(d);
        for (double& x : y) {
            x = rng.normal();
        }
        const auto r = check_orthsum(basis, y, fault);
        ++s.instances;
        track_max(s.max_slack, std::abs(r.sum_sq - 1.0));
        if (!r.holds) {
            ++s.violations;
        }
    }
    return s;
}

BoundPipelineReport bound_pipeline(const TokenTrace& trace, const AttentionModel& model) {
    trace.validate();
    if (trace.seq_len == 0) {
        throw DimError("bound_pipeline: empty trace");
    }
    BoundPipelineReport report;
    const std::size_t g = model.group_size();
    const std::size_t T = trace.seq_len;
    for (std::size_t layer = 0; layer < trace.layers; ++layer) {
        for (std::size_t qh = 0; qh < trace.q_heads; ++qh) {
            const Mat& keys = trace.key(layer, qh / g);
            const auto q = trace.query(layer, qh).row(T - 1);
            const auto kbar = mean_row(keys);

            std::vector<double> w(T);
            double row_max = -kInf;
            for (std::size_t j = 0; j < T; ++j) {
                w[j] = dot(q, keys.row(j)) * model.scale;
                row_max = std::max(row_max, w[j]);
            }
            double denom = 0.0;
            for (double& x : w) {
                x = std::exp(x - row_max);
                denom += x;
            }
            std::vector<double> scores(T);
            for (std::size_t j = 0; j < T; ++j) {
                w[j] /= denom;
                scores[j] = -cos_sim(kbar, keys.row(j));
                report.rows.push_back({layer, qh, j, w[j], cos_sim(keys.row(j), q), scores[j]});
            }

            HeadTrend trend{layer, qh, std::nullopt, false};
            try {
                trend.rho = spearman_rho(w, scores);
            } catch (const UndefinedCorrelation&) {
                trend.rho = std::nullopt;
            }
            const auto top_w = std::ranges::max_element(w) - w.begin();
            const auto top_s = std::ranges::max_element(scores) - scores.begin();
            trend.top_key_agrees = top_w == top_s;
            report.heads.push_back(trend);
        }
    }
    return report;
}

}  // namespace kvevict
