// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "generators.hpp"
#include "kvevict/errors.hpp"
#include "kvevict/numerics.hpp"
#include "oracles.hpp"

using namespace kvevict;
using namespace kvevict::testing;

TEST(CosSim, SelfSimilarityIsOne) {
    for_each_case(11, 50, [](Rng& rng, std::size_t) {
        const auto v = random_vec(rng, pick(rng, 1, 32));
        EXPECT_NEAR(cos_sim(v, v), 1.0, 1e-15);
    });
}

TEST(CosSim, AnalyticValues) {
    EXPECT_EQ(cos_sim(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}), 0.0);
    EXPECT_NEAR(cos_sim(std::vector{1.0, 1.0}, std::vector{1.0, 0.0}), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(CosSim, ZeroVectorIsZeroNotNaN) {
    EXPECT_EQ(cos_sim(std::vector{0.0, 0.0}, std::vector{1.0, 2.0}), 0.0);
}

TEST(CosSim, LengthMismatchThrows) {
    EXPECT_THROW(cos_sim(std::vector{1.0}, std::vector{1.0, 2.0}), DimError);
}

TEST(CosSim, SymmetricAndBounded) {
    for_each_case(12, 200, [](Rng& rng, std::size_t) {
        const std::size_t d = pick(rng, 1, 16);
        const auto a = random_vec(rng, d, rng.uniform(1e-3, 1e3));
        const auto b = random_vec(rng, d, rng.uniform(1e-3, 1e3));
        const double ab = cos_sim(a, b);
        EXPECT_EQ(ab, cos_sim(b, a));
        EXPECT_LE(std::abs(ab), 1.0);
        EXPECT_NEAR(ab, ref_cos(a, b), 1e-12);
    });
}

TEST(Vec, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(Vec(std::vector<double>{}), DimError);
    EXPECT_THROW((Vec{1.0, NAN}), DomainError);
}

TEST(Mat, RejectsShapeMismatchAndNonFinite) {
    EXPECT_THROW(Mat(2, 2, std::vector<double>{1.0, 2.0, 3.0}), DimError);
    EXPECT_THROW(Mat(1, 2, std::vector<double>{1.0, INFINITY}), DomainError);
}

TEST(PairwiseCosSim, SingleRowAndOrthonormal) {
    const Mat one = pairwise_cos_sim(Mat::from_rows({{3.0, 4.0}}));
    EXPECT_EQ(one, Mat::from_rows({{1.0}}));
    const Mat eye = pairwise_cos_sim(Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    EXPECT_EQ(eye, Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
}

TEST(PairwiseCosSim, MatchesLoopOracle) {
    for_each_case(13, 20, [](Rng& rng, std::size_t) {
        const Mat k = random_mat(rng, 6, 4);
        const Mat c = pairwise_cos_sim(k);
        for (std::size_t i = 0; i < 6; ++i) {
            EXPECT_EQ(c(i, i), 1.0);
            for (std::size_t j = 0; j < 6; ++j) {
                EXPECT_NEAR(c(i, j), ref_cos(k.row(i), k.row(j)), 1e-12);
                EXPECT_EQ(c(i, j), c(j, i));
            }
        }
    });
}

TEST(SoftmaxMasked, UniformAndCausal) {
    const Mat u = softmax_masked(Mat(1, 4), Mask(1, 4));
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_DOUBLE_EQ(u(0, j), 0.25);
    }
    const Mat c = softmax_masked(Mat::from_rows({{5.0, 7.0}, {1.0, 2.0}}), Mask::causal(2));
    EXPECT_EQ(c(0, 0), 1.0);
    EXPECT_EQ(c(0, 1), 0.0);
}

TEST(SoftmaxMasked, MatchesNaiveFormula) {
    for_each_case(14, 50, [](Rng& rng, std::size_t) {
        const Mat logits = random_mat(rng, 3, 5, 4.0);
        Mask mask(3, 5);
        std::vector<std::vector<bool>> allowed(3, std::vector<bool>(5, true));
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 1; j < 5; ++j) {
                if (rng.uniform() < 0.3) {
                    mask.set(i, j, false);
                    allowed[i][j] = false;
                }
            }
        }
        const Mat w = softmax_masked(logits, mask);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto ref = ref_softmax_row(logits.row(i), allowed[i]);
            double total = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                EXPECT_NEAR(w(i, j), ref[j], 1e-12);
                if (!allowed[i][j]) {
                    EXPECT_EQ(w(i, j), 0.0);
                }
                total += w(i, j);
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    });
}

TEST(SoftmaxMasked, LargeLogitsStayFinite) {
    const Mat w = softmax_masked(Mat::from_rows({{1000.0, 999.0, -1000.0}}), Mask(1, 3));
    EXPECT_NEAR(w(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
    EXPECT_EQ(w(0, 2), 0.0);
}

TEST(SoftmaxMasked, FullyMaskedRowThrows) {
    EXPECT_THROW(softmax_masked(Mat(1, 2), Mask(1, 2, false)), FullyMaskedError);
}

TEST(SpearmanRho, MonotoneAndAntiMonotone) {
    EXPECT_DOUBLE_EQ(spearman_rho(std::vector{1.0, 2.0, 3.0}, std::vector{10.0, 20.0, 30.0}), 1.0);
    EXPECT_DOUBLE_EQ(spearman_rho(std::vector{1.0, 2.0, 3.0}, std::vector{3.0, 2.0, 1.0}), -1.0);
}

TEST(SpearmanRho, TiesMatchRankTableOracle) {
    const std::vector x{0.3, 1.2, 0.3, -2.0, 5.0, 0.7, 0.1, 2.2};
    const std::vector y{1.0, 0.5, 2.0, -1.0, 3.0, 0.9, 0.2, 0.0};
    EXPECT_NEAR(spearman_rho(x, y), ref_spearman(x, y), 1e-12);
    for_each_case(15, 100, [](Rng& rng, std::size_t) {
        const std::size_t n = pick(rng, 3, 40);
        std::vector<double> a(n);
        std::vector<double> b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<double>(pick(rng, 0, 6));  // plenty of ties
            b[i] = rng.normal();
        }
        if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) {
            return;
        }
        EXPECT_NEAR(spearman_rho(a, b), ref_spearman(a, b), 1e-12);
    });
}

TEST(SpearmanRho, ConstantOrShortInputIsUndefined) {
    EXPECT_THROW(spearman_rho(std::vector{1.0, 1.0, 1.0}, std::vector{1.0, 2.0, 3.0}), UndefinedCorrelation);
    EXPECT_THROW(spearman_rho(std::vector{1.0}, std::vector{2.0}), UndefinedCorrelation);
    EXPECT_THROW(spearman_rho(std::vector{1.0, 2.0}, std::vector{2.0}), DimError);
}

TEST(AverageRanks, TiesShareMean) {
    EXPECT_EQ(average_ranks(std::vector{3.0, 1.0, 3.0, 2.0}), (std::vector{3.5, 1.0, 3.5, 2.0}));
}

TEST(LogDetGram, OrthonormalRowsGiveZero) {
    Rng rng(16);
    const Mat q = ref_qr_basis(8, rng);
    const Mat rows = q.gather_rows(std::vector<std::size_t>{0, 3, 5});
    EXPECT_NEAR(log_det_gram(rows), 0.0, 1e-12);
}

TEST(LogDetGram, ScalingLaw) {
    for_each_case(17, 20, [](Rng& rng, std::size_t) {
        const std::size_t n = pick(rng, 1, 6);
        const Mat k = random_mat(rng, n, 8);
        const double c = rng.uniform(0.1, 10.0);
        std::vector<double> scaled(k.data());
        for (double& x : scaled) {
            x *= c;
        }
        EXPECT_NEAR(log_det_gram(Mat(n, 8, scaled)), log_det_gram(k) + 2.0 * static_cast<double>(n) * std::log(c),
                    1e-9);
    });
}

TEST(LogDetGram, MatchesEigenvalueOracle) {
    for_each_case(18, 30, [](Rng& rng, std::size_t) {
        const Mat k = random_mat(rng, 5, 8);
        EXPECT_NEAR(log_det_gram(k), ref_logdet_gram(k), 1e-8);
    });
}

TEST(LogDetGram, SingleKeyIsTwiceLogNorm) {
    const Mat k = Mat::from_rows({{3.0, 4.0}});
    EXPECT_NEAR(log_det_gram(k), 2.0 * std::log(5.0), 1e-14);
}

TEST(LogDetGram, RankDeficientIsMinusInfinity) {
    EXPECT_EQ(log_det_gram(Mat::from_rows({{1.0, 0.0}, {2.0, 0.0}})), -kInf);
    Rng rng(19);
    EXPECT_EQ(log_det_gram(random_mat(rng, 5, 3)), -kInf);  // more keys than dimensions
}

TEST(TopK, Examples) {
    EXPECT_EQ(topk_indices(std::vector{0.1, 0.9, 0.5}, 2), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(topk_indices(std::vector{0.5, 0.5, 0.5}, 2), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(topk_indices(std::vector{1.0, kInf, 2.0, kInf}, 2), (std::vector<std::size_t>{1, 3}));
}

TEST(TopK, MatchesStableSortOracle) {
    for_each_case(20, 100, [](Rng& rng, std::size_t) {
        const std::size_t n = pick(rng, 1, 64);
        std::vector<double> s(n);
        for (double& x : s) {
            x = static_cast<double>(pick(rng, 0, 10));
        }
        const std::size_t k = pick(rng, 0, n);
        EXPECT_EQ(topk_indices(s, k), ref_topk(s, k));
    });
}

TEST(TopK, RejectsNaNAndOversizedCount) {
    EXPECT_THROW(topk_indices(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}, 1), DomainError);
    EXPECT_EQ(topk_indices(std::vector{1.0, 2.0}, 5), (std::vector<std::size_t>{0, 1}));
}
