#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dacl/contrastive.hpp"
#include "dacl/errors.hpp"
#include "dacl/gradcheck.hpp"
#include "dacl/ops.hpp"
#include "oracles.hpp"

using namespace dacl;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double loss_of(const Tensor& z, std::vector<int> labels, double tau = 0.07) {
    return scl_loss(ProjectedBatch{z, std::move(labels)}, tau).loss.item();
}

std::vector<int> random_labels(std::size_t b, std::mt19937_64& rng) {
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng() % 2);
    return labels;
}

}  // namespace

TEST(Project, ZeroWeightsBroadcastOutputBias) {
    ProjectionHead head{Tensor::zeros({3, 2}), Tensor::zeros({2}), Tensor::zeros({2, 2}), Tensor::from({2}, {0.5, -1})};
    std::mt19937_64 rng(1);
    auto out = project(Tensor::randn({4, 3}, 1.0, rng), head, {0, 1, 0, 1}, false, 0.1, nullptr);
    EXPECT_EQ(out.z.shape(), (Shape{4, 2}));
    for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_EQ(out.z.at({b, 0}), 0.5);
        EXPECT_EQ(out.z.at({b, 1}), -1.0);
    }
}

TEST(Project, EvaluationModeIsDeterministic) {
    std::mt19937_64 rng(2);
    ProjectionHead head{Tensor::randn({3, 4}, 1.0, rng), Tensor::randn({4}, 1.0, rng), Tensor::randn({4, 2}, 1.0, rng),
                        Tensor::randn({2}, 1.0, rng)};
    auto x = Tensor::randn({5, 3}, 1.0, rng);
    std::vector<int> labels{0, 1, 1, 0, 1};
    EXPECT_EQ(values(project(x, head, labels, false, 0.5, nullptr).z),
              values(project(x, head, labels, false, 0.5, nullptr).z));
}

TEST(Project, HandAffineChain) {
    // [1, 0] A1 + b1 = [2, -1]; relu -> [2, 0]; [2, 0] A2 + b2 = [2*3 + 1, 2*4 - 1] = [7, 7].
    ProjectionHead head{Tensor::from({2, 2}, {2, -1, 5, 5}), Tensor::zeros({2}), Tensor::from({2, 2}, {3, 4, 9, 9}),
                        Tensor::from({2}, {1, -1})};
    auto out = project(Tensor::from({1, 2}, {1, 0}), head, {1}, false, 0.0, nullptr);
    EXPECT_EQ(values(out.z), (std::vector<double>{7, 7}));
    EXPECT_THROW(project(Tensor::from({1, 2}, {1, 0}), head, {1, 0}, false, 0.0, nullptr), ShapeError);
}

TEST(Project, CountsCalls) {
    ProjectionHead head{Tensor::zeros({2, 2}), Tensor::zeros({2}), Tensor::zeros({2, 2}), Tensor::zeros({2})};
    const auto before = projection_call_count();
    project(Tensor::zeros({1, 2}), head, {0}, false, 0.0, nullptr);
    project(Tensor::zeros({1, 2}), head, {0}, false, 0.0, nullptr);
    EXPECT_EQ(projection_call_count(), before + 2);
}

TEST(SclLoss, PairWithSameLabelIsZero) {
    auto r = scl_loss(ProjectedBatch{Tensor::from({2, 3}, {1, 2, 3, -4, 0.5, 2}), {1, 1}}, 0.07);
    EXPECT_NEAR(r.loss.item(), 0.0, 1e-15);
    EXPECT_FALSE(r.no_positive_pairs);
    EXPECT_EQ(r.anchors, 2u);
}

TEST(SclLoss, PairWithDifferentLabelsFlagsNoPositives) {
    auto r = scl_loss(ProjectedBatch{Tensor::from({2, 2}, {1, 0, 0, 1}), {0, 1}}, 0.07);
    EXPECT_EQ(r.loss.item(), 0.0);
    EXPECT_TRUE(r.no_positive_pairs);
    EXPECT_EQ(r.anchors, 0u);
}

TEST(SclLoss, FourUnitVectorsMatchClosedFormAndBruteForce) {
    const double tau = 0.07;
    std::vector<double> z{1, 0, 1, 0, 0, 1, 0, 1};
    const double closed = -std::log(std::exp(1 / tau) / (std::exp(1 / tau) + 2.0));
    const double got = loss_of(Tensor::from({4, 2}, z), {0, 0, 1, 1}, tau);
    EXPECT_NEAR(got, closed, 1e-9);
    EXPECT_NEAR(got, oracle::scl(z, {0, 0, 1, 1}, 2, tau), 1e-9);
}

TEST(SclLoss, MatchesBruteForceOnRandomBatches) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 2 + rng() % 9, p = 1 + rng() % 6;
        auto z = Tensor::randn({b, p}, 1.0, rng);
        auto labels = random_labels(b, rng);
        const double tau = 0.05 + 0.5 * std::uniform_real_distribution<double>()(rng);
        EXPECT_NEAR(loss_of(z, labels, tau), oracle::scl(values(z), labels, p, tau), 1e-9);
    }
}

TEST(SclLoss, NonNegative) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 2 + rng() % 10;
        EXPECT_GE(loss_of(Tensor::randn({b, 4}, 1.0, rng), random_labels(b, rng)), 0.0);
    }
}

TEST(SclLoss, ScaleInvariant) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto z = Tensor::randn({6, 5}, 1.0, rng);
        auto labels = random_labels(6, rng);
        for (double c : {1e-3, 0.5, 7.0, 1e4}) EXPECT_NEAR(loss_of(scale(z, c), labels), loss_of(z, labels), 1e-9);
    }
}

TEST(SclLoss, PermutationInvariant) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 7, p = 3;
        auto z = Tensor::randn({b, p}, 1.0, rng);
        auto labels = random_labels(b, rng);
        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> zp(b * p);
        std::vector<int> lp(b);
        for (std::size_t i = 0; i < b; ++i) {
            lp[i] = labels[perm[i]];
            for (std::size_t k = 0; k < p; ++k) zp[i * p + k] = z.data()[perm[i] * p + k];
        }
        EXPECT_NEAR(loss_of(Tensor::from({b, p}, zp), lp), loss_of(z, labels), 1e-9);
    }
}

TEST(SclLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto z = Tensor::randn({6, 4}, 1.0, rng, true);
        std::vector<int> labels{0, 0, 0, 1, 1, rng() % 2 ? 1 : 0};
        auto r = check_gradients(
            "scl", [&] { return scl_loss(ProjectedBatch{z, labels}, 0.5).loss; }, {z}, 1e-6, 1e-4);
        EXPECT_TRUE(r.passed()) << r.max_rel_error;
    }
}

TEST(SclLoss, Errors) {
    EXPECT_THROW(scl_loss(ProjectedBatch{Tensor::from({1, 2}, {1, 0}), {0}}, 0.07), ContractError);
    EXPECT_THROW(scl_loss(ProjectedBatch{Tensor::from({2, 2}, {1, 0, 0, 1}), {0, 0}}, 0.0), ConfigError);
    EXPECT_THROW(scl_loss(ProjectedBatch{Tensor::from({2, 2}, {1, 0, 0, 1}), {0, 0}}, -1.0), ConfigError);
}

TEST(Diagnostics, OneHotClusters) {
    auto d = embedding_diagnostics(ProjectedBatch{Tensor::from({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1}), {0, 0, 1, 1}});
    EXPECT_NEAR(d.intra_class_mean_cosine, 1.0, 1e-15);
    EXPECT_NEAR(d.inter_class_mean_cosine, 0.0, 1e-15);
    EXPECT_FALSE(d.ratio_defined);
}

TEST(Diagnostics, IdenticalRowsFlagUndefinedRatio) {
    auto d = embedding_diagnostics(ProjectedBatch{Tensor::from({3, 2}, {2, 1, 2, 1, 2, 1}), {0, 1, 1}});
    EXPECT_NEAR(d.intra_class_mean_cosine, 1.0, 1e-15);
    EXPECT_NEAR(d.inter_class_mean_cosine, 1.0, 1e-15);
    EXPECT_FALSE(d.ratio_defined);
}

TEST(Diagnostics, HandSetVectors) {
    // Class 0: (1,0), (1,1); class 1: (0,1), (-1,1). Intra cosines are both 1/sqrt2;
    // the cross pairs are 0, -1/sqrt2, 1/sqrt2, 0.
    auto d = embedding_diagnostics(ProjectedBatch{Tensor::from({4, 2}, {1, 0, 1, 1, 0, 1, -1, 1}), {0, 0, 1, 1}});
    const double r = 1 / std::sqrt(2.0);
    EXPECT_NEAR(d.intra_class_mean_cosine, r, 1e-15);
    EXPECT_NEAR(d.inter_class_mean_cosine, 0.0, 1e-15);
    ASSERT_TRUE(d.ratio_defined);
    EXPECT_NEAR(d.separation_ratio, 1.0 / (1.0 - r), 1e-12);
}

TEST(Diagnostics, SingleClassIsAnError) {
    EXPECT_THROW(embedding_diagnostics(ProjectedBatch{Tensor::from({2, 2}, {1, 0, 0, 1}), {1, 1}}), ContractError);
}
