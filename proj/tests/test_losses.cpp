#include <gtest/gtest.h>

#include <cmath>

#include "refinegan/losses.hpp"

namespace rg = refinegan;

namespace {

rg::Tensor<float> tensor_of(const std::vector<float>& vals) {
    rg::Tensor<float> t(1, 1, vals.size(), 1);
    for (std::size_t i = 0; i < vals.size(); ++i) t[i] = vals[i];
    return t;
}

rg::Tensor<float> random_binary(std::size_t h, std::size_t w, rg::Rng& rng, double p = 0.3) {
    rg::Tensor<float> t(1, h, w, 1);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rg::rand_uniform(rng) < p ? 1.0f : 0.0f;
    return t;
}

}  // namespace

TEST(DLoss, KnownValues) {
    // -log(0.8) - log(1-0.3) averaged over two entries with the same values
    const auto real = tensor_of({0.8f, 0.8f});
    const auto fake = tensor_of({0.3f, 0.3f});
    const double expect = -std::log(0.8) - std::log(0.7);
    EXPECT_NEAR(rg::d_loss(real, fake), expect, 1e-6);
}

TEST(DLoss, PerfectDiscriminatorApproachesZero) {
    const auto real = tensor_of({1.0f, 1.0f});
    const auto fake = tensor_of({0.0f, 0.0f});
    // clamped at 1e-7 so the loss is tiny but finite
    EXPECT_LT(rg::d_loss(real, fake), 1e-5);
    EXPECT_GE(rg::d_loss(real, fake), 0.0);
}

TEST(DLoss, ClampKeepsFinite) {
    const auto real = tensor_of({0.0f});
    const auto fake = tensor_of({1.0f});
    EXPECT_TRUE(std::isfinite(rg::d_loss(real, fake)));
}

TEST(GAdvLoss, KnownValueAndNonSaturation) {
    const auto fake = tensor_of({0.25f, 0.5f});
    const double expect = 0.5 * (-std::log(0.25) - std::log(0.5));
    EXPECT_NEAR(rg::g_adv_loss(fake), expect, 1e-6);
    // non-saturating form: -log d(fake), decreasing in d(fake)
    EXPECT_GT(rg::g_adv_loss(tensor_of({0.1f})), rg::g_adv_loss(tensor_of({0.9f})));
}

TEST(L1Loss, MeanAbsoluteDifference) {
    const auto pred = tensor_of({0.0f, 1.0f, 0.5f, 0.25f});
    const auto truth = tensor_of({1.0f, 1.0f, 0.0f, 0.25f});
    EXPECT_NEAR(rg::l1_loss(pred, truth), (1.0 + 0.0 + 0.5 + 0.0) / 4.0, 1e-7);
}

TEST(SegLoss, WeightedSum) {
    rg::LossWeights w;
    EXPECT_DOUBLE_EQ(w.lambda_l1, 1.0);
    EXPECT_DOUBLE_EQ(rg::seg_loss(0.7, 0.2, w), 0.9);
    w.lambda_l1 = 10.0;
    EXPECT_DOUBLE_EQ(rg::seg_loss(0.7, 0.2, w), 2.7);
}

TEST(BceLoss, KnownValues) {
    const auto pred = tensor_of({0.9f, 0.2f});
    const auto target = tensor_of({1.0f, 0.0f});
    const double expect = 0.5 * (-std::log(0.9) - std::log(0.8));
    EXPECT_NEAR(rg::bce_loss(pred, target), expect, 1e-6);
}

TEST(ErrorMasks, DefinitionOnMixedValues) {
    const auto truth = tensor_of({1.0f, 0.0f, 1.0f, 0.0f});
    const auto pred = tensor_of({0.0f, 1.0f, 1.0f, 0.0f});
    const auto fn = rg::fn_mask(truth, pred);
    const auto fp = rg::fp_mask(truth, pred);
    EXPECT_FLOAT_EQ(fn[0], 1.0f);  // missed voxel
    EXPECT_FLOAT_EQ(fn[1], 0.0f);
    EXPECT_FLOAT_EQ(fp[1], 1.0f);  // spurious voxel
    EXPECT_FLOAT_EQ(fp[0], 0.0f);
    EXPECT_FLOAT_EQ(fn[2], 0.0f);
    EXPECT_FLOAT_EQ(fp[2], 0.0f);
}

TEST(ErrorMasks, CompositionRecoversTruth) {
    rg::Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = random_binary(16, 16, rng);
        const auto pred = random_binary(16, 16, rng, 0.5);
        const auto fp = rg::fp_mask(truth, pred);
        const auto fn = rg::fn_mask(truth, pred);
        const auto composed = rg::compose(pred, fp, fn);
        for (std::size_t i = 0; i < truth.size(); ++i) {
            ASSERT_EQ(composed[i], truth[i]);
            ASSERT_EQ(fp[i] * fn[i], 0.0f);  // disjoint support
        }
    }
}

TEST(ErrorMasks, ClipBoundsSoftInputs) {
    const auto truth = tensor_of({0.9f, 0.1f});
    const auto pred = tensor_of({0.2f, 0.8f});
    const auto fn = rg::fn_mask(truth, pred);
    const auto fp = rg::fp_mask(truth, pred);
    EXPECT_NEAR(fn[0], 0.7, 1e-6);
    EXPECT_NEAR(fp[0], 0.0, 1e-6);
    EXPECT_NEAR(fp[1], 0.7, 1e-6);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_GE(fn[i], 0.0f);
        EXPECT_LE(fn[i], 1.0f);
        EXPECT_GE(fp[i], 0.0f);
        EXPECT_LE(fp[i], 1.0f);
    }
}

TEST(FinalizeLabels, SingleChannelThreshold) {
    rg::Tensor<float> composed(1, 1, 3, 1);
    composed[0] = 0.2f;
    composed[1] = 0.51f;
    composed[2] = 0.5f;  // exactly at threshold stays background
    const auto labels = rg::finalize_labels(composed);
    EXPECT_EQ(labels[0], 0);
    EXPECT_EQ(labels[1], 1);
    EXPECT_EQ(labels[2], 0);
}

TEST(FinalizeLabels, MultiChannelArgmax) {
    rg::Tensor<float> composed(1, 1, 2, 3);
    composed(0, 0, 0, 0) = 0.2f;
    composed(0, 0, 0, 1) = 0.7f;
    composed(0, 0, 0, 2) = 0.1f;
    composed(0, 0, 1, 0) = 0.1f;
    composed(0, 0, 1, 1) = 0.2f;
    composed(0, 0, 1, 2) = 0.9f;
    const auto labels = rg::finalize_labels(composed);
    EXPECT_EQ(labels[0], 1);
    EXPECT_EQ(labels[1], 2);
}

// --- gradient helpers: spot-check the closed forms on scalars ---

TEST(LossGrads, DLossGradClosedForm) {
    const auto real = tensor_of({0.62f, 0.8f});
    const auto fake = tensor_of({0.37f, 0.1f});
    rg::Tensor<float> g_real, g_fake;
    rg::d_loss_grads(real, fake, g_real, g_fake);
    EXPECT_NEAR(g_real[0], -1.0 / (2 * 0.62), 1e-5);
    EXPECT_NEAR(g_real[1], -1.0 / (2 * 0.8), 1e-5);
    EXPECT_NEAR(g_fake[0], 1.0 / (2 * (1.0 - 0.37)), 1e-5);
    EXPECT_NEAR(g_fake[1], 1.0 / (2 * (1.0 - 0.1)), 1e-5);
}

TEST(LossGrads, GAdvGradSign) {
    const auto fake = tensor_of({0.4f});
    const auto g = rg::g_adv_grad(fake);
    EXPECT_NEAR(g[0], -1.0 / 0.4, 1e-5);  // pushes d(fake) upward
}

TEST(LossGrads, L1GradIsSignOverN) {
    const auto pred = tensor_of({0.7f, 0.1f, 0.5f});
    const auto truth = tensor_of({0.2f, 0.6f, 0.5f});
    const auto g = rg::l1_grad(pred, truth);
    EXPECT_NEAR(g[0], 1.0 / 3.0, 1e-6);
    EXPECT_NEAR(g[1], -1.0 / 3.0, 1e-6);
    EXPECT_FLOAT_EQ(g[2], 0.0f);
}

TEST(LossGrads, BceGradClosedForm) {
    const auto pred = tensor_of({0.3f});
    const auto target = tensor_of({1.0f});
    const auto g = rg::bce_grad(pred, target);
    EXPECT_NEAR(g[0], -1.0 / 0.3, 1e-4);
}

TEST(LossGrads, ZeroOutsideClampRange) {
    const auto pred = tensor_of({1.0f, 0.0f});
    const auto target = tensor_of({0.0f, 1.0f});
    const auto g = rg::bce_grad(pred, target);
    EXPECT_FLOAT_EQ(g[0], 0.0f);
    EXPECT_FLOAT_EQ(g[1], 0.0f);
    rg::Tensor<float> g_real, g_fake;
    rg::d_loss_grads(tensor_of({1.0f}), tensor_of({0.0f}), g_real, g_fake);
    EXPECT_FLOAT_EQ(g_real[0], 0.0f);
    EXPECT_FLOAT_EQ(g_fake[0], 0.0f);
}
