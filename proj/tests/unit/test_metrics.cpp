// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <gtest/gtest.h>

#include "genfix/image_io.hpp"
#include "genfix/metrics.hpp"
#include "genfix/rng.hpp"
#include "oracles.hpp"

using namespace genfix;

TEST(Mse, ClosedForms) {
    auto a = torch::rand({3, 16, 16});
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(mse(torch::zeros({3, 8, 8}), torch::ones({3, 8, 8})), 1.0);
}

TEST(Mse, MatchesNaiveOracleAndIsSymmetric) {
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = rng.normal_tensor({3, 17, 23}, torch::kFloat64).sigmoid();
        auto b = rng.normal_tensor({3, 17, 23}, torch::kFloat64).sigmoid();
        EXPECT_NEAR(mse(a, b), oracle::naive_mse(a, b), 1e-12);
        EXPECT_EQ(mse(a, b), mse(b, a));
    }
}

TEST(Mse, RejectsMismatchAndBatches) {
    EXPECT_THROW(mse(torch::zeros({3, 8, 8}), torch::zeros({3, 8, 9})), InvalidArgument);
    EXPECT_THROW(mse(torch::zeros({2, 3, 8, 8}), torch::zeros({2, 3, 8, 8})), InvalidArgument);
    EXPECT_NO_THROW(mse(torch::zeros({1, 3, 8, 8}), torch::zeros({1, 3, 8, 8})));
}

TEST(Psnr, ClosedForms) {
    EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
    EXPECT_EQ(psnr_from_mse(1.0), 0.0);
    EXPECT_TRUE(std::isinf(psnr_from_mse(0.0)));
    auto a = torch::rand({3, 8, 8});
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(psnr(torch::zeros({1, 8, 8}), torch::full({1, 8, 8}, 0.1)), 20.0, 1e-6);
    EXPECT_NEAR(psnr_from_mse(4.0, 2.0), 0.0, 1e-12);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    double prev = psnr_from_mse(1e-6);
    for (double m = 2e-6; m < 10.0; m *= 1.7) {
        const double cur = psnr_from_mse(m);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(Ssim, IdentityIsExactlyOne) {
    Rng rng(2);
    for (int trial = 0; trial < 3; ++trial) {
        auto a = rng.normal_tensor({3, 12, 20}, torch::kFloat64).sigmoid();
        EXPECT_EQ(ssim(a, a), 1.0);
    }
    EXPECT_EQ(ssim(torch::zeros({1, 8, 8}), torch::zeros({1, 8, 8})), 1.0);
}

TEST(Ssim, MatchesNaiveWindowOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 4; ++trial) {
        auto a = rng.normal_tensor({3, 16, 19}, torch::kFloat64).sigmoid();
        auto b = (a + 0.2 * rng.normal_tensor({3, 16, 19}, torch::kFloat64)).clamp(0, 1);
        EXPECT_NEAR(ssim(a, b), oracle::naive_ssim(a, b), 1e-9);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
    }
    auto c1 = torch::full({1, 8, 8}, 0.2, torch::kFloat64);
    auto c2 = torch::full({1, 8, 8}, 0.7, torch::kFloat64);
    const double lum = (2 * 0.2 * 0.7 + 1e-4) / (0.04 + 0.49 + 1e-4);
    EXPECT_NEAR(ssim(c1, c2), oracle::naive_ssim(c1, c2), 1e-9);
    EXPECT_NEAR(ssim(c1, c2), lum, 1e-9);
    EXPECT_LT(ssim(c1, c2), 1.0);
}

TEST(Ssim, InvertedBinaryImageIsNegative) {
    Rng rng(4);
    auto a = (torch::rand({1, 16, 16}) > 0.5).to(torch::kFloat64);
    EXPECT_LT(ssim(a, 1.0 - a), 0.0);
    EXPECT_GE(ssim(a, 1.0 - a), -1.0);
}

TEST(Ssim, RejectsSmallImages) {
    EXPECT_THROW(ssim(torch::zeros({3, 7, 16}), torch::zeros({3, 7, 16})), InvalidArgument);
}

TEST(CompareImages, BundlesAllThree) {
    auto a = torch::zeros({3, 8, 8});
    auto b = torch::full({3, 8, 8}, 0.1);
    auto v = compare_images(a, b);
    EXPECT_NEAR(v.mse, 0.01, 1e-8);
    EXPECT_NEAR(v.psnr, 20.0, 1e-5);
    EXPECT_LE(v.ssim, 1.0);
}

TEST(PixelRange, BoundaryConversion) {
    auto x = torch::tensor({-1.0, 0.0, 1.0, 1.5});
    EXPECT_TRUE(torch::allclose(to_unit_range(x), torch::tensor({0.0, 0.5, 1.0, 1.0})));
    EXPECT_TRUE(torch::allclose(to_model_range(torch::tensor({0.0, 0.5, 1.0})), torch::tensor({-1.0, 0.0, 1.0})));
}
