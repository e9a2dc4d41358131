// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <gtest/gtest.h>

#include "genfix/rng.hpp"
#include "genfix/schedule.hpp"

using namespace genfix;

TEST(Schedule, DefaultHasOneThousandSteps) {
    auto s = make_linear_schedule();
    EXPECT_EQ(s.steps(), 1000);
    EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta(1000), 2e-2);
}

TEST(Schedule, SingleStepProduct) {
    auto s = make_linear_schedule(1, 0.5, 0.5);
    EXPECT_EQ(s.steps(), 1);
    EXPECT_DOUBLE_EQ(s.beta(1), 0.5);
    EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
}

TEST(Schedule, TwoStepProduct) {
    NoiseSchedule s({0.5, 0.5});
    EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
    EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.25);
}

TEST(Schedule, ZeroIsCleanData) { EXPECT_EQ(make_linear_schedule().alpha_bar(0), 1.0); }

TEST(Schedule, InvariantsHold) {
    auto s = make_linear_schedule();
    const int T = s.steps();
    long double product = 1.0L;
    for (int t = 1; t <= T; ++t) {
        EXPECT_GT(s.beta(t), 0.0);
        EXPECT_LT(s.beta(t), 1.0);
        EXPECT_EQ(s.alpha(t), 1.0 - s.beta(t));
        EXPECT_EQ(s.alpha_bar(t), (t == 1 ? 1.0 : s.alpha_bar(t - 1)) * s.alpha(t));
        if (t > 1) {
            EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
        }
        // independent extended-precision product
        product *= 1.0L - static_cast<long double>(1e-4 + (2e-2 - 1e-4) * (t - 1) / (T - 1.0));
        EXPECT_LE(std::abs(static_cast<double>(product) - s.alpha_bar(t)) / s.alpha_bar(t), 1e-12) << "t=" << t;
    }
    EXPECT_GT(s.alpha_bar(T), 0.0);
    EXPECT_LT(s.alpha_bar(T), s.alpha_bar(1));
    EXPECT_LT(s.alpha_bar(1), 1.0);
}

TEST(Schedule, LinearInterpolation) {
    auto s = make_linear_schedule(5, 0.1, 0.5);
    const double expected[] = {0.1, 0.2, 0.3, 0.4, 0.5};
    for (int t = 1; t <= 5; ++t) {
        EXPECT_NEAR(s.beta(t), expected[t - 1], 1e-15);
    }
}

TEST(Schedule, RejectsBadBounds) {
    EXPECT_THROW(make_linear_schedule(0), InvalidArgument);
    EXPECT_THROW(make_linear_schedule(10, 0.0, 0.1), InvalidArgument);
    EXPECT_THROW(make_linear_schedule(10, 0.2, 0.1), InvalidArgument);
    EXPECT_THROW(make_linear_schedule(10, 0.1, 1.0), InvalidArgument);
    EXPECT_THROW(NoiseSchedule({}), InvalidArgument);
    EXPECT_THROW(NoiseSchedule({0.5, 1.5}), InvalidArgument);
}

TEST(Schedule, RejectsOutOfRangeSteps) {
    auto s = make_linear_schedule(10);
    EXPECT_THROW(s.beta(0), InvalidArgument);
    EXPECT_THROW(s.beta(11), InvalidArgument);
    EXPECT_THROW(s.alpha_bar(11), InvalidArgument);
    EXPECT_THROW(s.alpha_bar(-1), InvalidArgument);
}

TEST(ForwardMarginal, ZeroNoiseAndZeroSignal) {
    auto s = make_linear_schedule();
    auto x0 = torch::randn({2, 3}, torch::kFloat64);
    auto zero = torch::zeros_like(x0);
    auto eps = torch::randn({2, 3}, torch::kFloat64);
    const int t = 400;
    EXPECT_TRUE(torch::allclose(forward_marginal(s, x0, t, zero), x0 * std::sqrt(s.alpha_bar(t)), 0, 1e-15));
    EXPECT_TRUE(torch::allclose(forward_marginal(s, zero, t, eps), eps * std::sqrt(1 - s.alpha_bar(t)), 0, 1e-15));
}

TEST(ForwardMarginal, HandEvaluation) {
    NoiseSchedule s({0.5, 0.5});
    auto one = torch::ones({1}, torch::kFloat64);
    EXPECT_NEAR(forward_marginal(s, one, 2, one).item<double>(), 0.5 + std::sqrt(0.75), 1e-15);
    EXPECT_NEAR(forward_marginal(s, one, 2, one).item<double>(), 1.3660, 1e-4);
}

TEST(ForwardMarginal, RejectsBadArguments) {
    auto s = make_linear_schedule(10);
    auto x = torch::zeros({3});
    EXPECT_THROW(forward_marginal(s, x, 1, torch::zeros({4})), InvalidArgument);
    EXPECT_THROW(forward_marginal(s, x, 0, x), InvalidArgument);
    EXPECT_THROW(forward_marginal(s, x, 11, x), InvalidArgument);
    EXPECT_THROW(forward_one_step(s, x, 1, torch::zeros({2})), InvalidArgument);
}

TEST(ForwardOneStep, ZeroNoiseAndVanishingBeta) {
    NoiseSchedule s({1e-300, 0.3});
    auto x = torch::randn({5}, torch::kFloat64);
    EXPECT_TRUE(torch::allclose(forward_one_step(s, x, 2, torch::zeros_like(x)), x * std::sqrt(0.7), 0, 1e-15));
    EXPECT_TRUE(torch::allclose(forward_one_step(s, x, 1, torch::randn({5}, torch::kFloat64)), x, 0, 1e-140));
}

TEST(ForwardMarginal, MonteCarloMoments) {
    auto s = make_linear_schedule();
    Rng rng(11);
    const std::int64_t n = 100000;
    for (int t : {1, 500, 1000}) {
        auto x0 = torch::full({n}, 0.7, torch::kFloat64);
        auto xt = forward_marginal(s, x0, t, rng.normal_tensor({n}, torch::kFloat64));
        const double mean = xt.mean().item<double>();
        const double var = xt.var().item<double>();
        const double sd = std::sqrt(1 - s.alpha_bar(t));
        EXPECT_LE(std::abs(mean - std::sqrt(s.alpha_bar(t)) * 0.7), 4 * sd / std::sqrt(n)) << "t=" << t;
        EXPECT_LE(std::abs(var - sd * sd), 4 * sd * sd * std::sqrt(2.0 / (n - 1))) << "t=" << t;
    }
}
