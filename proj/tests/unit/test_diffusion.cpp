// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <gtest/gtest.h>

#include "genfix/diffusion.hpp"
#include "genfix/rng.hpp"
#include "oracles.hpp"

using namespace genfix;

namespace {

torch::Tensor scalar(double v) { return torch::full({1}, v, torch::kFloat64); }

double rms(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).pow(2).mean().sqrt().item<double>(); }

}  // namespace

TEST(PredictX0, InvertsForwardMarginal) {
    auto s = make_linear_schedule();
    Rng rng(3);
    auto x0 = rng.normal_tensor({4, 4}, torch::kFloat64);
    auto eps = rng.normal_tensor({4, 4}, torch::kFloat64);
    for (int t : {1, 250, 999, 1000}) {
        auto xt = forward_marginal(s, x0, t, eps);
        EXPECT_LE((predict_x0(s, xt, eps, t) - x0).abs().max().item<double>(), 1e-6) << "t=" << t;
    }
}

TEST(PredictX0, ZeroNoise) {
    auto s = make_linear_schedule();
    auto xt = torch::randn({3}, torch::kFloat64);
    EXPECT_TRUE(torch::allclose(predict_x0(s, xt, torch::zeros_like(xt), 500), xt / std::sqrt(s.alpha_bar(500)),
                                0, 1e-15));
}

TEST(PredictX0, HandEvaluation) {
    NoiseSchedule s({0.5, 0.5});
    EXPECT_NEAR(predict_x0(s, scalar(0.5 + std::sqrt(0.75)), scalar(1.0), 2).item<double>(), 1.0, 1e-14);
    EXPECT_NEAR(predict_x0(s, scalar(1.3660), scalar(1.0), 2).item<double>(), 1.0, 1e-3);
}

TEST(PredictX0, RejectsBadArguments) {
    auto s = make_linear_schedule(10);
    EXPECT_THROW(predict_x0(s, torch::zeros({2}), torch::zeros({3}), 1), InvalidArgument);
    EXPECT_THROW(predict_x0(s, torch::zeros({2}), torch::zeros({2}), 11), InvalidArgument);
}

TEST(DdimStep, EqualStepsAreIdentity) {
    auto s = make_linear_schedule();
    auto y = torch::randn({2, 3}, torch::kFloat64);
    auto eps = torch::randn({2, 3}, torch::kFloat64);
    EXPECT_TRUE(torch::equal(ddim_reverse_step(s, y, eps, 300, 300), y));
    EXPECT_TRUE(torch::equal(ddim_forward_step(s, y, eps, 300, 300), y));
}

TEST(DdimStep, ReverseToZeroGivesX0Estimate) {
    auto s = make_linear_schedule();
    auto y = torch::randn({5}, torch::kFloat64);
    auto eps = torch::randn({5}, torch::kFloat64);
    EXPECT_TRUE(torch::allclose(ddim_reverse_step(s, y, eps, 700, 0), predict_x0(s, y, eps, 700), 0, 1e-14));
}

TEST(DdimStep, ZeroNoiseContraction) {
    auto s = make_linear_schedule();
    auto x = torch::randn({5}, torch::kFloat64);
    auto out = ddim_forward_step(s, x, torch::zeros_like(x), 100, 400);
    EXPECT_TRUE(torch::allclose(out, x * std::sqrt(s.alpha_bar(400) / s.alpha_bar(100)), 0, 1e-14));
}

TEST(DdimStep, ForwardAndReverseAreMutualInverses) {
    auto s = make_linear_schedule();
    Rng rng(5);
    for (auto [t, u] : {std::pair{0, 17}, {17, 35}, {400, 420}, {979, 1000}}) {
        auto x = rng.normal_tensor({64}, torch::kFloat64);
        auto eps = rng.normal_tensor({64}, torch::kFloat64);
        auto up = ddim_forward_step(s, x, eps, t, u);
        auto back = ddim_reverse_step(s, up, eps, u, t);
        EXPECT_LE(((back - x).norm() / x.norm()).item<double>(), 1e-10) << t << "->" << u;
    }
}

TEST(DdimStep, RejectsWrongOrder) {
    auto s = make_linear_schedule();
    auto x = torch::zeros({2});
    EXPECT_THROW(ddim_reverse_step(s, x, x, 10, 20), InvalidArgument);
    EXPECT_THROW(ddim_forward_step(s, x, x, 20, 10), InvalidArgument);
    EXPECT_THROW(ddim_forward_step(s, x, torch::zeros({3}), 10, 20), InvalidArgument);
}

TEST(StepLadder, InversionDefaults) {
    auto ladder = step_ladder(kDefaultInversionStop, kDefaultInversionSteps);
    ASSERT_EQ(ladder.size(), 49u);
    EXPECT_EQ(ladder.front(), 0);
    EXPECT_EQ(ladder.back(), 840);
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        const int gap = ladder[i] - ladder[i - 1];
        EXPECT_TRUE(gap == 17 || gap == 18) << gap;
        EXPECT_EQ(ladder[i], static_cast<int>(std::lround(i * 17.5)));
    }
}

TEST(StepLadder, DegenerateCases) {
    EXPECT_EQ(step_ladder(0, 10), std::vector<int>{0});
    EXPECT_EQ(step_ladder(3, 10), (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(step_ladder(1000, 1), (std::vector<int>{0, 1000}));
    EXPECT_THROW(step_ladder(10, 0), InvalidArgument);
    EXPECT_THROW(step_ladder(-1, 3), InvalidArgument);
}

TEST(DdimInvert, ZeroStopReturnsInput) {
    auto s = make_linear_schedule();
    oracle::GaussianEpsilon model{&s, 0.0, 1.0};
    auto x0 = torch::randn({2, 2}, torch::kFloat64);
    EXPECT_TRUE(torch::equal(ddim_invert(model, s, x0, 0, 48), x0));
    EXPECT_TRUE(torch::equal(ddim_generate(model, s, x0, 0, 48), x0));
}

TEST(DdimGenerate, GaussianOracleEndpoint) {
    auto s = make_linear_schedule();
    const double mu = 0.4;
    const double sigma2 = 0.25;
    oracle::GaussianEpsilon model{&s, mu, sigma2};
    Rng rng(9);
    auto yT = rng.normal_tensor({256}, torch::kFloat64);
    const auto exact = oracle::gaussian_flow_endpoint(s, yT, s.steps(), mu, sigma2);
    const double coarse = rms(ddim_generate(model, s, yT, s.steps(), 100), exact);
    const double fine = rms(ddim_generate(model, s, yT, s.steps(), 1000), exact);
    EXPECT_LT(fine, 0.5 * coarse);
    EXPECT_LE(fine, 1e-2);
}

TEST(DdimGenerate, PointMassOracleReachesMean) {
    auto s = make_linear_schedule();
    oracle::GaussianEpsilon model{&s, -0.6, 1e-8};
    Rng rng(10);
    auto yT = rng.normal_tensor({1024}, torch::kFloat64);
    auto out = ddim_generate(model, s, yT, s.steps(), 100);
    EXPECT_LE(rms(out, torch::full_like(out, -0.6)), 1e-2);
}

TEST(DdimRoundTrip, GaussianOracleReconstructs) {
    auto s = make_linear_schedule();
    const double mu = 0.3;
    const double sigma2 = 1e-8;
    oracle::GaussianEpsilon model{&s, mu, sigma2};
    Rng rng(13);
    auto x0 = mu + std::sqrt(sigma2) * rng.normal_tensor({512}, torch::kFloat64);
    auto latent = ddim_invert(model, s, x0, s.steps(), 100);
    auto back = ddim_generate(model, s, latent, s.steps(), 100);
    EXPECT_LE(rms(back, x0), 1e-3);
}

TEST(AncestralMean, ZeroNoise) {
    auto s = make_linear_schedule();
    auto x = torch::randn({4}, torch::kFloat64);
    EXPECT_TRUE(torch::allclose(ancestral_mean(s, x, torch::zeros_like(x), 77), x / std::sqrt(s.alpha(77)), 0,
                                1e-15));
}

TEST(AncestralMean, OneStepChainRecoversX0) {
    auto s = make_linear_schedule();
    auto x0 = torch::randn({16}, torch::kFloat64);
    auto eps = torch::randn({16}, torch::kFloat64);
    auto x1 = forward_marginal(s, x0, 1, eps);
    EXPECT_LE((ancestral_mean(s, x1, eps, 1) - x0).abs().max().item<double>(), 1e-6);
}

TEST(AncestralMean, HandEvaluation) {
    NoiseSchedule s({0.5, 0.5});
    const double expected = (1.0 / std::sqrt(0.5)) * (1.366 - 0.5 / std::sqrt(0.75));
    EXPECT_NEAR(ancestral_mean(s, scalar(1.366), scalar(1.0), 2).item<double>(), expected, 1e-14);
    EXPECT_NEAR(expected, 1.1154, 1e-4);
}

TEST(GuidedEpsilon, CollapsesAtOneAndZero) {
    oracle::AffineConditional model;
    auto cond = torch::randn({3, 2, 4, 4}, torch::kFloat64);
    auto y = torch::randn({3, 2, 4, 4}, torch::kFloat64);
    auto cls = class_labels(ArtifactClass::kDdimGaussian, 3);
    auto mask = class_labels(ArtifactClass::kMask, 3);
    EXPECT_TRUE(torch::equal(guided_epsilon(model, cond, y, 50, ArtifactClass::kDdimGaussian, 1.0),
                             model(cond, y, 50, cls)));
    EXPECT_TRUE(torch::equal(guided_epsilon(model, cond, y, 50, ArtifactClass::kDdimGaussian, 0.0),
                             model(cond, y, 50, mask)));
}

TEST(GuidedEpsilon, AffineInScale) {
    oracle::AffineConditional model;
    auto cond = torch::randn({2, 2, 4, 4}, torch::kFloat64);
    auto y = torch::randn({2, 2, 4, 4}, torch::kFloat64);
    auto e0 = guided_epsilon(model, cond, y, 9, ArtifactClass::kReplaceToken, 0.0);
    auto e1 = guided_epsilon(model, cond, y, 9, ArtifactClass::kReplaceToken, 1.0);
    for (double sc : {0.5, 2.0, 3.0, 6.0}) {
        auto es = guided_epsilon(model, cond, y, 9, ArtifactClass::kReplaceToken, sc);
        auto line = e0 + sc * (e1 - e0);
        EXPECT_LE(((es - line).norm() / line.norm()).item<double>(), 1e-10) << sc;
    }
}

TEST(GuidedEpsilon, EvaluatesModelTwice) {
    oracle::AffineConditional model;
    auto x = torch::zeros({1, 1, 2, 2}, torch::kFloat64);
    for (double sc : {0.0, 1.0, 3.0}) {
        model.calls = 0;
        guided_epsilon(model, x, x, 1, ArtifactClass::kGptSampling, sc);
        EXPECT_EQ(model.calls, 2);
    }
}

TEST(GuidedEpsilon, RejectsMaskUnlessScaleIsOne) {
    oracle::AffineConditional model;
    auto x = torch::zeros({2, 1, 2, 2}, torch::kFloat64);
    EXPECT_THROW(guided_epsilon(model, x, x, 1, ArtifactClass::kMask, 3.0), InvalidArgument);
    EXPECT_THROW(guided_epsilon(model, x, x, 1, ArtifactClass::kMask, 0.0), InvalidArgument);
    EXPECT_NO_THROW(guided_epsilon(model, x, x, 1, ArtifactClass::kMask, 1.0));
    EXPECT_THROW(guided_epsilon(model, x, x, 1, torch::zeros({3}, torch::kInt64), 2.0), InvalidArgument);
    EXPECT_THROW(guided_epsilon(model, x, x, 1, ArtifactClass::kDdimScale, -1.0), InvalidArgument);
}

TEST(Ddim, Deterministic) {
    auto s = make_linear_schedule();
    oracle::GaussianEpsilon model{&s, 0.1, 0.5};
    auto x0 = torch::randn({32}, torch::kFloat64);
    auto a = ddim_generate(model, s, ddim_invert(model, s, x0, 840, 48), 840, 48);
    auto b = ddim_generate(model, s, ddim_invert(model, s, x0, 840, 48), 840, 48);
    EXPECT_TRUE(torch::equal(a, b));
}
