// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <torch/torch.h>

#include "genfix/errors.hpp"

namespace genfix {

// All metrics expect images in [0, 1] (see to_unit_range) with identical
// shapes, either [C, H, W] or [1, C, H, W].

inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

namespace detail {

inline torch::Tensor metric_view(const torch::Tensor& x) {
    if (x.dim() == 4) {
        require(x.size(0) == 1, "metrics take one image at a time");
        return x[0].to(torch::kFloat64).contiguous();
    }
    require(x.dim() == 3, "metric input must be C x H x W");
    return x.to(torch::kFloat64).contiguous();
}

}  // namespace detail

inline double mse(const torch::Tensor& a, const torch::Tensor& b) {
    auto x = detail::metric_view(a);
    auto y = detail::metric_view(b);
    detail::require_same_shape(x, y, "mse");
    return (x - y).pow(2).mean().item<double>();
}

/// 10 log10(max^2 / mse); +inf when the images are identical.
inline double psnr_from_mse(double mse_value, double max_value = 1.0) {
    if (mse_value == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(max_value * max_value / mse_value);
}

inline double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value = 1.0) {
    return psnr_from_mse(mse(a, b), max_value);
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights, population
/// moments) of the channel-mean grayscale images, L = 1.
inline double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    auto x = detail::metric_view(a);
    auto y = detail::metric_view(b);
    detail::require_same_shape(x, y, "ssim");
    const auto h = x.size(1);
    const auto w = x.size(2);
    detail::require(h >= kSsimWindow && w >= kSsimWindow, "image smaller than the SSIM window");
    auto gx = x.mean(0).contiguous();
    auto gy = y.mean(0).contiguous();
    auto ax = gx.accessor<double, 2>();
    auto ay = gy.accessor<double, 2>();

    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;
    const double n = kSsimWindow * kSsimWindow;
    double total = 0.0;
    std::int64_t windows = 0;
    for (std::int64_t i = 0; i + kSsimWindow <= h; ++i) {
        for (std::int64_t j = 0; j + kSsimWindow <= w; ++j) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int di = 0; di < kSsimWindow; ++di) {
                for (int dj = 0; dj < kSsimWindow; ++dj) {
                    const double u = ax[i + di][j + dj];
                    const double v = ay[i + di][j + dj];
                    sx += u;
                    sy += v;
                    sxx += u * u;
                    syy += v * v;
                    sxy += u * v;
                }
            }
            const double mx = sx / n;
            const double my = sy / n;
            const double vx = sxx / n - mx * mx;
            const double vy = syy / n - my * my;
            const double cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

struct MetricValues {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

inline MetricValues compare_images(const torch::Tensor& a, const torch::Tensor& b) {
    const double m = mse(a, b);
    return {m, psnr_from_mse(m), ssim(a, b)};
}

}  // namespace genfix
