// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "genfix/errors.hpp"

namespace genfix {

/// Default linear beta endpoints.
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 2e-2;
inline constexpr int kDefaultTimesteps = 1000;

/// Diffusion noise schedule. Step indices are 1..T; index 0 denotes clean
/// data (alpha_bar(0) == 1). Storage is 0-based: betas_[t - 1] is beta_t.
/// Immutable after construction.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
        detail::require(!betas_.empty(), "noise schedule needs at least one step");
        alphas_.reserve(betas_.size());
        alpha_bars_.reserve(betas_.size());
        double running = 1.0;
        for (double b : betas_) {
            detail::require(b > 0.0 && b < 1.0 && std::isfinite(b), "beta must lie in (0, 1)");
            alphas_.push_back(1.0 - b);
            running *= 1.0 - b;
            alpha_bars_.push_back(running);
        }
    }

    int steps() const { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return alphas_[index(t)]; }

    /// Cumulative signal retention; alpha_bar(0) == 1.
    double alpha_bar(int t) const {
        if (t == 0) {
            return 1.0;
        }
        return alpha_bars_[index(t)];
    }

    std::span<const double> betas() const { return betas_; }
    std::span<const double> alphas() const { return alphas_; }
    std::span<const double> alpha_bars() const { return alpha_bars_; }

    void check_step(int t, bool allow_zero = false) const {
        const int lo = allow_zero ? 0 : 1;
        if (t < lo || t > steps()) {
            throw InvalidArgument("step index " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                  std::to_string(steps()) + "]");
        }
    }

private:
    std::size_t index(int t) const {
        check_step(t);
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

/// Betas interpolated linearly from beta_start (t = 1) to beta_end (t = T).
inline NoiseSchedule make_linear_schedule(int T = kDefaultTimesteps, double beta_start = kDefaultBetaStart,
                                          double beta_end = kDefaultBetaEnd) {
    detail::require(T >= 1, "schedule length must be positive");
    detail::require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                    "linear schedule requires 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

/// Closed-form marginal sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
inline torch::Tensor forward_marginal(const NoiseSchedule& s, const torch::Tensor& x0, int t,
                                      const torch::Tensor& eps) {
    s.check_step(t);
    detail::require_same_shape(x0, eps, "forward_marginal");
    const double ab = s.alpha_bar(t);
    return x0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

/// One Markov transition q(x_t | x_{t-1}).
inline torch::Tensor forward_one_step(const NoiseSchedule& s, const torch::Tensor& x_prev, int t,
                                      const torch::Tensor& eps) {
    s.check_step(t);
    detail::require_same_shape(x_prev, eps, "forward_one_step");
    const double b = s.beta(t);
    return x_prev * std::sqrt(1.0 - b) + eps * std::sqrt(b);
}

}  // namespace genfix
