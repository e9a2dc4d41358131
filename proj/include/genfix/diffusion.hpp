// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <concepts>
#include <vector>

#include <torch/torch.h>

#include "genfix/artifact_class.hpp"
#include "genfix/errors.hpp"
#include "genfix/schedule.hpp"

namespace genfix {

/// eps(y_t, t): noise predictor without any conditioning input.
template <class F>
concept UnconditionalEpsilon = requires(const F& f, const torch::Tensor& y, int t) {
    { f(y, t) } -> std::convertible_to<torch::Tensor>;
};

/// eps(x, y_t, t | labels): predictor conditioned on a condition latent and one
/// class label per batch element (int64 tensor of shape [N]).
template <class F>
concept ConditionalEpsilon = requires(const F& f, const torch::Tensor& cond, const torch::Tensor& y, int t,
                                      const torch::Tensor& labels) {
    { f(cond, y, t, labels) } -> std::convertible_to<torch::Tensor>;
};

inline constexpr double kDefaultGuidanceScale = 3.0;
inline constexpr int kDefaultRestoreSteps = 30;
inline constexpr int kDefaultInversionStop = 840;
inline constexpr int kDefaultInversionSteps = 48;

/// Evenly spaced integer ladder 0 = t_0 < t_1 < ... < t_n = stop, with
/// t_i = round(i * stop / n). Shared by inversion and generation so both
/// directions visit the same steps. When n exceeds stop the ladder has stop
/// rungs (every integer step). stop == 0 gives the single rung {0}.
inline std::vector<int> step_ladder(int stop, int n_steps) {
    detail::require(stop >= 0, "ladder stop must be non-negative");
    detail::require(n_steps >= 1, "ladder needs at least one step");
    std::vector<int> ladder{0};
    if (stop == 0) {
        return ladder;
    }
    const int n = std::min(n_steps, stop);
    for (int i = 1; i <= n; ++i) {
        const auto t = static_cast<int>(std::llround(static_cast<double>(i) * stop / n));
        ladder.push_back(t);
    }
    return ladder;
}

/// x0 estimate (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t). Step 0 is accepted and
/// returns x_t.
inline torch::Tensor predict_x0(const NoiseSchedule& s, const torch::Tensor& x_t, const torch::Tensor& eps, int t) {
    s.check_step(t, true);
    detail::require_same_shape(x_t, eps, "predict_x0");
    const double ab = s.alpha_bar(t);
    return (x_t - eps * std::sqrt(1.0 - ab)) / std::sqrt(ab);
}

namespace detail {

inline torch::Tensor ddim_move(const NoiseSchedule& s, const torch::Tensor& x_t, const torch::Tensor& eps, int t,
                               int t_to) {
    const auto x0 = predict_x0(s, x_t, eps, t);
    const double ab_to = s.alpha_bar(t_to);
    return x0 * std::sqrt(ab_to) + eps * std::sqrt(1.0 - ab_to);
}

}  // namespace detail

/// Deterministic reverse step t -> t_prev (sigma = 0).
inline torch::Tensor ddim_reverse_step(const NoiseSchedule& s, const torch::Tensor& y_t, const torch::Tensor& eps,
                                       int t, int t_prev) {
    s.check_step(t, true);
    s.check_step(t_prev, true);
    detail::require(t_prev <= t, "ddim_reverse_step requires t_prev <= t");
    detail::require_same_shape(y_t, eps, "ddim_reverse_step");
    if (t_prev == t) {
        return y_t.clone();
    }
    return detail::ddim_move(s, y_t, eps, t, t_prev);
}

/// Deterministic forward (inversion) step t -> t_next.
inline torch::Tensor ddim_forward_step(const NoiseSchedule& s, const torch::Tensor& x_t, const torch::Tensor& eps,
                                       int t, int t_next) {
    s.check_step(t, true);
    s.check_step(t_next, true);
    detail::require(t_next >= t, "ddim_forward_step requires t_next >= t");
    detail::require_same_shape(x_t, eps, "ddim_forward_step");
    if (t_next == t) {
        return x_t.clone();
    }
    return detail::ddim_move(s, x_t, eps, t, t_next);
}

/// Map clean x0 to its deterministic latent code at step `stop`.
template <UnconditionalEpsilon Model>
torch::Tensor ddim_invert(const Model& model, const NoiseSchedule& s, const torch::Tensor& x0, int stop,
                          int n_steps) {
    s.check_step(stop, true);
    const auto ladder = step_ladder(stop, n_steps);
    torch::Tensor x = x0.clone();
    for (std::size_t i = 0; i + 1 < ladder.size(); ++i) {
        torch::Tensor eps = model(x, ladder[i]);
        x = ddim_forward_step(s, x, eps, ladder[i], ladder[i + 1]);
    }
    return x;
}

/// Deterministic generation from a latent at step `stop` down to clean data.
template <UnconditionalEpsilon Model>
torch::Tensor ddim_generate(const Model& model, const NoiseSchedule& s, const torch::Tensor& latent, int stop,
                            int n_steps) {
    s.check_step(stop, true);
    const auto ladder = step_ladder(stop, n_steps);
    torch::Tensor y = latent.clone();
    for (std::size_t i = ladder.size() - 1; i > 0; --i) {
        torch::Tensor eps = model(y, ladder[i]);
        y = ddim_reverse_step(s, y, eps, ladder[i], ladder[i - 1]);
    }
    return y;
}

/// Posterior mean of the ancestral sampler:
/// (x_t - beta_t / sqrt(1 - ab_t) eps) / sqrt(alpha_t).
inline torch::Tensor ancestral_mean(const NoiseSchedule& s, const torch::Tensor& x_t, const torch::Tensor& eps,
                                    int t) {
    s.check_step(t);
    detail::require_same_shape(x_t, eps, "ancestral_mean");
    const double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    return (x_t - eps * coef) / std::sqrt(s.alpha(t));
}

/// Generalized DDIM step with explicit noise level sigma; sigma == 0 is the
/// deterministic reverse step. Test utility only, not used for restoration.
inline torch::Tensor ddim_stochastic_step(const NoiseSchedule& s, const torch::Tensor& x_t,
                                          const torch::Tensor& eps, int t, int t_prev, double sigma,
                                          const torch::Tensor& noise) {
    s.check_step(t);
    s.check_step(t_prev, true);
    detail::require(t_prev < t, "ddim_stochastic_step requires t_prev < t");
    detail::require_same_shape(x_t, noise, "ddim_stochastic_step");
    const double ab_prev = s.alpha_bar(t_prev);
    detail::require(sigma >= 0.0 && sigma * sigma <= 1.0 - ab_prev, "sigma exceeds the admissible range");
    const auto x0 = predict_x0(s, x_t, eps, t);
    return x0 * std::sqrt(ab_prev) + eps * std::sqrt(1.0 - ab_prev - sigma * sigma) + noise * sigma;
}

inline torch::Tensor class_labels(ArtifactClass c, std::int64_t batch) {
    return torch::full({batch}, class_index(c), torch::kInt64);
}

/// Classifier-free guidance with one class per batch element:
/// eps(.|MASK) + scale * (eps(.|labels) - eps(.|MASK)). Always evaluates the
/// model exactly twice; scale 1 and 0 return the conditional and MASK
/// predictions bit-for-bit.
template <ConditionalEpsilon Model>
torch::Tensor guided_epsilon(const Model& model, const torch::Tensor& cond, const torch::Tensor& y_t, int t,
                             const torch::Tensor& labels, double scale) {
    detail::require(scale >= 0.0 && std::isfinite(scale), "guidance scale must be a finite non-negative number");
    detail::require(labels.dim() == 1 && labels.size(0) == y_t.size(0), "one label per batch element required");
    const bool any_mask = (labels == class_index(ArtifactClass::kMask)).any().item<bool>();
    detail::require(!any_mask || scale == 1.0, "guidance toward MASK is undefined");
    torch::Tensor eps_cls = model(cond, y_t, t, labels);
    torch::Tensor eps_mask = model(cond, y_t, t, class_labels(ArtifactClass::kMask, y_t.size(0)));
    if (scale == 1.0) {
        return eps_cls;
    }
    if (scale == 0.0) {
        return eps_mask;
    }
    return eps_mask + (eps_cls - eps_mask) * scale;
}

template <ConditionalEpsilon Model>
torch::Tensor guided_epsilon(const Model& model, const torch::Tensor& cond, const torch::Tensor& y_t, int t,
                             ArtifactClass cls, double scale) {
    return guided_epsilon(model, cond, y_t, t, class_labels(cls, y_t.size(0)), scale);
}

}  // namespace genfix
