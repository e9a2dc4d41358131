// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "genfix/artifact_class.hpp"
#include "genfix/artifacts.hpp"
#include "genfix/diffusion.hpp"
#include "genfix/epsilon_net.hpp"
#include "genfix/errors.hpp"
#include "genfix/metrics.hpp"
#include "genfix/rng.hpp"
#include "genfix/schedule.hpp"
#include "genfix/vqae.hpp"

namespace genfix {

struct TrainConfig {
    std::int64_t batch_size = 32;  // full scale: 24
    double learning_rate = 1e-4;
    std::int64_t steps = 8000;     // full scale: 390k
    double mask_prob = 0.5;
    /// Cosine decay of the learning rate down to this fraction of its start
    /// (1 keeps it constant).
    double min_lr_fraction = 1.0;
    /// Exponential moving average of the weights, copied into the network
    /// after the last step (0 disables).
    double ema_decay = 0.0;
    /// Append horizontally mirrored copies of every training image.
    bool mirror = false;
    std::uint64_t seed = 0;
    /// Write an intermediate checkpoint every N steps (0 disables).
    std::int64_t checkpoint_every = 0;

    void validate() const {
        detail::require(batch_size >= 1 && steps >= 1, "batch size and step count must be positive");
        detail::require(learning_rate > 0.0, "learning rate must be positive");
        detail::require(mask_prob >= 0.0 && mask_prob <= 1.0, "mask probability must lie in [0, 1]");
        detail::require(min_lr_fraction > 0.0 && min_lr_fraction <= 1.0, "min_lr_fraction must lie in (0, 1]");
        detail::require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must lie in [0, 1)");
    }
};

/// Replaces each label with MASK independently with probability mask_prob.
/// Returns the number of replaced labels.
inline std::int64_t apply_class_masking(torch::Tensor& labels, double mask_prob, Rng& rng) {
    detail::require(mask_prob >= 0.0 && mask_prob <= 1.0, "mask probability must lie in [0, 1]");
    auto acc = labels.accessor<std::int64_t, 1>();
    std::int64_t masked = 0;
    for (std::int64_t i = 0; i < labels.size(0); ++i) {
        if (rng.bernoulli(mask_prob)) {
            acc[i] = class_index(ArtifactClass::kMask);
            ++masked;
        }
    }
    return masked;
}

/// Noisy targets y_t = sqrt(ab_t) y0 + sqrt(1 - ab_t) eps with one step per
/// sample.
inline torch::Tensor noised_targets(const NoiseSchedule& s, const torch::Tensor& y0, const std::vector<int>& steps,
                                    const torch::Tensor& eps) {
    std::vector<double> sa;
    std::vector<double> sb;
    for (int t : steps) {
        const double ab = s.alpha_bar(t);
        sa.push_back(std::sqrt(ab));
        sb.push_back(std::sqrt(1.0 - ab));
    }
    auto shape = std::vector<std::int64_t>{y0.size(0), 1, 1, 1};
    auto a = torch::tensor(sa, torch::kFloat64).reshape(shape).to(y0.scalar_type());
    auto b = torch::tensor(sb, torch::kFloat64).reshape(shape).to(y0.scalar_type());
    return a * y0 + b * eps;
}

/// Everything drawn at random for one training step; split out so the loss
/// can be re-evaluated on a frozen draw (gradient checks).
struct StepDraw {
    std::vector<int> steps;
    torch::Tensor eps;
    torch::Tensor labels;
    std::int64_t masked = 0;
};

inline StepDraw draw_training_step(const NoiseSchedule& s, const torch::Tensor& y0, const torch::Tensor& labels,
                                   double mask_prob, Rng& rng) {
    StepDraw d;
    const auto n = y0.size(0);
    for (std::int64_t i = 0; i < n; ++i) {
        d.steps.push_back(static_cast<int>(rng.uniform_int(1, s.steps())));
    }
    d.eps = rng.normal_tensor(y0.sizes(), y0.scalar_type());
    if (labels.defined()) {
        d.labels = labels.clone();
        d.masked = apply_class_masking(d.labels, mask_prob, rng);
    }
    return d;
}

/// || eps_theta(x, y_t, t | cls) - eps ||^2, averaged over elements.
inline torch::Tensor training_loss(EpsilonNet& net, const NoiseSchedule& s, const torch::Tensor& cond,
                                   const torch::Tensor& y0, const StepDraw& d) {
    auto y_t = noised_targets(s, y0, d.steps, d.eps);
    auto t = torch::tensor(std::vector<double>(d.steps.begin(), d.steps.end()), torch::kFloat64);
    auto pred = net->forward(y_t, t, cond, d.labels);
    return torch::mse_loss(pred, d.eps);
}

struct StepResult {
    double loss = 0.0;
    std::int64_t masked = 0;
    std::int64_t batch = 0;
};

/// One optimization step on a batch of (condition latent, clean latent,
/// class). cond and labels may be undefined for the unconditional model.
inline StepResult train_step(EpsilonNet& net, torch::optim::Optimizer& opt, const NoiseSchedule& s,
                             const torch::Tensor& cond, const torch::Tensor& y0, const torch::Tensor& labels,
                             double mask_prob, Rng& rng) {
    auto draw = draw_training_step(s, y0, labels, mask_prob, rng);
    auto loss = training_loss(net, s, cond, y0, draw);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
        std::ostringstream diag;
        diag << "non-finite diffusion loss (batch " << y0.size(0) << ", |y0|max " << y0.abs().max().item<double>()
             << ", steps " << draw.steps.front() << "..)";
        throw TrainingFailure(diag.str());
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    return {value, draw.masked, y0.size(0)};
}

/// Latent training pairs (already multiplied by the autoencoder's latent
/// scale).
struct LatentPairs {
    torch::Tensor cond;    // [M, d, h, w], undefined for unconditional data
    torch::Tensor target;  // [M, d, h, w]
    torch::Tensor labels;  // [M], undefined for unconditional data
};

inline torch::Tensor encode_scaled(Autoencoder& ae, const torch::Tensor& images) {
    std::vector<torch::Tensor> parts;
    const auto n = images.size(0);
    for (std::int64_t start = 0; start < n; start += 64) {
        parts.push_back(encode_images(ae, images.slice(0, start, std::min<std::int64_t>(start + 64, n))));
    }
    return torch::cat(parts, 0) * ae->scale();
}

/// Images followed by their horizontal mirror images along the batch axis.
inline torch::Tensor with_mirrored(const torch::Tensor& images) {
    return torch::cat({images, torch::flip(images, {3})}, 0);
}

/// Pairs followed by their mirrored pairs; the labels repeat.
inline PairTensors with_mirrored(const PairTensors& pairs) {
    return {with_mirrored(pairs.clean), with_mirrored(pairs.artifact), torch::cat({pairs.labels, pairs.labels}, 0)};
}

inline LatentPairs encode_pairs(Autoencoder& ae, const PairTensors& pairs) {
    return {encode_scaled(ae, pairs.artifact), encode_scaled(ae, pairs.clean), pairs.labels};
}

struct TrainCurveRow {
    std::int64_t step;
    double loss;
    double masking_rate;  // cumulative fraction of MASK-replaced labels
};

struct TrainResult {
    std::vector<TrainCurveRow> curve;
};

/// Repeat { sample batch; train_step } for cfg.steps with optional cosine
/// learning-rate decay and weight averaging.
inline TrainResult train_diffusion(EpsilonNet& net, const NoiseSchedule& s, const LatentPairs& data,
                                   const TrainConfig& cfg,
                                   const std::function<void(const TrainCurveRow&)>& on_step = {}) {
    cfg.validate();
    if (!data.target.defined() || data.target.size(0) == 0) {
        throw TrainingFailure("diffusion training set is empty");
    }
    Rng rng(Rng::derive(cfg.seed, {0xD1F}));
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    const auto m = data.target.size(0);
    net->train();
    TrainResult result;
    std::int64_t masked = 0;
    std::int64_t seen = 0;
    std::vector<torch::Tensor> ema;
    if (cfg.ema_decay > 0.0) {
        for (const auto& p : net->parameters()) {
            ema.push_back(p.detach().clone());
        }
    }
    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        const double progress = static_cast<double>(step - 1) / static_cast<double>(cfg.steps);
        const double lr_scale = cfg.min_lr_fraction + (1.0 - cfg.min_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress));
        static_cast<torch::optim::AdamOptions&>(opt.param_groups()[0].options()).lr(cfg.learning_rate * lr_scale);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch_size));
        for (auto& i : idx) {
            i = rng.uniform_int(0, m - 1);
        }
        auto index = torch::tensor(idx, torch::kInt64);
        auto y0 = data.target.index_select(0, index);
        auto cond = data.cond.defined() ? data.cond.index_select(0, index) : torch::Tensor();
        auto labels = data.labels.defined() ? data.labels.index_select(0, index) : torch::Tensor();
        auto r = train_step(net, opt, s, cond, y0, labels, cfg.mask_prob, rng);
        if (!ema.empty()) {
            torch::NoGradGuard no_grad;
            auto params = net->parameters();
            for (std::size_t i = 0; i < ema.size(); ++i) {
                ema[i].mul_(cfg.ema_decay).add_(params[i].detach(), 1.0 - cfg.ema_decay);
            }
        }
        masked += r.masked;
        seen += r.batch;
        TrainCurveRow row{step, r.loss, labels.defined() ? static_cast<double>(masked) / static_cast<double>(seen) : 0.0};
        result.curve.push_back(row);
        if (on_step) {
            on_step(row);
        }
    }
    if (!ema.empty()) {
        torch::NoGradGuard no_grad;
        auto params = net->parameters();
        for (std::size_t i = 0; i < ema.size(); ++i) {
            params[i].copy_(ema[i]);
        }
    }
    net->eval();
    return result;
}

/// Mean of the loss curve over [begin, end) (0-based indices).
inline double window_mean(const std::vector<TrainCurveRow>& curve, std::size_t begin, std::size_t end) {
    end = std::min(end, curve.size());
    detail::require(begin < end, "empty curve window");
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        sum += curve[i].loss;
    }
    return sum / static_cast<double>(end - begin);
}

// ---------------------------------------------------------------------------
// Restoration

enum class RestoreMode { kBlind, kNonBlind, kGuided };

inline std::string to_string(RestoreMode m) {
    switch (m) {
        case RestoreMode::kBlind: return "blind";
        case RestoreMode::kNonBlind: return "nonblind";
        case RestoreMode::kGuided: return "guided";
    }
    return "blind";
}

inline RestoreMode restore_mode_from_string(const std::string& s) {
    if (s == "blind") return RestoreMode::kBlind;
    if (s == "nonblind") return RestoreMode::kNonBlind;
    if (s == "guided") return RestoreMode::kGuided;
    throw InvalidArgument("unknown restore mode '" + s + "'");
}

struct RestoreRequest {
    RestoreMode mode = RestoreMode::kGuided;
    ArtifactClass cls = ArtifactClass::kMask;
    double scale = kDefaultGuidanceScale;
    int n_steps = kDefaultRestoreSteps;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(n_steps >= 1, "restoration needs at least one step");
        if (mode != RestoreMode::kBlind) {
            detail::require(cls != ArtifactClass::kMask, "non-blind and guided restoration need a real artifact class");
        }
        if (mode == RestoreMode::kGuided) {
            detail::require(scale >= 0.0 && std::isfinite(scale), "guidance scale must be non-negative");
        }
    }
};

/// Per-sample noise epsilon prediction for one restoration step.
template <ConditionalEpsilon Model>
torch::Tensor restoration_epsilon(const Model& model, RestoreMode mode, const torch::Tensor& cond,
                                  const torch::Tensor& y_t, int t, const torch::Tensor& labels, double scale) {
    switch (mode) {
        case RestoreMode::kBlind: return model(cond, y_t, t, class_labels(ArtifactClass::kMask, y_t.size(0)));
        case RestoreMode::kNonBlind: return model(cond, y_t, t, labels);
        case RestoreMode::kGuided: return guided_epsilon(model, cond, y_t, t, labels, scale);
    }
    return {};
}

/// Deterministic DDIM sampler from y_T = noise down to step 0 along
/// step_ladder(T, n_steps), conditioned on the artifact latent.
template <ConditionalEpsilon Model>
torch::Tensor restore_latents(const Model& model, const NoiseSchedule& s, const torch::Tensor& cond,
                              const torch::Tensor& noise, RestoreMode mode, const torch::Tensor& labels,
                              double scale, int n_steps) {
    detail::require_same_shape(cond, noise, "restore_latents");
    if (mode != RestoreMode::kBlind) {
        detail::require(!(labels == class_index(ArtifactClass::kMask)).any().item<bool>(),
                        "non-blind and guided restoration need a real artifact class");
    }
    const auto ladder = step_ladder(s.steps(), n_steps);
    torch::Tensor y = noise.clone();
    for (std::size_t i = ladder.size() - 1; i > 0; --i) {
        auto eps = restoration_epsilon(model, mode, cond, y, ladder[i], labels, scale);
        y = ddim_reverse_step(s, y, eps, ladder[i], ladder[i - 1]);
    }
    return y;
}

/// Trained restorer: autoencoder, conditional network and schedule.
struct Restorer {
    Autoencoder autoencoder{nullptr};
    EpsilonNet net{nullptr};
    NoiseSchedule schedule = make_linear_schedule();
};

/// Starting noise for one image, a pure function of (seed, index).
inline torch::Tensor restoration_noise(std::uint64_t seed, std::size_t index, torch::IntArrayRef latent_shape) {
    Rng rng(Rng::derive(seed, {0x2E5, static_cast<std::uint64_t>(index)}));
    return rng.normal_tensor(latent_shape);
}

/// Restore a batch of artifact images [N, C, H, W] in [-1, 1]. labels gives
/// the per-image class (ignored in blind mode); image i starts from
/// restoration_noise(seed, first_index + i).
inline torch::Tensor restore_images(Restorer& r, const torch::Tensor& artifacts, RestoreMode mode,
                                    const torch::Tensor& labels, double scale, int n_steps, std::uint64_t seed,
                                    std::size_t first_index = 0) {
    auto cond = encode_scaled(r.autoencoder, artifacts);
    std::vector<torch::Tensor> noise;
    for (std::int64_t i = 0; i < cond.size(0); ++i) {
        noise.push_back(restoration_noise(seed, first_index + static_cast<std::size_t>(i), cond[0].sizes()));
    }
    ConditionalPredictor predictor{r.net};
    auto y0 = restore_latents(predictor, r.schedule, cond, torch::stack(noise), mode, labels, scale, n_steps);
    return decode_latents(r.autoencoder, y0 / r.autoencoder->scale());
}

inline torch::Tensor restore(Restorer& r, const torch::Tensor& artifacts, const RestoreRequest& req) {
    req.validate();
    auto batch = detail::as_batch(artifacts);
    auto labels = torch::full({batch.size(0)}, class_index(req.cls), torch::kInt64);
    return restore_images(r, batch, req.mode, labels, req.scale, req.n_steps, req.seed);
}

// ---------------------------------------------------------------------------
// Evaluation

struct ReportRow {
    std::string mode;
    std::string cls;  // artifact class name or "ALL"
    std::int64_t count = 0;
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalOptions {
    std::vector<RestoreMode> modes = {RestoreMode::kBlind, RestoreMode::kNonBlind, RestoreMode::kGuided};
    double guidance_scale = kDefaultGuidanceScale;
    int n_steps = kDefaultRestoreSteps;
    std::uint64_t seed = 0;
    std::int64_t batch_size = 64;
};

struct PairMetrics {
    ArtifactClass label;
    MetricValues restored;
    MetricValues artifact;
};

/// Per-image metrics of restored and artifact images against the clean
/// targets, in [0, 1] pixel units. Restored images ([0, 1]) are appended to
/// `restored_out` when given.
inline std::vector<PairMetrics> restore_and_score(Restorer& r, const PairTensors& pairs, RestoreMode mode,
                                                  double scale, int n_steps, std::uint64_t seed,
                                                  std::int64_t batch_size = 64,
                                                  std::vector<torch::Tensor>* restored_out = nullptr) {
    std::vector<PairMetrics> out;
    const auto n = pairs.clean.size(0);
    for (std::int64_t start = 0; start < n; start += batch_size) {
        const auto end = std::min(start + batch_size, n);
        auto restored = restore_images(r, pairs.artifact.slice(0, start, end), mode, pairs.labels.slice(0, start, end),
                                       scale, n_steps, seed, static_cast<std::size_t>(start));
        for (std::int64_t i = start; i < end; ++i) {
            auto clean = to_unit_range(pairs.clean[i]);
            auto restored_unit = to_unit_range(restored[i - start]);
            if (restored_out) {
                restored_out->push_back(restored_unit);
            }
            out.push_back({static_cast<ArtifactClass>(pairs.labels[i].item<std::int64_t>()),
                           compare_images(restored_unit, clean),
                           compare_images(to_unit_range(pairs.artifact[i]), clean)});
        }
    }
    return out;
}

inline ReportRow summarize(const std::string& mode, const std::string& cls, const std::vector<MetricValues>& values) {
    ReportRow row{mode, cls, static_cast<std::int64_t>(values.size())};
    for (const auto& v : values) {
        row.mse += v.mse;
        row.psnr += v.psnr;
        row.ssim += v.ssim;
    }
    if (!values.empty()) {
        const auto n = static_cast<double>(values.size());
        row.mse /= n;
        row.psnr /= n;
        row.ssim /= n;
    }
    return row;
}

/// Per-class rows (classes present, enum order) then an "ALL" row. With
/// `baseline` the artifact images are scored instead of the restorations.
inline std::vector<ReportRow> summarize_scores(const std::string& mode, const std::vector<PairMetrics>& scored,
                                               bool baseline = false) {
    std::map<ArtifactClass, std::vector<MetricValues>> by_class;
    std::vector<MetricValues> all;
    for (const auto& s : scored) {
        const auto& v = baseline ? s.artifact : s.restored;
        by_class[s.label].push_back(v);
        all.push_back(v);
    }
    std::vector<ReportRow> rows;
    for (const auto& [cls, values] : by_class) {
        rows.push_back(summarize(mode, std::string(to_string(cls)), values));
    }
    rows.push_back(summarize(mode, "ALL", all));
    return rows;
}

/// Restores every manifest record in each mode and reports per-class and
/// overall metrics.
inline std::vector<ReportRow> evaluate(Restorer& r, const Manifest& manifest, const EvalOptions& opts) {
    if (manifest.records.empty()) {
        throw InvalidArgument("cannot evaluate an empty manifest");
    }
    auto pairs = load_pairs(manifest);
    std::vector<ReportRow> rows;
    for (auto mode : opts.modes) {
        auto scored = restore_and_score(r, pairs, mode, opts.guidance_scale, opts.n_steps, opts.seed, opts.batch_size);
        auto part = summarize_scores(to_string(mode), scored);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

}  // namespace genfix
