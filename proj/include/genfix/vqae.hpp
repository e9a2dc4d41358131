// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/errors.hpp"
#include "genfix/nn.hpp"
#include "genfix/rng.hpp"

namespace genfix {

/// K x d table of code vectors.
struct Codebook {
    torch::Tensor entries;  // [K, d], float32

    std::int64_t size() const { return entries.size(0); }
    std::int64_t dim() const { return entries.size(1); }

    /// K >= 2, finite entries, no two entries within 1e-9 of each other.
    void validate() const {
        if (!entries.defined() || entries.dim() != 2) {
            throw CorruptData("codebook must be a K x d matrix");
        }
        if (size() < 2) {
            throw CorruptData("codebook needs at least two entries");
        }
        auto e = entries.to(torch::kFloat64).contiguous();
        if (!torch::isfinite(e).all().item<bool>()) {
            throw CorruptData("codebook has non-finite entries");
        }
        auto dist = torch::cdist(e, e);
        dist.fill_diagonal_(std::numeric_limits<double>::infinity());
        if (dist.min().item<double>() <= 1e-9) {
            throw CorruptData("codebook has duplicate entries");
        }
    }
};

/// Row-major grid of code indices.
struct TokenGrid {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::int64_t> tokens;

    std::int64_t size() const { return height * width; }
    std::int64_t at(std::int64_t i, std::int64_t j) const { return tokens[static_cast<std::size_t>(i * width + j)]; }
    std::int64_t& at(std::int64_t i, std::int64_t j) { return tokens[static_cast<std::size_t>(i * width + j)]; }

    void validate(std::int64_t codebook_size) const {
        if (height <= 0 || width <= 0 || static_cast<std::int64_t>(tokens.size()) != height * width) {
            throw CorruptData("token grid size does not match its dimensions");
        }
        for (auto tok : tokens) {
            if (tok < 0 || tok >= codebook_size) {
                throw CorruptData("token index " + std::to_string(tok) + " outside [0, " +
                                  std::to_string(codebook_size) + ")");
            }
        }
    }

    bool operator==(const TokenGrid&) const = default;
};

namespace detail {

inline torch::Tensor as_single_latent(const torch::Tensor& z) {
    if (z.dim() == 4) {
        require(z.size(0) == 1, "expected a single latent");
        return z[0];
    }
    require(z.dim() == 3, "latent must be d x h x w");
    return z;
}

}  // namespace detail

/// Nearest codebook entry per spatial site (squared Euclidean distance,
/// smallest index wins ties). Returns the token grid and the substituted
/// latent z_q with z's shape.
inline std::pair<TokenGrid, torch::Tensor> quantize(const torch::Tensor& z, const Codebook& cb) {
    auto lat = detail::as_single_latent(z);
    detail::require(lat.size(0) == cb.dim(), "latent dimension does not match the codebook");
    const auto d = lat.size(0);
    TokenGrid grid{lat.size(1), lat.size(2), {}};
    grid.tokens.resize(static_cast<std::size_t>(grid.size()));

    auto sites = lat.to(torch::kFloat64).reshape({d, -1}).t().contiguous();
    auto codes = cb.entries.to(torch::kFloat64).contiguous();
    const auto* sp = sites.data_ptr<double>();
    const auto* cp = codes.data_ptr<double>();
    const auto k_count = cb.size();
    for (std::int64_t s = 0; s < grid.size(); ++s) {
        double best = std::numeric_limits<double>::infinity();
        std::int64_t best_k = 0;
        for (std::int64_t k = 0; k < k_count; ++k) {
            double dist = 0.0;
            for (std::int64_t c = 0; c < d; ++c) {
                const double diff = sp[s * d + c] - cp[k * d + c];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_k = k;
            }
        }
        grid.tokens[static_cast<std::size_t>(s)] = best_k;
    }
    auto zq = cb.entries.index_select(0, torch::tensor(grid.tokens, torch::kInt64))
                  .t()
                  .reshape(lat.sizes())
                  .to(z.scalar_type());
    return {std::move(grid), z.dim() == 4 ? zq.unsqueeze(0) : zq};
}

/// Table lookup z_q[:, i, j] = entries[tokens[i, j]]; returns [d, h, w].
inline torch::Tensor tokens_to_latent(const TokenGrid& grid, const Codebook& cb) {
    grid.validate(cb.size());
    auto idx = torch::tensor(grid.tokens, torch::kInt64);
    return cb.entries.index_select(0, idx).t().reshape({cb.dim(), grid.height, grid.width}).contiguous();
}

struct AutoencoderOptions {
    std::int64_t image_channels = 3;
    std::int64_t image_size = 32;
    std::int64_t downsample = 4;  // power of two
    std::int64_t latent_dim = 4;
    std::int64_t codebook_size = 64;
    std::int64_t width = 16;
    std::int64_t max_groups = 8;

    std::int64_t latent_size() const { return image_size / downsample; }

    int stages() const {
        int s = 0;
        for (auto f = downsample; f > 1; f /= 2) {
            ++s;
        }
        return s;
    }

    void validate() const {
        detail::require(downsample >= 1 && (downsample & (downsample - 1)) == 0, "downsample must be a power of two");
        detail::require(image_size > 0 && image_size % downsample == 0,
                        "image size must be divisible by the downsampling factor");
        detail::require(latent_dim > 0 && width > 0 && image_channels > 0, "autoencoder widths must be positive");
        detail::require(codebook_size >= 2, "codebook needs at least two entries");
    }

    nlohmann::json to_json() const {
        return {{"image_channels", image_channels}, {"image_size", image_size},       {"downsample", downsample},
                {"latent_dim", latent_dim},         {"codebook_size", codebook_size}, {"width", width},
                {"max_groups", max_groups}};
    }

    static AutoencoderOptions from_json(const nlohmann::json& j) {
        AutoencoderOptions o;
        o.image_channels = j.at("image_channels").get<std::int64_t>();
        o.image_size = j.at("image_size").get<std::int64_t>();
        o.downsample = j.at("downsample").get<std::int64_t>();
        o.latent_dim = j.at("latent_dim").get<std::int64_t>();
        o.codebook_size = j.at("codebook_size").get<std::int64_t>();
        o.width = j.at("width").get<std::int64_t>();
        o.max_groups = j.at("max_groups").get<std::int64_t>();
        return o;
    }
};

/// Convolutional encoder / decoder pair with a learned codebook. The
/// continuous latent z_e feeds the diffusion models; the quantized path feeds
/// token-level artifacts.
struct AutoencoderImpl : torch::nn::Module {
    explicit AutoencoderImpl(AutoencoderOptions opts) : options(std::move(opts)) {
        options.validate();
        const auto g = options.max_groups;
        const int stages = options.stages();
        std::int64_t w = options.width;

        enc_in = register_module("enc_in", conv3x3(options.image_channels, w));
        for (int s = 0; s < stages; ++s) {
            const auto next = options.width << std::min(s + 1, 2);
            enc_blocks->push_back(ResBlock(w, next, 0, g));
            enc_blocks->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(next, next, 3).stride(2).padding(1)));
            w = next;
        }
        enc_blocks->push_back(ResBlock(w, w, 0, g));
        register_module("enc_blocks", enc_blocks);
        enc_norm = register_module("enc_norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(w, g), w)));
        enc_out = register_module("enc_out", conv3x3(w, options.latent_dim));

        dec_in = register_module("dec_in", conv3x3(options.latent_dim, w));
        dec_blocks->push_back(ResBlock(w, w, 0, g));
        for (int s = stages - 1; s >= 0; --s) {
            const auto next = options.width << std::min(s, 2);
            dec_blocks->push_back(Upsample(w));
            dec_blocks->push_back(ResBlock(w, next, 0, g));
            w = next;
        }
        register_module("dec_blocks", dec_blocks);
        dec_norm = register_module("dec_norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(w, g), w)));
        dec_out = register_module("dec_out", conv3x3(w, options.image_channels));

        codebook = register_parameter(
            "codebook", torch::randn({options.codebook_size, options.latent_dim}) * 0.5);
        latent_scale = register_buffer("latent_scale", torch::ones({1}));
    }

    void check_image(const torch::Tensor& x) const {
        detail::require(x.dim() == 4 && x.size(1) == options.image_channels, "image batch must be N x C x H x W");
        detail::require(x.size(2) % options.downsample == 0 && x.size(3) % options.downsample == 0,
                        "image dimensions must be divisible by the downsampling factor");
    }

    /// Continuous pre-quantization latent; [N, d, H/f, W/f].
    torch::Tensor encode(const torch::Tensor& x) {
        check_image(x);
        auto h = enc_in(x);
        for (const auto& m : *enc_blocks) {
            if (auto rb = m->as<ResBlock>()) {
                h = rb->forward(h);
            } else {
                h = m->as<torch::nn::Conv2d>()->forward(h);
            }
        }
        return enc_out(torch::silu(enc_norm(h)));
    }

    /// Raw decoder output (unclamped, used for training).
    torch::Tensor decode_raw(const torch::Tensor& z) {
        detail::require(z.dim() == 4 && z.size(1) == options.latent_dim, "latent batch must be N x d x h x w");
        auto h = dec_in(z);
        for (const auto& m : *dec_blocks) {
            if (auto rb = m->as<ResBlock>()) {
                h = rb->forward(h);
            } else {
                h = m->as<Upsample>()->forward(h);
            }
        }
        return dec_out(torch::silu(dec_norm(h)));
    }

    /// Image in [-1, 1].
    torch::Tensor decode(const torch::Tensor& z) { return decode_raw(z).clamp(-1.0, 1.0); }

    Codebook codes() const { return Codebook{codebook.detach().clone()}; }

    /// Nearest-code indices for a latent batch [N, d, h, w] -> [N, h, w].
    /// Vectorized path for training; quantize() is the reference lookup.
    torch::Tensor nearest_codes(const torch::Tensor& z) const {
        const auto d = z.size(1);
        auto flat = z.permute({0, 2, 3, 1}).reshape({-1, d});
        auto cb = codebook.detach();
        auto dist = (flat * flat).sum(1, true) - 2.0 * torch::mm(flat, cb.t()) + (cb * cb).sum(1).unsqueeze(0);
        return dist.argmin(1).reshape({z.size(0), z.size(2), z.size(3)});
    }

    torch::Tensor lookup(const torch::Tensor& idx) const {
        return torch::embedding(codebook, idx).permute({0, 3, 1, 2});
    }

    double scale() const { return latent_scale.item<double>(); }

    AutoencoderOptions options;
    torch::nn::Conv2d enc_in{nullptr};
    torch::nn::ModuleList enc_blocks;
    torch::nn::GroupNorm enc_norm{nullptr};
    torch::nn::Conv2d enc_out{nullptr};
    torch::nn::Conv2d dec_in{nullptr};
    torch::nn::ModuleList dec_blocks;
    torch::nn::GroupNorm dec_norm{nullptr};
    torch::nn::Conv2d dec_out{nullptr};
    torch::Tensor codebook;
    /// Multiplier mapping z_e to unit variance for the diffusion stage.
    torch::Tensor latent_scale;
};
TORCH_MODULE(Autoencoder);

/// Inference-side helpers on a trained autoencoder (no gradient tracking).
inline torch::Tensor encode_images(Autoencoder& ae, const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    return ae->encode(images);
}

inline torch::Tensor decode_latents(Autoencoder& ae, const torch::Tensor& latents) {
    torch::NoGradGuard no_grad;
    return ae->decode(latents);
}

/// Tokenize one image [C, H, W] or [1, C, H, W].
inline TokenGrid tokenize(Autoencoder& ae, const torch::Tensor& image) {
    auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
    return quantize(encode_images(ae, x), ae->codes()).first;
}

/// Decode a token grid to an image [1, C, H, W].
inline torch::Tensor decode_tokens(Autoencoder& ae, const TokenGrid& grid) {
    return decode_latents(ae, tokens_to_latent(grid, ae->codes()).unsqueeze(0));
}

struct AeTrainConfig {
    std::int64_t steps = 3000;
    std::int64_t batch_size = 16;
    double learning_rate = 1e-3;
    double commitment = 0.25;
    /// Fraction of each batch decoded from the continuous latent rather than
    /// the straight-through quantized latent.
    double continuous_fraction = 0.5;
    std::int64_t dead_code_interval = 200;
    /// Cosine decay of the learning rate down to this fraction of its start.
    double min_lr_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct CurvePoint {
    std::int64_t step;
    double loss;
    double extra;  // module-specific second column
};

struct AeTrainResult {
    std::vector<CurvePoint> curve;  // extra = fraction of codes used in the window
    double final_loss = 0.0;
};

/// Reconstruction (L2) on both decoding paths plus codebook and commitment
/// terms, straight-through gradients across the quantizer. Unused codes are
/// re-seeded from encoder outputs every dead_code_interval steps.
inline AeTrainResult train_autoencoder(Autoencoder& ae, const torch::Tensor& images, const AeTrainConfig& cfg,
                                       const std::function<void(const CurvePoint&)>& on_step = {}) {
    if (!images.defined() || images.size(0) == 0) {
        throw TrainingFailure("autoencoder corpus is empty");
    }
    ae->check_image(images);
    Rng rng(Rng::derive(cfg.seed, {0xAE}));
    torch::optim::Adam opt(ae->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    const auto n = images.size(0);
    const auto k_count = ae->options.codebook_size;
    const auto n_cont = static_cast<std::int64_t>(std::llround(cfg.continuous_fraction * cfg.batch_size));

    auto draw_batch = [&] {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch_size));
        for (auto& i : idx) {
            i = rng.uniform_int(0, n - 1);
        }
        return images.index_select(0, torch::tensor(idx, torch::kInt64));
    };

    {
        // data-dependent codebook init from encoder outputs
        torch::NoGradGuard no_grad;
        auto z = ae->encode(draw_batch());
        auto flat = z.permute({0, 2, 3, 1}).reshape({-1, ae->options.latent_dim});
        auto pick = rng.sample_without_replacement(flat.size(0), std::min(k_count, flat.size(0)));
        for (std::int64_t k = 0; k < k_count; ++k) {
            auto src = pick[static_cast<std::size_t>(k % static_cast<std::int64_t>(pick.size()))];
            ae->codebook[k].copy_(flat[src] + 1e-3 * rng.normal());
        }
    }

    AeTrainResult result;
    std::vector<std::int64_t> usage(static_cast<std::size_t>(k_count), 0);
    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        const double progress = static_cast<double>(step - 1) / static_cast<double>(std::max<std::int64_t>(cfg.steps, 1));
        const double lr_scale = cfg.min_lr_fraction + (1.0 - cfg.min_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress));
        static_cast<torch::optim::AdamOptions&>(opt.param_groups()[0].options()).lr(cfg.learning_rate * lr_scale);
        auto x = draw_batch();
        auto ze = ae->encode(x);
        auto idx = ae->nearest_codes(ze);
        auto zq = ae->lookup(idx);
        auto zq_st = ze + (zq - ze).detach();
        auto mixed = torch::cat({ze.slice(0, 0, n_cont), zq_st.slice(0, n_cont)}, 0);
        auto recon = ae->decode_raw(mixed);
        auto loss = torch::mse_loss(recon, x) + torch::mse_loss(zq, ze.detach()) +
                    cfg.commitment * torch::mse_loss(ze, zq.detach());
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            throw TrainingFailure("autoencoder loss became non-finite at step " + std::to_string(step));
        }
        opt.zero_grad();
        loss.backward();
        opt.step();

        auto idx_acc = idx.contiguous();
        const auto* ip = idx_acc.data_ptr<std::int64_t>();
        for (std::int64_t i = 0; i < idx_acc.numel(); ++i) {
            ++usage[static_cast<std::size_t>(ip[i])];
        }
        double used_fraction = -1.0;
        if (cfg.dead_code_interval > 0 && step % cfg.dead_code_interval == 0) {
            torch::NoGradGuard no_grad;
            auto flat = ze.detach().permute({0, 2, 3, 1}).reshape({-1, ae->options.latent_dim});
            std::int64_t used = 0;
            for (std::int64_t k = 0; k < k_count; ++k) {
                if (usage[static_cast<std::size_t>(k)] > 0) {
                    ++used;
                    continue;
                }
                auto src = rng.uniform_int(0, flat.size(0) - 1);
                ae->codebook[k].copy_(flat[src] + 1e-3 * rng.normal());
            }
            used_fraction = static_cast<double>(used) / static_cast<double>(k_count);
            std::fill(usage.begin(), usage.end(), 0);
        }
        CurvePoint point{step, value, used_fraction};
        result.curve.push_back(point);
        if (on_step) {
            on_step(point);
        }
        result.final_loss = value;
    }

    {
        // unit-variance scaling of the continuous latent for diffusion
        torch::NoGradGuard no_grad;
        std::vector<torch::Tensor> zs;
        for (std::int64_t start = 0; start < std::min<std::int64_t>(n, 512); start += 64) {
            zs.push_back(ae->encode(images.slice(0, start, std::min<std::int64_t>(start + 64, n))));
        }
        auto std_dev = torch::cat(zs, 0).to(torch::kFloat64).std().item<double>();
        ae->latent_scale.fill_(std_dev > 0.0 ? 1.0 / std_dev : 1.0);
    }
    return result;
}

/// Mean per-pixel squared error of decode(encode(x)) in [-1, 1] units.
inline double reconstruction_mse(Autoencoder& ae, const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    double total = 0.0;
    const auto n = images.size(0);
    for (std::int64_t start = 0; start < n; start += 64) {
        auto x = images.slice(0, start, std::min<std::int64_t>(start + 64, n));
        total += torch::mse_loss(ae->decode(ae->encode(x)), x, torch::Reduction::Sum).item<double>();
    }
    return total / static_cast<double>(images.numel());
}

/// Fraction of codebook entries selected at least once over an image batch.
inline double codebook_usage(Autoencoder& ae, const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    auto idx = ae->nearest_codes(ae->encode(images));
    auto counts = torch::bincount(idx.flatten(), {}, ae->options.codebook_size);
    return (counts > 0).sum().item<double>() / static_cast<double>(ae->options.codebook_size);
}

}  // namespace genfix
