// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <torch/torch.h>

#include "genfix/errors.hpp"

namespace genfix {

/// Sinusoidal embedding of a step index: first half sin(t * w_i), second half
/// cos(t * w_i), with w_i = 10000^(-i / (dim / 2)).
inline std::vector<double> timestep_embedding(int t, int dim) {
    detail::require(dim > 0 && dim % 2 == 0, "embedding dimension must be positive and even");
    detail::require(t >= 0, "step index must be non-negative");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[static_cast<std::size_t>(i)] = std::sin(t * freq);
        out[static_cast<std::size_t>(i + half)] = std::cos(t * freq);
    }
    return out;
}

/// Batched form over a 1-D tensor of step indices; returns [N, dim].
inline torch::Tensor timestep_embedding(const torch::Tensor& steps, int dim) {
    detail::require(dim > 0 && dim % 2 == 0, "embedding dimension must be positive and even");
    const int half = dim / 2;
    auto freqs = torch::exp(torch::arange(half, torch::kFloat64) * (-std::log(10000.0) / half));
    auto args = steps.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

inline std::int64_t group_count(std::int64_t channels, std::int64_t max_groups) {
    std::int64_t g = std::min(channels, max_groups);
    while (channels % g != 0) {
        --g;
    }
    return g;
}

inline torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

inline torch::nn::Conv2d conv1x1(std::int64_t in, std::int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

/// GroupNorm -> SiLU -> conv, twice, with an optional per-channel shift from a
/// conditioning vector injected between the two convolutions.
struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t emb_dim, std::int64_t max_groups = 8,
                 double dropout = 0.0)
        : dropout(dropout),
          norm1(torch::nn::GroupNormOptions(group_count(in, max_groups), in)),
          conv1(conv3x3(in, out)),
          norm2(torch::nn::GroupNormOptions(group_count(out, max_groups), out)),
          conv2(conv3x3(out, out)) {
        register_module("norm1", norm1);
        register_module("conv1", conv1);
        register_module("norm2", norm2);
        register_module("conv2", conv2);
        if (emb_dim > 0) {
            emb_proj = register_module("emb_proj", torch::nn::Linear(emb_dim, out));
        }
        if (in != out) {
            skip = register_module("skip", conv1x1(in, out));
        }
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb = {}) {
        auto h = conv1(torch::silu(norm1(x)));
        if (emb_proj && emb.defined()) {
            h = h + emb_proj(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
        }
        h = torch::silu(norm2(h));
        if (dropout > 0.0) {
            h = torch::dropout(h, dropout, is_training());
        }
        h = conv2(h);
        return (skip ? skip(x) : x) + h;
    }

    /// Dropout rate before the second convolution, active in training mode.
    double dropout;
    torch::nn::GroupNorm norm1;
    torch::nn::Conv2d conv1;
    torch::nn::GroupNorm norm2;
    torch::nn::Conv2d conv2;
    torch::nn::Linear emb_proj{nullptr};
    torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// Single-head spatial self-attention with a residual connection.
struct AttentionBlockImpl : torch::nn::Module {
    AttentionBlockImpl(std::int64_t channels, std::int64_t max_groups = 8)
        : norm(torch::nn::GroupNormOptions(group_count(channels, max_groups), channels)),
          qkv(conv1x1(channels, 3 * channels)),
          proj(conv1x1(channels, channels)) {
        register_module("norm", norm);
        register_module("qkv", qkv);
        register_module("proj", proj);
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto n = x.size(0);
        const auto c = x.size(1);
        const auto hw = x.size(2) * x.size(3);
        auto parts = qkv(norm(x)).reshape({n, 3, c, hw}).unbind(1);
        auto scores = torch::bmm(parts[0].transpose(1, 2), parts[1]) / std::sqrt(static_cast<double>(c));
        auto weights = torch::softmax(scores, -1);                     // [n, hw_q, hw_k]
        auto out = torch::bmm(parts[2], weights.transpose(1, 2));      // [n, c, hw_q]
        return x + proj(out.reshape(x.sizes()));
    }

    torch::nn::GroupNorm norm;
    torch::nn::Conv2d qkv;
    torch::nn::Conv2d proj;
};
TORCH_MODULE(AttentionBlock);

struct UpsampleImpl : torch::nn::Module {
    explicit UpsampleImpl(std::int64_t channels) : conv(conv3x3(channels, channels)) { register_module("conv", conv); }

    torch::Tensor forward(const torch::Tensor& x) {
        namespace F = torch::nn::functional;
        auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                        .scale_factor(std::vector<double>{2.0, 2.0})
                                        .mode(torch::kNearest));
        return conv(up);
    }

    torch::nn::Conv2d conv;
};
TORCH_MODULE(Upsample);

inline std::int64_t parameter_count(const torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) {
        n += p.numel();
    }
    return n;
}

/// Restricts intra-op threading to one thread so results are reproducible.
inline void use_deterministic_math() {
    torch::set_num_threads(1);
}

}  // namespace genfix
