// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/artifact_class.hpp"
#include "genfix/errors.hpp"
#include "genfix/nn.hpp"

namespace genfix {

struct EpsilonNetOptions {
    std::int64_t latent_channels = 4;
    /// Channels of the concatenated condition latent; 0 builds the
    /// unconditional variant.
    std::int64_t cond_channels = 4;
    std::int64_t base_width = 32;
    std::vector<std::int64_t> channel_mult = {1, 2, 2};
    /// Width of the sinusoidal step embedding (768 at full scale).
    int time_embed_dim = 64;
    /// Rows of the class-embedding table; 0 disables class conditioning.
    std::int64_t num_classes = kNumClassTokens;
    std::int64_t max_groups = 8;
    /// Dropout inside the residual blocks while training.
    double dropout = 0.0;

    std::int64_t cond_dim() const { return 2 * time_embed_dim; }

    nlohmann::json to_json() const {
        return {{"latent_channels", latent_channels}, {"cond_channels", cond_channels},
                {"base_width", base_width},           {"channel_mult", channel_mult},
                {"time_embed_dim", time_embed_dim},   {"num_classes", num_classes},
                {"max_groups", max_groups},           {"dropout", dropout}};
    }

    static EpsilonNetOptions from_json(const nlohmann::json& j) {
        EpsilonNetOptions o;
        o.latent_channels = j.at("latent_channels").get<std::int64_t>();
        o.cond_channels = j.at("cond_channels").get<std::int64_t>();
        o.base_width = j.at("base_width").get<std::int64_t>();
        o.channel_mult = j.at("channel_mult").get<std::vector<std::int64_t>>();
        o.time_embed_dim = j.at("time_embed_dim").get<int>();
        o.num_classes = j.at("num_classes").get<std::int64_t>();
        o.max_groups = j.at("max_groups").get<std::int64_t>();
        o.dropout = j.at("dropout").get<double>();
        return o;
    }
};

/// U-shaped epsilon predictor. Input is the channel concatenation of the
/// condition latent and the noisy target; the step embedding plus the class
/// embedding is injected into every residual block. Self-attention runs at
/// the coarsest resolution and in the middle block.
struct EpsilonNetImpl : torch::nn::Module {
    explicit EpsilonNetImpl(EpsilonNetOptions opts) : options(std::move(opts)) {
        detail::require(!options.channel_mult.empty(), "channel_mult must not be empty");
        detail::require(options.time_embed_dim > 0 && options.time_embed_dim % 2 == 0,
                        "time_embed_dim must be positive and even");
        const auto emb = options.cond_dim();
        const auto g = options.max_groups;
        time_mlp1 = register_module("time_mlp1", torch::nn::Linear(options.time_embed_dim, emb));
        time_mlp2 = register_module("time_mlp2", torch::nn::Linear(emb, emb));
        if (options.num_classes > 0) {
            class_table = register_module("class_table", torch::nn::Embedding(options.num_classes, emb));
        }

        const auto levels = options.channel_mult.size();
        std::vector<std::int64_t> widths;
        for (auto m : options.channel_mult) {
            widths.push_back(options.base_width * m);
        }
        conv_in = register_module("conv_in",
                                  conv3x3(options.latent_channels + options.cond_channels, widths.front()));

        std::int64_t cur = widths.front();
        for (std::size_t i = 0; i < levels; ++i) {
            down_res->push_back(ResBlock(cur, widths[i], emb, g, options.dropout));
            cur = widths[i];
            if (i + 1 < levels) {
                down_samplers->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(cur, cur, 3).stride(2).padding(1)));
            }
        }
        register_module("down_res", down_res);
        register_module("down_samplers", down_samplers);
        down_attn = register_module("down_attn", AttentionBlock(cur, g));

        mid_res1 = register_module("mid_res1", ResBlock(cur, cur, emb, g, options.dropout));
        mid_attn = register_module("mid_attn", AttentionBlock(cur, g));
        mid_res2 = register_module("mid_res2", ResBlock(cur, cur, emb, g, options.dropout));

        for (std::size_t k = 0; k < levels; ++k) {
            const auto i = levels - 1 - k;
            up_res->push_back(ResBlock(cur + widths[i], widths[i], emb, g, options.dropout));
            cur = widths[i];
            if (i > 0) {
                up_samplers->push_back(Upsample(cur));
            }
        }
        register_module("up_res", up_res);
        register_module("up_samplers", up_samplers);
        up_attn = register_module("up_attn", AttentionBlock(widths.back(), g));

        norm_out = register_module("norm_out",
                                   torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(cur, g), cur)));
        conv_out = register_module("conv_out", conv3x3(cur, options.latent_channels));
    }

    /// steps: float/int tensor [N]; cond: [N, cond_channels, h, w] or undefined
    /// for the unconditional variant; labels: int64 [N] or undefined.
    torch::Tensor forward(const torch::Tensor& y_t, const torch::Tensor& steps, const torch::Tensor& cond = {},
                          const torch::Tensor& labels = {}) {
        const auto dtype = y_t.scalar_type();
        auto emb = timestep_embedding(steps, options.time_embed_dim).to(dtype);
        emb = time_mlp2(torch::silu(time_mlp1(emb)));
        if (class_table) {
            detail::require(labels.defined(), "class-conditioned network needs labels");
            emb = emb + class_table(labels);
        }

        torch::Tensor h;
        if (options.cond_channels > 0) {
            detail::require(cond.defined(), "conditional network needs a condition latent");
            h = conv_in(torch::cat({cond, y_t}, 1));
        } else {
            h = conv_in(y_t);
        }

        const auto levels = options.channel_mult.size();
        std::vector<torch::Tensor> skips;
        for (std::size_t i = 0; i < levels; ++i) {
            h = down_res[i]->as<ResBlock>()->forward(h, emb);
            if (i + 1 == levels) {
                h = down_attn(h);
            }
            skips.push_back(h);
            if (i + 1 < levels) {
                h = down_samplers[i]->as<torch::nn::Conv2d>()->forward(h);
            }
        }

        h = mid_res2(mid_attn(mid_res1(h, emb)), emb);

        for (std::size_t k = 0; k < levels; ++k) {
            const auto i = levels - 1 - k;
            h = up_res[k]->as<ResBlock>()->forward(torch::cat({h, skips[i]}, 1), emb);
            if (k == 0) {
                h = up_attn(h);
            }
            if (i > 0) {
                h = up_samplers[k]->as<Upsample>()->forward(h);
            }
        }
        return conv_out(torch::silu(norm_out(h)));
    }

    EpsilonNetOptions options;
    torch::nn::Linear time_mlp1{nullptr};
    torch::nn::Linear time_mlp2{nullptr};
    torch::nn::Embedding class_table{nullptr};
    torch::nn::Conv2d conv_in{nullptr};
    torch::nn::ModuleList down_res;
    torch::nn::ModuleList down_samplers;
    AttentionBlock down_attn{nullptr};
    ResBlock mid_res1{nullptr};
    AttentionBlock mid_attn{nullptr};
    ResBlock mid_res2{nullptr};
    torch::nn::ModuleList up_res;
    torch::nn::ModuleList up_samplers;
    AttentionBlock up_attn{nullptr};
    torch::nn::GroupNorm norm_out{nullptr};
    torch::nn::Conv2d conv_out{nullptr};
};
TORCH_MODULE(EpsilonNet);

inline torch::Tensor step_tensor(int t, std::int64_t batch) {
    return torch::full({batch}, static_cast<double>(t), torch::kFloat64);
}

/// Inference adapter exposing a class-conditioned network as a
/// ConditionalEpsilon.
struct ConditionalPredictor {
    EpsilonNet net;

    torch::Tensor operator()(const torch::Tensor& cond, const torch::Tensor& y_t, int t,
                             const torch::Tensor& labels) const {
        torch::NoGradGuard no_grad;
        return net.ptr()->forward(y_t, step_tensor(t, y_t.size(0)), cond, labels);
    }
};

/// Inference adapter exposing the condition-free network as an
/// UnconditionalEpsilon.
struct UnconditionalPredictor {
    EpsilonNet net;

    torch::Tensor operator()(const torch::Tensor& y_t, int t) const {
        torch::NoGradGuard no_grad;
        return net.ptr()->forward(y_t, step_tensor(t, y_t.size(0)));
    }
};

}  // namespace genfix
