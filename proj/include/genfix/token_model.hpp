// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/errors.hpp"
#include "genfix/rng.hpp"
#include "genfix/vqae.hpp"

namespace genfix {

struct SamplingParams {
    double temperature = 1.0;
    std::int64_t top_k = 1;

    void validate(std::int64_t vocab) const {
        detail::require(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
        detail::require(top_k >= 1 && top_k <= vocab, "top_k must lie in [1, K]");
    }
};

/// Probabilities after dividing logits by the temperature, keeping the top_k
/// largest (ties go to the lower index) and renormalizing.
inline std::vector<double> truncated_softmax(std::span<const double> logits, const SamplingParams& p) {
    const auto k_count = static_cast<std::int64_t>(logits.size());
    p.validate(k_count);
    for (double l : logits) {
        detail::require(std::isfinite(l), "logits must be finite");
    }
    std::vector<double> scaled(logits.size());
    std::transform(logits.begin(), logits.end(), scaled.begin(), [&](double l) { return l / p.temperature; });

    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scaled[a] > scaled[b]; });

    std::vector<double> probs(logits.size(), 0.0);
    const double top = scaled[order.front()];
    double total = 0.0;
    for (std::int64_t r = 0; r < p.top_k; ++r) {
        const auto i = order[static_cast<std::size_t>(r)];
        probs[i] = std::exp(scaled[i] - top);
        total += probs[i];
    }
    for (auto& v : probs) {
        v /= total;
    }
    return probs;
}

/// Categorical draw from truncated_softmax(logits, p).
inline std::int64_t sample_token(std::span<const double> logits, const SamplingParams& p, Rng& rng) {
    const auto probs = truncated_softmax(logits, p);
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::int64_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] == 0.0) {
            continue;
        }
        cumulative += probs[i];
        last = static_cast<std::int64_t>(i);
        if (u < cumulative) {
            return last;
        }
    }
    return last;  // u landed in the rounding gap above the final cumulative sum
}

struct TokenModelOptions {
    std::int64_t vocab = 64;
    std::int64_t seq_len = 64;
    std::int64_t d_model = 64;
    std::int64_t layers = 2;
    std::int64_t heads = 4;

    nlohmann::json to_json() const {
        return {{"vocab", vocab}, {"seq_len", seq_len}, {"d_model", d_model}, {"layers", layers}, {"heads", heads}};
    }

    static TokenModelOptions from_json(const nlohmann::json& j) {
        TokenModelOptions o;
        o.vocab = j.at("vocab").get<std::int64_t>();
        o.seq_len = j.at("seq_len").get<std::int64_t>();
        o.d_model = j.at("d_model").get<std::int64_t>();
        o.layers = j.at("layers").get<std::int64_t>();
        o.heads = j.at("heads").get<std::int64_t>();
        return o;
    }
};

struct CausalBlockImpl : torch::nn::Module {
    CausalBlockImpl(std::int64_t d_model, std::int64_t heads)
        : heads(heads),
          ln1(torch::nn::LayerNormOptions({d_model})),
          qkv(d_model, 3 * d_model),
          proj(d_model, d_model),
          ln2(torch::nn::LayerNormOptions({d_model})),
          fc1(d_model, 4 * d_model),
          fc2(4 * d_model, d_model) {
        detail::require(d_model % heads == 0, "d_model must be divisible by the head count");
        register_module("ln1", ln1);
        register_module("qkv", qkv);
        register_module("proj", proj);
        register_module("ln2", ln2);
        register_module("fc1", fc1);
        register_module("fc2", fc2);
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto n = x.size(0);
        const auto l = x.size(1);
        const auto d = x.size(2);
        const auto hd = d / heads;
        auto parts = qkv(ln1(x)).reshape({n, l, 3, heads, hd}).permute({2, 0, 3, 1, 4}).unbind(0);
        auto scores = torch::matmul(parts[0], parts[1].transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
        auto future = torch::ones({l, l}, torch::kBool).triu(1);
        scores = scores.masked_fill(future, -std::numeric_limits<float>::infinity());
        auto att = torch::matmul(torch::softmax(scores, -1), parts[2]);  // [n, heads, l, hd]
        auto h = x + proj(att.permute({0, 2, 1, 3}).reshape({n, l, d}));
        return h + fc2(torch::gelu(fc1(ln2(h))));
    }

    std::int64_t heads;
    torch::nn::LayerNorm ln1;
    torch::nn::Linear qkv;
    torch::nn::Linear proj;
    torch::nn::LayerNorm ln2;
    torch::nn::Linear fc1;
    torch::nn::Linear fc2;
};
TORCH_MODULE(CausalBlock);

/// Next-token model over raster-ordered token grids. Position i is predicted
/// from a start token followed by tokens 0..i-1.
struct TokenTransformerImpl : torch::nn::Module {
    explicit TokenTransformerImpl(TokenModelOptions opts)
        : options(opts),
          tok_emb(opts.vocab + 1, opts.d_model),
          pos_emb(opts.seq_len, opts.d_model),
          ln_f(torch::nn::LayerNormOptions({opts.d_model})),
          head(opts.d_model, opts.vocab) {
        register_module("tok_emb", tok_emb);
        register_module("pos_emb", pos_emb);
        for (std::int64_t i = 0; i < opts.layers; ++i) {
            blocks->push_back(CausalBlock(opts.d_model, opts.heads));
        }
        register_module("blocks", blocks);
        register_module("ln_f", ln_f);
        register_module("head", head);
    }

    /// tokens [N, l] -> logits [N, l, K].
    torch::Tensor forward(const torch::Tensor& tokens) {
        const auto n = tokens.size(0);
        const auto l = tokens.size(1);
        detail::require(l <= options.seq_len, "sequence longer than the model context");
        auto start = torch::full({n, 1}, options.vocab, torch::kInt64);
        auto inputs = torch::cat({start, tokens.slice(1, 0, l - 1)}, 1);
        auto h = tok_emb(inputs) + pos_emb(torch::arange(l, torch::kInt64)).unsqueeze(0);
        for (const auto& b : *blocks) {
            h = b->as<CausalBlock>()->forward(h);
        }
        return head(ln_f(h));
    }

    TokenModelOptions options;
    torch::nn::Embedding tok_emb;
    torch::nn::Embedding pos_emb;
    torch::nn::ModuleList blocks;
    torch::nn::LayerNorm ln_f;
    torch::nn::Linear head;
};
TORCH_MODULE(TokenTransformer);

struct TokenTrainConfig {
    std::int64_t steps = 1500;
    std::int64_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct TokenTrainResult {
    std::vector<double> losses;
    double final_loss = 0.0;
};

inline torch::Tensor grids_to_sequences(const std::vector<TokenGrid>& grids) {
    detail::require(!grids.empty(), "no token grids");
    const auto l = grids.front().size();
    auto out = torch::empty({static_cast<std::int64_t>(grids.size()), l}, torch::kInt64);
    auto acc = out.accessor<std::int64_t, 2>();
    for (std::size_t i = 0; i < grids.size(); ++i) {
        detail::require(grids[i].size() == l, "token sequences must share one length");
        for (std::int64_t j = 0; j < l; ++j) {
            acc[static_cast<std::int64_t>(i)][j] = grids[i].tokens[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

/// Maximum-likelihood training of the next-token model on sequences [M, l].
inline TokenTrainResult train_token_model(TokenTransformer& model, const torch::Tensor& sequences,
                                          const TokenTrainConfig& cfg,
                                          const std::function<void(std::int64_t, double)>& on_step = {}) {
    if (!sequences.defined() || sequences.size(0) == 0) {
        throw TrainingFailure("token corpus is empty");
    }
    detail::require(sequences.size(1) == model->options.seq_len, "sequence length does not match the model");
    Rng rng(Rng::derive(cfg.seed, {0x70C}));
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    const auto m = sequences.size(0);
    TokenTrainResult result;
    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch_size));
        for (auto& i : idx) {
            i = rng.uniform_int(0, m - 1);
        }
        auto batch = sequences.index_select(0, torch::tensor(idx, torch::kInt64));
        auto logits = model->forward(batch);
        auto loss = torch::cross_entropy_loss(logits.reshape({-1, model->options.vocab}), batch.reshape({-1}));
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            throw TrainingFailure("token model loss became non-finite at step " + std::to_string(step));
        }
        opt.zero_grad();
        loss.backward();
        opt.step();
        result.losses.push_back(value);
        result.final_loss = value;
        if (on_step) {
            on_step(step, value);
        }
    }
    return result;
}

/// exp(mean negative log-likelihood) over sequences [M, l].
inline double perplexity(TokenTransformer& model, const torch::Tensor& sequences) {
    torch::NoGradGuard no_grad;
    auto logits = model->forward(sequences);
    auto nll = torch::cross_entropy_loss(logits.reshape({-1, model->options.vocab}), sequences.reshape({-1}));
    return std::exp(nll.item<double>());
}

struct ResampleOptions {
    /// Condition each resampled position on the original tokens instead of
    /// the partially updated sequence.
    bool condition_on_original = false;
    /// Resample one contiguous raster run instead of scattered positions.
    bool contiguous = false;
};

inline std::int64_t resample_count(std::int64_t length, double keep_fraction) {
    return static_cast<std::int64_t>(std::floor((1.0 - keep_fraction) * static_cast<double>(length) + 1e-9));
}

/// Replaces floor((1 - keep_fraction) * l) uniformly chosen positions with
/// draws from the model's conditional under p, in raster order.
inline TokenGrid resample_tokens(const TokenGrid& grid, TokenTransformer& model, double keep_fraction,
                                 const SamplingParams& p, Rng& rng, const ResampleOptions& opts = {}) {
    detail::require(keep_fraction >= 0.0 && keep_fraction <= 1.0, "keep_fraction must lie in [0, 1]");
    detail::require(grid.size() == model->options.seq_len, "token grid does not match the model context");
    grid.validate(model->options.vocab);
    p.validate(model->options.vocab);

    const auto l = grid.size();
    const auto count = resample_count(l, keep_fraction);
    std::vector<std::int64_t> positions;
    if (opts.contiguous) {
        const auto start = count < l ? rng.uniform_int(0, l - count) : 0;
        for (std::int64_t i = 0; i < count; ++i) {
            positions.push_back(start + i);
        }
    } else {
        positions = rng.sample_without_replacement(l, count);
        std::sort(positions.begin(), positions.end());
    }

    TokenGrid out = grid;
    torch::NoGradGuard no_grad;
    for (auto pos : positions) {
        const auto& context = opts.condition_on_original ? grid.tokens : out.tokens;
        auto seq = torch::tensor(context, torch::kInt64).unsqueeze(0);
        auto logits = model->forward(seq.slice(1, 0, pos + 1))[0][pos].to(torch::kFloat64).contiguous();
        std::span<const double> view(logits.data_ptr<double>(), static_cast<std::size_t>(logits.numel()));
        out.tokens[static_cast<std::size_t>(pos)] = sample_token(view, p, rng);
    }
    return out;
}

}  // namespace genfix
