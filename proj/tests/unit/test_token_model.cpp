// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <gtest/gtest.h>

#include "genfix/token_model.hpp"
#include "oracles.hpp"

using namespace genfix;

namespace {

TokenModelOptions tiny_model(std::int64_t vocab = 8, std::int64_t len = 16) {
    TokenModelOptions o;
    o.vocab = vocab;
    o.seq_len = len;
    o.d_model = 16;
    o.layers = 1;
    o.heads = 2;
    return o;
}

TokenGrid random_grid(Rng& rng, std::int64_t h, std::int64_t w, std::int64_t vocab) {
    TokenGrid g{h, w, {}};
    for (std::int64_t i = 0; i < h * w; ++i) {
        g.tokens.push_back(rng.uniform_int(0, vocab - 1));
    }
    return g;
}

}  // namespace

TEST(TruncatedSoftmax, ClosedForm) {
    const std::vector<double> logits{std::log(2.0), 0.0};
    auto p = truncated_softmax(logits, SamplingParams{1.0, 2});
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(TruncatedSoftmax, MatchesSelectionOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(64);
        for (auto& l : logits) {
            l = 3.0 * rng.normal();
        }
        const double temp = rng.uniform(0.2, 5.0);
        const int k = static_cast<int>(rng.uniform_int(1, 64));
        auto got = truncated_softmax(logits, SamplingParams{temp, k});
        auto want = oracle::reference_topk_probs(logits, temp, k);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            EXPECT_NEAR(got[i], want[i], 1e-12);
        }
    }
}

TEST(TruncatedSoftmax, TemperatureFlattens) {
    const std::vector<double> logits{2.0, 1.0, 0.0, -1.0};
    auto sharp = truncated_softmax(logits, SamplingParams{0.5, 4});
    auto flat = truncated_softmax(logits, SamplingParams{20.0, 4});
    EXPECT_GT(sharp[0], flat[0]);
    EXPECT_LT(sharp[3], flat[3]);
    EXPECT_NEAR(flat[0], 0.25, 0.05);
}

TEST(SampleToken, TopOneIsArgmax) {
    Rng rng(22);
    const std::vector<double> logits{0.1, 2.5, -3.0, 2.4, 0.0};
    for (double temp : {1e-3, 1.0, 1e3}) {
        for (int i = 0; i < 200; ++i) {
            EXPECT_EQ(sample_token(logits, SamplingParams{temp, 1}, rng), 1);
        }
    }
}

TEST(SampleToken, EmpiricalFrequencyWithinFourSigma) {
    Rng rng(23);
    const std::vector<double> logits{std::log(2.0), 0.0};
    const int n = 100000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) {
        zeros += sample_token(logits, SamplingParams{1.0, 2}, rng) == 0;
    }
    const double p = 2.0 / 3.0;
    EXPECT_LE(std::abs(zeros - n * p), 4.0 * std::sqrt(n * p * (1 - p)));
}

TEST(SampleToken, ChiSquareGoodnessOfFit) {
    Rng rng(24);
    std::vector<double> logits(64);
    for (auto& l : logits) {
        l = rng.normal();
    }
    const SamplingParams p{1.7, 20};
    const std::int64_t n = 100000;
    std::vector<std::int64_t> counts(64, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        ++counts[static_cast<std::size_t>(sample_token(logits, p, rng))];
    }
    auto probs = oracle::reference_topk_probs(logits, 1.7, 20);
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] == 0.0) {
            EXPECT_EQ(counts[k], 0);
        }
    }
    auto [stat, bins] = oracle::pearson(counts, probs, n);
    EXPECT_EQ(bins, 20);
    EXPECT_LT(stat, oracle::chi_square_critical(bins - 1, 1e-3));
}

TEST(SampleToken, RejectsBadInput) {
    Rng rng(25);
    const std::vector<double> ok{0.0, 1.0};
    const std::vector<double> bad{0.0, std::nan("")};
    EXPECT_THROW(sample_token(bad, SamplingParams{1.0, 1}, rng), InvalidArgument);
    EXPECT_THROW(sample_token(ok, SamplingParams{0.0, 1}, rng), InvalidArgument);
    EXPECT_THROW(sample_token(ok, SamplingParams{1.0, 3}, rng), InvalidArgument);
    EXPECT_THROW(sample_token(ok, SamplingParams{1.0, 0}, rng), InvalidArgument);
}

TEST(ResampleTokens, KeepAllIsIdentity) {
    torch::manual_seed(1);
    TokenTransformer model(tiny_model());
    Rng rng(26);
    auto g = random_grid(rng, 4, 4, 8);
    EXPECT_EQ(resample_tokens(g, model, 1.0, SamplingParams{5.0, 8}, rng), g);
}

TEST(ResampleTokens, ChangesAtMostTheResampledCount) {
    torch::manual_seed(2);
    TokenTransformer model(tiny_model(8, 64));
    Rng rng(27);
    EXPECT_EQ(resample_count(64, 0.9), 6);
    EXPECT_EQ(resample_count(64, 1.0), 0);
    EXPECT_EQ(resample_count(64, 0.0), 64);
    for (int trial = 0; trial < 5; ++trial) {
        auto g = random_grid(rng, 8, 8, 8);
        auto out = resample_tokens(g, model, 0.9, SamplingParams{20.0, 8}, rng);
        int changed = 0;
        for (std::size_t i = 0; i < g.tokens.size(); ++i) {
            changed += g.tokens[i] != out.tokens[i];
        }
        EXPECT_LE(changed, 6);
    }
}

TEST(ResampleTokens, GreedyRegenerationIsDeterministic) {
    torch::manual_seed(3);
    TokenTransformer model(tiny_model());
    Rng r1(28);
    Rng r2(99);
    Rng g_rng(5);
    auto g = random_grid(g_rng, 4, 4, 8);
    auto a = resample_tokens(g, model, 0.0, SamplingParams{1.0, 1}, r1);
    auto b = resample_tokens(g, model, 0.0, SamplingParams{1.0, 1}, r2);
    EXPECT_EQ(a, b);
}

TEST(ResampleTokens, RejectsVocabularyMismatch) {
    TokenTransformer model(tiny_model(8, 16));
    Rng rng(29);
    auto wide = random_grid(rng, 4, 4, 8);
    wide.tokens[0] = 12;
    EXPECT_THROW(resample_tokens(wide, model, 0.5, SamplingParams{1.0, 1}, rng), CorruptData);
    auto longer = random_grid(rng, 5, 5, 8);
    EXPECT_THROW(resample_tokens(longer, model, 0.5, SamplingParams{1.0, 1}, rng), InvalidArgument);
    auto ok = random_grid(rng, 4, 4, 8);
    EXPECT_THROW(resample_tokens(ok, model, 0.5, SamplingParams{1.0, 9}, rng), InvalidArgument);
}

TEST(TrainTokenModel, DegenerateCorpusPerplexityApproachesOne) {
    torch::manual_seed(4);
    TokenTransformer model(tiny_model(8, 16));
    auto seq = torch::arange(16, torch::kInt64).remainder(8).unsqueeze(0).repeat({32, 1});
    TokenTrainConfig cfg;
    cfg.steps = 150;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    train_token_model(model, seq, cfg);
    EXPECT_LT(perplexity(model, seq.slice(0, 0, 4)), 1.1);
}

TEST(TrainTokenModel, ReproducibleAndRejectsEmpty) {
    auto seq = torch::randint(0, 8, {16, 16}, torch::kInt64);
    TokenTrainConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 4;
    cfg.seed = 8;
    auto run = [&] {
        torch::manual_seed(5);
        TokenTransformer model(tiny_model());
        return train_token_model(model, seq, cfg).final_loss;
    };
    EXPECT_EQ(run(), run());
    TokenTransformer model(tiny_model());
    EXPECT_THROW(train_token_model(model, torch::zeros({0, 16}, torch::kInt64), cfg), TrainingFailure);
}
