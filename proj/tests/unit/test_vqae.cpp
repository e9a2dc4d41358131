// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "genfix/rng.hpp"
#include "genfix/shapes.hpp"
#include "genfix/vqae.hpp"
#include "oracles.hpp"

using namespace genfix;

namespace {

AutoencoderOptions tiny_options() {
    AutoencoderOptions o;
    o.width = 8;
    o.codebook_size = 16;
    return o;
}

}  // namespace

TEST(Quantize, TwoEntryExample) {
    Codebook cb{torch::tensor({0.0f, 0.0f, 1.0f, 1.0f}).reshape({2, 2})};
    auto z = torch::tensor({0.2f, 0.1f}).reshape({2, 1, 1});
    auto [grid, zq] = quantize(z, cb);
    ASSERT_EQ(grid.size(), 1);
    EXPECT_EQ(grid.tokens[0], 0);
    EXPECT_TRUE(torch::equal(zq, torch::zeros({2, 1, 1})));
}

TEST(Quantize, ExactEntryIsFixedPoint) {
    Rng rng(1);
    Codebook cb{rng.normal_tensor({8, 3})};
    auto z = cb.entries[5].reshape({3, 1, 1});
    auto [grid, zq] = quantize(z, cb);
    EXPECT_EQ(grid.tokens[0], 5);
    EXPECT_TRUE(torch::equal(zq, z));
}

TEST(Quantize, TieGoesToSmallestIndex) {
    Codebook cb{torch::tensor({1.0f, 0.0f, -1.0f, 0.0f, 0.0f, 1.0f}).reshape({3, 2})};
    auto z = torch::zeros({2, 1, 1});
    EXPECT_EQ(quantize(z, cb).first.tokens[0], 0);
}

TEST(Quantize, MatchesBruteForce) {
    Rng rng(2);
    Codebook cb{rng.normal_tensor({64, 4})};
    auto z = rng.normal_tensor({4, 25, 40});
    auto grid = quantize(z, cb).first;
    auto sites = z.reshape({4, -1}).t();
    EXPECT_EQ(grid.tokens, oracle::brute_force_nearest(sites, cb.entries));
    EXPECT_EQ(grid.height, 25);
    EXPECT_EQ(grid.width, 40);
}

TEST(Quantize, AcceptsSingletonBatchAndRejectsMismatch) {
    Rng rng(4);
    Codebook cb{rng.normal_tensor({4, 2})};
    auto z = rng.normal_tensor({1, 2, 3, 3});
    auto [grid, zq] = quantize(z, cb);
    EXPECT_EQ(zq.sizes(), z.sizes());
    EXPECT_THROW(quantize(rng.normal_tensor({3, 3, 3}), cb), InvalidArgument);
    EXPECT_THROW(quantize(rng.normal_tensor({2, 2, 3, 3}), cb), InvalidArgument);
}

TEST(TokensToLatent, LookupAndRange) {
    Rng rng(6);
    Codebook cb{rng.normal_tensor({8, 3})};
    TokenGrid zeros{2, 2, {0, 0, 0, 0}};
    auto lat = tokens_to_latent(zeros, cb);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            EXPECT_TRUE(torch::equal(lat.index({torch::indexing::Slice(), i, j}), cb.entries[0]));
        }
    }
    TokenGrid bad{1, 2, {0, 8}};
    EXPECT_THROW(tokens_to_latent(bad, cb), CorruptData);
    TokenGrid negative{1, 1, {-1}};
    EXPECT_THROW(tokens_to_latent(negative, cb), CorruptData);
}

TEST(TokensToLatent, InvertsQuantizeOnCodebookPoints) {
    Rng rng(8);
    Codebook cb{rng.normal_tensor({16, 4})};
    TokenGrid g{3, 3, {}};
    for (int i = 0; i < 9; ++i) {
        g.tokens.push_back(rng.uniform_int(0, 15));
    }
    EXPECT_EQ(quantize(tokens_to_latent(g, cb), cb).first, g);
}

TEST(Codebook, ValidationRejectsCorruption) {
    Codebook dup{torch::tensor({0.5f, 0.5f, 0.5f, 0.5f}).reshape({2, 2})};
    EXPECT_THROW(dup.validate(), CorruptData);
    Codebook single{torch::ones({1, 2})};
    EXPECT_THROW(single.validate(), CorruptData);
    Codebook nan{torch::tensor({0.0f, NAN, 1.0f, 1.0f}).reshape({2, 2})};
    EXPECT_THROW(nan.validate(), CorruptData);
    Codebook ok{torch::tensor({0.0f, 0.0f, 1.0f, 1.0f}).reshape({2, 2})};
    EXPECT_NO_THROW(ok.validate());
}

TEST(Autoencoder, ShapeContract) {
    torch::manual_seed(0);
    Autoencoder ae(tiny_options());
    auto z = encode_images(ae, torch::zeros({1, 3, 32, 32}));
    EXPECT_EQ(z.sizes(), (std::vector<std::int64_t>{1, 4, 8, 8}));
    EXPECT_TRUE(torch::isfinite(z).all().item<bool>());
    auto x = decode_latents(ae, torch::randn({2, 4, 8, 8}) * 50);
    EXPECT_EQ(x.sizes(), (std::vector<std::int64_t>{2, 3, 32, 32}));
    EXPECT_LE(x.abs().max().item<double>(), 1.0);
}

TEST(Autoencoder, RejectsIndivisibleInput) {
    Autoencoder ae(tiny_options());
    EXPECT_THROW(encode_images(ae, torch::zeros({1, 3, 30, 32})), InvalidArgument);
    EXPECT_THROW(encode_images(ae, torch::zeros({1, 1, 32, 32})), InvalidArgument);
    EXPECT_THROW(decode_latents(ae, torch::zeros({1, 3, 8, 8})), InvalidArgument);
    auto o = tiny_options();
    o.image_size = 30;
    EXPECT_THROW(Autoencoder{o}, InvalidArgument);
}

TEST(Autoencoder, TokenizeRoundTrip) {
    Autoencoder ae(tiny_options());
    auto img = torch::rand({3, 32, 32}) * 2 - 1;
    auto g = tokenize(ae, img);
    EXPECT_EQ(g.height, 8);
    EXPECT_EQ(g.width, 8);
    auto decoded = decode_tokens(ae, g);
    EXPECT_EQ(decoded.sizes(), (std::vector<std::int64_t>{1, 3, 32, 32}));
}

TEST(TrainAutoencoder, DeterministicAndDecreasing) {
    auto images = render_shapes_corpus(5, 24) * 2 - 1;
    AeTrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 8;
    cfg.dead_code_interval = 10;
    cfg.seed = 3;
    auto run = [&] {
        seed_torch(11);
        Autoencoder ae(tiny_options());
        auto result = train_autoencoder(ae, images, cfg);
        return std::pair{result, reconstruction_mse(ae, images)};
    };
    auto [a, mse_a] = run();
    auto [b, mse_b] = run();
    ASSERT_EQ(a.curve.size(), 30u);
    EXPECT_EQ(a.final_loss, b.final_loss);
    EXPECT_EQ(mse_a, mse_b);
    EXPECT_LT(a.curve.back().loss, a.curve.front().loss);
}

TEST(TrainAutoencoder, EmptyCorpusFails) {
    Autoencoder ae(tiny_options());
    EXPECT_THROW(train_autoencoder(ae, torch::zeros({0, 3, 32, 32}), AeTrainConfig{}), TrainingFailure);
}
