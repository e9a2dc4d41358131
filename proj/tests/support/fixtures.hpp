// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

// Small untrained models and scratch directories for tests.

#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "genfix/artifacts.hpp"
#include "genfix/epsilon_net.hpp"
#include "genfix/rng.hpp"
#include "genfix/token_model.hpp"
#include "genfix/vqae.hpp"

namespace genfix::testing {

/// Directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(std::filesystem::temp_directory_path() /
                ("genfix-" + tag + "-" + std::to_string(::getpid()))) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ignored;
        std::filesystem::remove_all(path_, ignored);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline AutoencoderOptions tiny_autoencoder_options() {
    AutoencoderOptions o;
    o.width = 8;
    o.codebook_size = 16;
    return o;
}

inline EpsilonNetOptions tiny_net_options(bool conditional) {
    EpsilonNetOptions o;
    o.latent_channels = 4;
    o.cond_channels = conditional ? 4 : 0;
    o.num_classes = conditional ? kNumClassTokens : 0;
    o.base_width = 8;
    o.channel_mult = {1, 2};
    o.time_embed_dim = 16;
    o.max_groups = 4;
    return o;
}

/// Untrained but complete model set; deterministic in `seed`.
inline SynthesisModels tiny_models(std::uint64_t seed) {
    seed_torch(seed);
    SynthesisModels m;
    m.autoencoder = Autoencoder(tiny_autoencoder_options());
    TokenModelOptions t;
    t.vocab = 16;
    t.seq_len = 64;
    t.d_model = 16;
    t.layers = 1;
    t.heads = 2;
    m.token_model = TokenTransformer(t);
    m.uncond = EpsilonNet(tiny_net_options(false));
    m.schedule = make_linear_schedule();
    m.autoencoder->eval();
    m.token_model->eval();
    m.uncond->eval();
    return m;
}

/// Split settings that keep DDIM artifacts cheap.
inline SplitConfig fast_split(const std::string& name) {
    SplitConfig cfg;
    cfg.name = name;
    cfg.inversion_stop = 200;
    cfg.inversion_steps = 4;
    cfg.temperature = ParamRange::fixed(5.0);
    return cfg;
}

}  // namespace genfix::testing
