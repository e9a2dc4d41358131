// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace genfix {

/// Seeded random stream. Child streams are derived from the parent seed and a
/// stream id by a counter-style hash, so every consumer of randomness can be
/// traced back to one master seed without sharing generator state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = seed;
        for (std::uint64_t p : path) {
            s = mix(s ^ mix(p + 0x632BE59BD9B4E019ULL));
        }
        return s;
    }

    Rng split(std::uint64_t stream) const { return Rng(derive(seed_, {stream})); }

    std::uint64_t seed() const { return seed_; }
    std::mt19937_64& engine() { return engine_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return std::generate_canonical<double, 53>(engine_); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> dist(lo, hi);
        return dist(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() { return normal_(engine_); }

    torch::Tensor normal_tensor(torch::IntArrayRef shape, torch::ScalarType dtype = torch::kFloat32) {
        auto out = torch::empty(shape, torch::kFloat64);
        auto* data = out.data_ptr<double>();
        const auto n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            data[i] = normal_(engine_);
        }
        return out.to(dtype);
    }

    /// Distinct positions drawn uniformly from [0, n), returned in draw order.
    std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t count) {
        std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            pool[static_cast<std::size_t>(i)] = i;
        }
        for (std::int64_t i = 0; i < count; ++i) {
            auto j = uniform_int(i, n - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(count));
        return pool;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// FNV-1a hash, used to turn names into stream ids.
inline constexpr std::uint64_t stream_id(std::string_view name) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Seeds torch's global generator (parameter initialization) from a stream id.
inline void seed_torch(std::uint64_t seed) {
    torch::manual_seed(Rng::mix(seed));
}

}  // namespace genfix
