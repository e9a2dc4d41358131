// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include <torch/torch.h>

#include "genfix/errors.hpp"
#include "genfix/rng.hpp"

namespace genfix {

struct ShapesOptions {
    std::int64_t image_size = 32;
    int min_shapes = 1;
    int max_shapes = 2;
};

namespace detail {

struct Shape {
    int kind;  // 0 disc, 1 box, 2 triangle
    double cx, cy, r;
    double angle;
    std::array<double, 3> color;

    bool covers(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        switch (kind) {
            case 0: return dx * dx + dy * dy <= r * r;
            case 1: return std::abs(dx) <= r && std::abs(dy) <= 0.7 * r;
            default: {
                // equilateral triangle of circumradius r rotated by angle
                for (int k = 0; k < 3; ++k) {
                    const double a = angle + k * 2.0 * M_PI / 3.0 + M_PI / 3.0;
                    if (dx * std::cos(a) + dy * std::sin(a) > 0.5 * r) {
                        return false;
                    }
                }
                return true;
            }
        }
    }
};

}  // namespace detail

/// One procedural image [3, S, S] in [0, 1], quantized to 8-bit levels:
/// flat background with one or two anti-aliased discs, boxes or triangles.
inline torch::Tensor render_shapes_image(Rng& rng, const ShapesOptions& opts = {}) {
    detail::require(opts.image_size >= 8, "shape images must be at least 8 pixels wide");
    const auto s = opts.image_size;
    const double size = static_cast<double>(s);
    std::array<double, 3> background{};
    for (auto& c : background) {
        c = rng.uniform(0.05, 0.95);
    }
    const int count = static_cast<int>(rng.uniform_int(opts.min_shapes, opts.max_shapes));
    std::vector<detail::Shape> shapes;
    for (int i = 0; i < count; ++i) {
        detail::Shape sh{};
        sh.kind = static_cast<int>(rng.uniform_int(0, 2));
        sh.r = rng.uniform(0.12, 0.3) * size;
        sh.cx = rng.uniform(0.2, 0.8) * size;
        sh.cy = rng.uniform(0.2, 0.8) * size;
        sh.angle = rng.uniform(0.0, 2.0 * M_PI);
        for (auto& c : sh.color) {
            c = rng.uniform(0.05, 0.95);
        }
        shapes.push_back(sh);
    }

    constexpr int kSuper = 4;
    auto img = torch::empty({3, s, s}, torch::kFloat32);
    auto acc = img.accessor<float, 3>();
    for (std::int64_t y = 0; y < s; ++y) {
        for (std::int64_t x = 0; x < s; ++x) {
            std::array<double, 3> sum{};
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = x + (sx + 0.5) / kSuper;
                    const double py = y + (sy + 0.5) / kSuper;
                    auto color = background;
                    for (const auto& sh : shapes) {
                        if (sh.covers(px, py)) {
                            color = sh.color;
                        }
                    }
                    for (int c = 0; c < 3; ++c) {
                        sum[static_cast<std::size_t>(c)] += color[static_cast<std::size_t>(c)];
                    }
                }
            }
            for (int c = 0; c < 3; ++c) {
                const double v = sum[static_cast<std::size_t>(c)] / (kSuper * kSuper);
                acc[c][y][x] = static_cast<float>(std::round(v * 255.0) / 255.0);
            }
        }
    }
    return img;
}

/// Corpus of n images [n, 3, S, S] in [0, 1]; image i depends only on
/// (seed, i).
inline torch::Tensor render_shapes_corpus(std::uint64_t seed, std::int64_t n, const ShapesOptions& opts = {}) {
    std::vector<torch::Tensor> images;
    images.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, {0x5A4E, static_cast<std::uint64_t>(i)}));
        images.push_back(render_shapes_image(rng, opts));
    }
    return torch::stack(images);
}

}  // namespace genfix
