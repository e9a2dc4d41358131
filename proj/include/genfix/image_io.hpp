// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>
#include <torch/torch.h>

#include "genfix/errors.hpp"

namespace genfix {

/// [-1, 1] model range -> [0, 1] metric / storage range.
inline torch::Tensor to_unit_range(const torch::Tensor& x) { return ((x + 1.0) * 0.5).clamp(0.0, 1.0); }

/// [0, 1] -> [-1, 1].
inline torch::Tensor to_model_range(const torch::Tensor& x) { return x * 2.0 - 1.0; }

/// Reads an 8-bit PNG as [C, H, W] float in [0, 1] (C = 3 for colour input,
/// 1 for grayscale; alpha is dropped).
inline torch::Tensor read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw InvalidArgument("cannot read PNG '" + path.string() + "': " + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const auto channels = color ? 3 : 1;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw CorruptData("cannot decode PNG '" + path.string() + "': " + image.message);
    }
    const auto h = static_cast<std::int64_t>(image.height);
    const auto w = static_cast<std::int64_t>(image.width);
    auto hwc = torch::from_blob(buffer.data(), {h, w, channels}, torch::kUInt8).clone();
    return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

/// Writes [C, H, W] values in [0, 1] as an 8-bit PNG (values are clamped and
/// rounded).
inline void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    detail::require(image.dim() == 3 && (image.size(0) == 1 || image.size(0) == 3), "PNG image must be 1 or 3 x H x W");
    auto bytes = image.to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8)
                     .permute({1, 2, 0}).contiguous();
    png_image out;
    std::memset(&out, 0, sizeof(out));
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(image.size(2));
    out.height = static_cast<png_uint_32>(image.size(1));
    out.format = image.size(0) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data_ptr<std::uint8_t>(), 0, nullptr)) {
        throw std::runtime_error("cannot write PNG '" + path.string() + "': " + out.message);
    }
}

}  // namespace genfix
