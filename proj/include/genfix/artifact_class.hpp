// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "genfix/errors.hpp"

namespace genfix {

/// Artifact labels. kMask marks an unknown artifact and is only ever used as a
/// conditioning label, never produced by a synthesizer.
enum class ArtifactClass : std::int64_t {
    kReplaceToken = 0,
    kGptSampling = 1,
    kDdimGaussian = 2,
    kDdimScale = 3,
    kMask = 4,
};

inline constexpr std::int64_t kNumArtifactClasses = 4;
/// Rows in the class-embedding table (artifact classes + MASK).
inline constexpr std::int64_t kNumClassTokens = 5;

inline constexpr std::array<ArtifactClass, 4> kSynthesizedClasses = {
    ArtifactClass::kReplaceToken, ArtifactClass::kGptSampling, ArtifactClass::kDdimGaussian,
    ArtifactClass::kDdimScale};

inline std::string_view to_string(ArtifactClass c) {
    switch (c) {
        case ArtifactClass::kReplaceToken: return "REPLACE_TOKEN";
        case ArtifactClass::kGptSampling: return "GPT_SAMPLING";
        case ArtifactClass::kDdimGaussian: return "DDIM_GAUSSIAN";
        case ArtifactClass::kDdimScale: return "DDIM_SCALE";
        case ArtifactClass::kMask: return "MASK";
    }
    return "UNKNOWN";
}

inline ArtifactClass artifact_class_from_string(std::string_view name) {
    for (auto c : {ArtifactClass::kReplaceToken, ArtifactClass::kGptSampling, ArtifactClass::kDdimGaussian,
                   ArtifactClass::kDdimScale, ArtifactClass::kMask}) {
        if (to_string(c) == name) {
            return c;
        }
    }
    // lower-case aliases used on the command line
    if (name == "replace_token") return ArtifactClass::kReplaceToken;
    if (name == "gpt_sampling") return ArtifactClass::kGptSampling;
    if (name == "ddim_gaussian") return ArtifactClass::kDdimGaussian;
    if (name == "ddim_scale") return ArtifactClass::kDdimScale;
    if (name == "mask") return ArtifactClass::kMask;
    throw InvalidArgument("unknown artifact class '" + std::string(name) + "'");
}

inline std::int64_t class_index(ArtifactClass c) { return static_cast<std::int64_t>(c); }

}  // namespace genfix
