// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/errors.hpp"

namespace genfix {

inline constexpr std::array<char, 8> kCheckpointMagic = {'G', 'F', 'X', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kToolVersion = "genfix 0.1.0";

/// Self-describing weight container.
///
/// Layout (all integers little-endian):
///   8 bytes   magic "GFXCKPT1"
///   u32       format version
///   u64       header length, then that many bytes of JSON:
///             {"kind", "format_version", "config", "master_seed", "created_by", "metadata"}
///   u32       tensor count, then per tensor:
///             u32 name length, name bytes, u32 rank, rank x i64 dims,
///             numel x f32 values
struct Checkpoint {
    std::string kind;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t master_seed = 0;
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, torch::Tensor> tensors;  // float32, contiguous

    bool operator==(const Checkpoint& other) const {
        if (kind != other.kind || config != other.config || master_seed != other.master_seed ||
            metadata != other.metadata || tensors.size() != other.tensors.size()) {
            return false;
        }
        for (const auto& [name, t] : tensors) {
            auto it = other.tensors.find(name);
            if (it == other.tensors.end() || !t.sizes().equals(it->second.sizes()) || !torch::equal(t, it->second)) {
                return false;
            }
        }
        return true;
    }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_le(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) {
        throw CorruptData("checkpoint truncated");
    }
    return value;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::write_le<std::uint32_t>(os, kCheckpointVersion);
    const nlohmann::json header = {{"kind", ckpt.kind},
                                   {"format_version", kCheckpointVersion},
                                   {"config", ckpt.config},
                                   {"master_seed", ckpt.master_seed},
                                   {"created_by", kToolVersion},
                                   {"metadata", ckpt.metadata}};
    const auto text = header.dump();
    detail::write_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto t = tensor.detach().to(torch::kFloat32).contiguous();
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) {
            detail::write_le<std::int64_t>(os, d);
        }
        os.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) {
        throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DependencyError("checkpoint '" + path.string() + "' not found");
    }
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kCheckpointMagic) {
        throw CorruptData("'" + path.string() + "' is not a genfix checkpoint");
    }
    const auto version = detail::read_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw CorruptData("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = detail::read_le<std::uint64_t>(is);
    if (header_len > (1ULL << 30)) {
        throw CorruptData("checkpoint header too large");
    }
    std::string text(header_len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!is) {
        throw CorruptData("checkpoint truncated");
    }
    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        ckpt.kind = header.at("kind").get<std::string>();
        ckpt.config = header.at("config");
        ckpt.master_seed = header.at("master_seed").get<std::uint64_t>();
        ckpt.metadata = header.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw CorruptData(std::string("bad checkpoint header: ") + e.what());
    }
    const auto count = detail::read_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = detail::read_le<std::uint32_t>(is);
        if (rank > 8) {
            throw CorruptData("tensor '" + name + "' has implausible rank");
        }
        std::vector<std::int64_t> dims(rank);
        std::int64_t numel = 1;
        for (auto& d : dims) {
            d = detail::read_le<std::int64_t>(is);
            if (d < 0 || d > (1LL << 32)) {
                throw CorruptData("tensor '" + name + "' has a bad dimension");
            }
            numel *= d;
        }
        auto t = torch::empty(dims, torch::kFloat32);
        is.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) {
            throw CorruptData("checkpoint truncated in tensor '" + name + "'");
        }
        ckpt.tensors.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

/// Copies every parameter and buffer of a module into the checkpoint.
inline void store_module(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix = "") {
    for (const auto& item : module.named_parameters()) {
        ckpt.tensors[prefix + item.key()] = item.value().detach().to(torch::kFloat32).contiguous().clone();
    }
    for (const auto& item : module.named_buffers()) {
        ckpt.tensors[prefix + item.key()] = item.value().detach().to(torch::kFloat32).contiguous().clone();
    }
}

/// Loads weights into a module built from the checkpoint's config snapshot;
/// every parameter and buffer must be present with a matching shape.
inline void restore_module(const Checkpoint& ckpt, torch::nn::Module& module, const std::string& prefix = "") {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& key, torch::Tensor& dst) {
        auto it = ckpt.tensors.find(prefix + key);
        if (it == ckpt.tensors.end()) {
            throw CorruptData("checkpoint is missing tensor '" + prefix + key + "'");
        }
        if (!it->second.sizes().equals(dst.sizes())) {
            throw CorruptData("tensor '" + prefix + key + "' has a shape inconsistent with the config");
        }
        dst.copy_(it->second.to(dst.scalar_type()));
    };
    for (auto& item : module.named_parameters()) {
        assign(item.key(), item.value());
    }
    for (auto& item : module.named_buffers()) {
        assign(item.key(), item.value());
    }
}

inline void require_kind(const Checkpoint& ckpt, const std::string& kind) {
    if (ckpt.kind != kind) {
        throw InvalidArgument("expected a '" + kind + "' checkpoint, got '" + ckpt.kind + "'");
    }
}

}  // namespace genfix
