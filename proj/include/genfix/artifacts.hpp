// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/artifact_class.hpp"
#include "genfix/diffusion.hpp"
#include "genfix/epsilon_net.hpp"
#include "genfix/errors.hpp"
#include "genfix/image_io.hpp"
#include "genfix/rng.hpp"
#include "genfix/schedule.hpp"
#include "genfix/token_model.hpp"
#include "genfix/vqae.hpp"

namespace genfix {

/// Trained models the synthesizers draw on. Only the autoencoder is
/// mandatory; the others are checked by the synthesizers that need them.
struct SynthesisModels {
    Autoencoder autoencoder{nullptr};
    TokenTransformer token_model{nullptr};
    EpsilonNet uncond{nullptr};
    std::optional<NoiseSchedule> schedule;
};

/// One synthesized artifact image [C, H, W] in [-1, 1] plus everything needed
/// to regenerate it from the same seed.
struct Artifact {
    torch::Tensor image;
    ArtifactClass label = ArtifactClass::kReplaceToken;
    nlohmann::json params = nlohmann::json::object();
};

namespace detail {

inline torch::Tensor as_batch(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

inline void require_autoencoder(const SynthesisModels& m) {
    if (!m.autoencoder) {
        throw DependencyError("artifact synthesis needs a trained autoencoder");
    }
}

inline void require_uncond(const SynthesisModels& m) {
    require_autoencoder(m);
    if (!m.uncond || !m.schedule) {
        throw DependencyError("DDIM artifacts need a trained unconditional diffusion model");
    }
}

inline torch::Tensor ddim_perturbed_roundtrip(const SynthesisModels& m, const torch::Tensor& x, int stop,
                                              int n_steps, const std::function<torch::Tensor(torch::Tensor)>& perturb) {
    auto ae = m.autoencoder;
    const double scale = ae->scale();
    UnconditionalPredictor predictor{m.uncond};
    auto z = encode_images(ae, as_batch(x)) * scale;
    auto latent = ddim_invert(predictor, *m.schedule, z, stop, n_steps);
    auto generated = ddim_generate(predictor, *m.schedule, perturb(latent), stop, n_steps);
    return decode_latents(ae, generated / scale)[0];
}

}  // namespace detail

/// Tokenize, overwrite a uniformly placed rect_h x rect_w block of tokens with
/// uniform codebook indices, decode.
inline Artifact synth_replace_token(const SynthesisModels& m, const torch::Tensor& x, std::int64_t rect_h,
                                    std::int64_t rect_w, Rng& rng) {
    detail::require_autoencoder(m);
    auto ae = m.autoencoder;
    auto grid = tokenize(ae, x);
    detail::require(rect_h >= 0 && rect_w >= 0, "rectangle size must be non-negative");
    detail::require(rect_h <= grid.height && rect_w <= grid.width, "rectangle larger than the token grid");
    const auto row = rng.uniform_int(0, grid.height - rect_h);
    const auto col = rng.uniform_int(0, grid.width - rect_w);
    const auto k_count = ae->options.codebook_size;
    for (std::int64_t i = row; i < row + rect_h; ++i) {
        for (std::int64_t j = col; j < col + rect_w; ++j) {
            grid.at(i, j) = rng.uniform_int(0, k_count - 1);
        }
    }
    return {decode_tokens(ae, grid)[0], ArtifactClass::kReplaceToken,
            {{"rect_h", rect_h}, {"rect_w", rect_w}, {"row", row}, {"col", col}}};
}

/// Tokenize and resample a fraction of the tokens from the autoregressive
/// model at the given temperature / top-k, then decode.
inline Artifact synth_gpt_sampling(const SynthesisModels& m, const torch::Tensor& x, const SamplingParams& p,
                                   double keep_fraction, Rng& rng, const ResampleOptions& opts = {}) {
    detail::require_autoencoder(m);
    if (!m.token_model) {
        throw DependencyError("GPT sampling artifacts need a trained token model");
    }
    auto ae = m.autoencoder;
    auto model = m.token_model;
    auto grid = tokenize(ae, x);
    auto resampled = resample_tokens(grid, model, keep_fraction, p, rng, opts);
    std::int64_t changed = 0;
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        changed += grid.tokens[static_cast<std::size_t>(i)] != resampled.tokens[static_cast<std::size_t>(i)];
    }
    return {decode_tokens(ae, resampled)[0], ArtifactClass::kGptSampling,
            {{"temperature", p.temperature},
             {"top_k", p.top_k},
             {"keep_fraction", keep_fraction},
             {"condition_on_original", opts.condition_on_original},
             {"contiguous", opts.contiguous},
             {"changed_tokens", changed}}};
}

/// DDIM-invert to step `stop`, add alpha * N(0, I) to the latent code,
/// regenerate and decode.
inline Artifact synth_ddim_gaussian(const SynthesisModels& m, const torch::Tensor& x, int stop, int n_steps,
                                    double alpha, Rng& rng) {
    detail::require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be non-negative");
    detail::require_uncond(m);
    auto image = detail::ddim_perturbed_roundtrip(m, x, stop, n_steps, [&](torch::Tensor latent) {
        return latent + rng.normal_tensor(latent.sizes(), latent.scalar_type()) * alpha;
    });
    return {image, ArtifactClass::kDdimGaussian, {{"T0", stop}, {"n_steps", n_steps}, {"alpha", alpha}}};
}

/// DDIM-invert, apply gamma * latent + beta, regenerate and decode.
inline Artifact synth_ddim_scale(const SynthesisModels& m, const torch::Tensor& x, int stop, int n_steps,
                                 double gamma, double beta) {
    detail::require(gamma != 0.0 && std::isfinite(gamma) && std::isfinite(beta), "gamma must be non-zero");
    detail::require_uncond(m);
    auto image = detail::ddim_perturbed_roundtrip(m, x, stop, n_steps,
                                                  [&](torch::Tensor latent) { return latent * gamma + beta; });
    return {image, ArtifactClass::kDdimScale,
            {{"T0", stop}, {"n_steps", n_steps}, {"gamma", gamma}, {"beta", beta}}};
}

/// A scalar parameter either fixed for the split or drawn uniformly per image.
struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;

    static ParamRange fixed(double v) { return {v, v}; }
    bool is_fixed() const { return lo == hi; }
    double sample(Rng& rng) const { return is_fixed() ? lo : rng.uniform(lo, hi); }

    nlohmann::json to_json() const {
        return is_fixed() ? nlohmann::json(lo) : nlohmann::json::array({lo, hi});
    }

    static ParamRange from_json(const nlohmann::json& j) {
        if (j.is_number()) {
            return fixed(j.get<double>());
        }
        if (j.is_array() && j.size() == 2) {
            ParamRange r{j[0].get<double>(), j[1].get<double>()};
            if (r.lo > r.hi) {
                throw ConfigError("parameter range has lo > hi");
            }
            return r;
        }
        throw ConfigError("parameter must be a number or a [lo, hi] pair");
    }
};

enum class ClassMode { kFixed, kUniform, kBalanced };

inline ClassMode class_mode_from_string(const std::string& s) {
    if (s == "fixed") return ClassMode::kFixed;
    if (s == "uniform") return ClassMode::kUniform;
    if (s == "balanced") return ClassMode::kBalanced;
    throw ConfigError("unknown class mode '" + s + "'");
}

inline std::string to_string(ClassMode m) {
    switch (m) {
        case ClassMode::kFixed: return "fixed";
        case ClassMode::kUniform: return "uniform";
        case ClassMode::kBalanced: return "balanced";
    }
    return "uniform";
}

/// Synthesis settings for one dataset split. Defaults are desk-scale values;
/// full-scale reference values are noted per field.
struct SplitConfig {
    std::string name = "train";
    /// fixed: every image gets classes[0]; uniform: i.i.d. uniform over
    /// classes; balanced: classes cycled in order.
    ClassMode class_mode = ClassMode::kUniform;
    std::vector<ArtifactClass> classes{kSynthesizedClasses.begin(), kSynthesizedClasses.end()};
    std::int64_t rect_h = 4;  // full scale: 4 x 4 on a 64 x 64 grid
    std::int64_t rect_w = 4;
    ParamRange temperature = ParamRange::fixed(21.0);  // full scale: 21 (test 18)
    std::int64_t top_k = 4;                            // full scale: 500 of 8192 codes
    double keep_fraction = 0.9;
    int inversion_stop = kDefaultInversionStop;
    int inversion_steps = kDefaultInversionSteps;
    ParamRange alpha = ParamRange::fixed(0.3);     // test split: 0.25
    ParamRange gamma = ParamRange::fixed(1.015);   // test split: 1.009
    ParamRange beta = ParamRange::fixed(0.01);     // test split: 0.005

    void validate() const {
        if (classes.empty()) {
            throw ConfigError("split '" + name + "' lists no artifact classes");
        }
        for (auto c : classes) {
            if (c == ArtifactClass::kMask) {
                throw ConfigError("MASK is not a synthesizable artifact class");
            }
        }
        if (class_mode == ClassMode::kFixed && classes.size() != 1) {
            throw ConfigError("fixed class mode needs exactly one class");
        }
        if (keep_fraction < 0.0 || keep_fraction > 1.0) {
            throw ConfigError("keep_fraction must lie in [0, 1]");
        }
    }
};

/// Synthesize one artifact of the given class, drawing per-image parameters
/// from `cfg` with a stream derived from `seed`.
inline Artifact synthesize(const SynthesisModels& m, const torch::Tensor& clean, ArtifactClass label,
                           const SplitConfig& cfg, std::uint64_t seed) {
    Rng param_rng(Rng::derive(seed, {1}));
    Rng rng(Rng::derive(seed, {2}));
    switch (label) {
        case ArtifactClass::kReplaceToken: return synth_replace_token(m, clean, cfg.rect_h, cfg.rect_w, rng);
        case ArtifactClass::kGptSampling:
            return synth_gpt_sampling(m, clean, SamplingParams{cfg.temperature.sample(param_rng), cfg.top_k},
                                      cfg.keep_fraction, rng);
        case ArtifactClass::kDdimGaussian:
            return synth_ddim_gaussian(m, clean, cfg.inversion_stop, cfg.inversion_steps,
                                       cfg.alpha.sample(param_rng), rng);
        case ArtifactClass::kDdimScale: {
            const double gamma = cfg.gamma.sample(param_rng);
            const double beta = cfg.beta.sample(param_rng);
            return synth_ddim_scale(m, clean, cfg.inversion_stop, cfg.inversion_steps, gamma, beta);
        }
        case ArtifactClass::kMask: break;
    }
    throw InvalidArgument("MASK cannot be synthesized");
}

/// Regenerate an artifact from its recorded label, parameters and seed.
inline Artifact replay_artifact(const SynthesisModels& m, const torch::Tensor& clean, ArtifactClass label,
                                const nlohmann::json& params, std::uint64_t seed) {
    SplitConfig cfg;
    cfg.classes = {label};
    cfg.class_mode = ClassMode::kFixed;
    switch (label) {
        case ArtifactClass::kReplaceToken:
            cfg.rect_h = params.at("rect_h").get<std::int64_t>();
            cfg.rect_w = params.at("rect_w").get<std::int64_t>();
            break;
        case ArtifactClass::kGptSampling:
            cfg.temperature = ParamRange::fixed(params.at("temperature").get<double>());
            cfg.top_k = params.at("top_k").get<std::int64_t>();
            cfg.keep_fraction = params.at("keep_fraction").get<double>();
            break;
        case ArtifactClass::kDdimGaussian:
            cfg.inversion_stop = params.at("T0").get<int>();
            cfg.inversion_steps = params.at("n_steps").get<int>();
            cfg.alpha = ParamRange::fixed(params.at("alpha").get<double>());
            break;
        case ArtifactClass::kDdimScale:
            cfg.inversion_stop = params.at("T0").get<int>();
            cfg.inversion_steps = params.at("n_steps").get<int>();
            cfg.gamma = ParamRange::fixed(params.at("gamma").get<double>());
            cfg.beta = ParamRange::fixed(params.at("beta").get<double>());
            break;
        case ArtifactClass::kMask: throw CorruptData("record labelled MASK");
    }
    return synthesize(m, clean, label, cfg, seed);
}

// ---------------------------------------------------------------------------
// Manifest

inline constexpr const char* kManifestSchema = "genfix.manifest";
inline constexpr int kManifestVersion = 1;

struct ArtifactRecord {
    std::string clean;     // relative to the manifest directory
    std::string artifact;  // relative to the manifest directory
    ArtifactClass label = ArtifactClass::kReplaceToken;
    nlohmann::json params = nlohmann::json::object();
    std::uint64_t seed = 0;
};

struct Manifest {
    std::uint64_t master_seed = 0;
    std::string split;
    std::vector<ArtifactRecord> records;
    std::filesystem::path root;  // directory holding manifest.jsonl

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

/// Line 1: {"schema", "version", "split", "master_seed", "count"}; then one
/// record per line: {"clean", "artifact", "label", "params", "seed"}.
inline void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot write manifest '" + path.string() + "'");
    }
    nlohmann::json header = {{"schema", kManifestSchema},
                             {"version", kManifestVersion},
                             {"split", manifest.split},
                             {"master_seed", manifest.master_seed},
                             {"count", manifest.records.size()}};
    os << header.dump() << '\n';
    for (const auto& r : manifest.records) {
        nlohmann::json line = {{"clean", r.clean},
                               {"artifact", r.artifact},
                               {"label", std::string(to_string(r.label))},
                               {"params", r.params},
                               {"seed", r.seed}};
        os << line.dump() << '\n';
    }
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DependencyError("manifest '" + path.string() + "' not found");
    }
    Manifest manifest;
    manifest.root = path.parent_path();
    std::string line;
    if (!std::getline(is, line)) {
        throw CorruptData("manifest is empty");
    }
    try {
        auto header = nlohmann::json::parse(line);
        if (header.at("schema").get<std::string>() != kManifestSchema ||
            header.at("version").get<int>() != kManifestVersion) {
            throw CorruptData("unsupported manifest schema");
        }
        manifest.split = header.at("split").get<std::string>();
        manifest.master_seed = header.at("master_seed").get<std::uint64_t>();
        std::size_t line_no = 1;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            auto j = nlohmann::json::parse(line);
            ArtifactRecord r;
            r.clean = j.at("clean").get<std::string>();
            r.artifact = j.at("artifact").get<std::string>();
            r.label = artifact_class_from_string(j.at("label").get<std::string>());
            r.params = j.at("params");
            r.seed = j.at("seed").get<std::uint64_t>();
            if (r.label == ArtifactClass::kMask) {
                throw CorruptData("manifest line " + std::to_string(line_no) + " is labelled MASK");
            }
            if (!std::filesystem::exists(manifest.resolve(r.clean)) ||
                !std::filesystem::exists(manifest.resolve(r.artifact))) {
                throw CorruptData("manifest line " + std::to_string(line_no) + " references a missing image");
            }
            manifest.records.push_back(std::move(r));
        }
        if (manifest.records.size() != header.at("count").get<std::size_t>()) {
            throw CorruptData("manifest record count does not match its header");
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptData(std::string("malformed manifest: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw CorruptData(std::string("malformed manifest: ") + e.what());
    }
    return manifest;
}

inline std::uint64_t record_seed(std::uint64_t master_seed, const std::string& split, std::size_t index) {
    return Rng::derive(master_seed, {stream_id(split), static_cast<std::uint64_t>(index)});
}

inline ArtifactClass assign_class(const SplitConfig& cfg, std::uint64_t master_seed, std::size_t index) {
    switch (cfg.class_mode) {
        case ClassMode::kFixed: return cfg.classes.front();
        case ClassMode::kBalanced: return cfg.classes[index % cfg.classes.size()];
        case ClassMode::kUniform: {
            Rng rng(Rng::derive(master_seed, {0xC1A55, static_cast<std::uint64_t>(index)}));
            return cfg.classes[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(cfg.classes.size()) - 1))];
        }
    }
    return cfg.classes.front();
}

/// Synthesize one artifact per clean image ([N, C, H, W] in [0, 1]) and write
/// clean/artifact PNGs plus manifest.jsonl into out_dir. The directory is
/// assembled under a temporary name and renamed at the end; on failure the
/// partial output is removed and DatasetBuildError is thrown.
inline Manifest build_dataset(const SynthesisModels& m, const torch::Tensor& clean_images, const SplitConfig& cfg,
                              std::uint64_t master_seed, const std::filesystem::path& out_dir,
                              const std::function<void(std::size_t, std::size_t)>& progress = {}) {
    namespace fs = std::filesystem;
    cfg.validate();
    detail::require(clean_images.dim() == 4 && clean_images.size(0) > 0, "no clean images to synthesize from");
    const fs::path staging = out_dir.string() + ".partial";
    fs::remove_all(staging);
    Manifest manifest;
    manifest.master_seed = master_seed;
    manifest.split = cfg.name;
    try {
        fs::create_directories(staging / "clean");
        fs::create_directories(staging / "artifact");
        const auto n = static_cast<std::size_t>(clean_images.size(0));
        for (std::size_t i = 0; i < n; ++i) {
            const auto clean = clean_images[static_cast<std::int64_t>(i)];
            const auto label = assign_class(cfg, master_seed, i);
            const auto seed = record_seed(master_seed, cfg.name, i);
            auto art = synthesize(m, to_model_range(clean), label, cfg, seed);

            std::ostringstream stem;
            stem << std::setw(6) << std::setfill('0') << i << ".png";
            ArtifactRecord r{"clean/" + stem.str(), "artifact/" + stem.str(), label, art.params, seed};
            write_png(staging / r.clean, clean);
            write_png(staging / r.artifact, to_unit_range(art.image));
            manifest.records.push_back(std::move(r));
            if (progress) {
                progress(i + 1, n);
            }
        }
        write_manifest(manifest, staging / "manifest.jsonl");
        fs::remove_all(out_dir);
        if (out_dir.has_parent_path()) {
            fs::create_directories(out_dir.parent_path());
        }
        fs::rename(staging, out_dir);
    } catch (const std::exception& e) {
        std::error_code ignored;
        fs::remove_all(staging, ignored);
        throw DatasetBuildError(std::string("dataset build failed: ") + e.what());
    }
    manifest.root = out_dir;
    return manifest;
}

/// Clean and artifact images of a manifest as [N, C, H, W] in [-1, 1], with
/// labels [N].
struct PairTensors {
    torch::Tensor clean;
    torch::Tensor artifact;
    torch::Tensor labels;
};

inline PairTensors load_pairs(const Manifest& manifest) {
    std::vector<torch::Tensor> clean;
    std::vector<torch::Tensor> artifact;
    std::vector<std::int64_t> labels;
    for (const auto& r : manifest.records) {
        clean.push_back(to_model_range(read_png(manifest.resolve(r.clean))));
        artifact.push_back(to_model_range(read_png(manifest.resolve(r.artifact))));
        labels.push_back(class_index(r.label));
    }
    detail::require(!clean.empty(), "manifest has no records");
    return {torch::stack(clean), torch::stack(artifact), torch::tensor(labels, torch::kInt64)};
}

}  // namespace genfix
