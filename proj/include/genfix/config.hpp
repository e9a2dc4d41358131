// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genfix/artifacts.hpp"
#include "genfix/epsilon_net.hpp"
#include "genfix/errors.hpp"
#include "genfix/restorer.hpp"
#include "genfix/schedule.hpp"
#include "genfix/shapes.hpp"
#include "genfix/token_model.hpp"
#include "genfix/vqae.hpp"

namespace genfix {

struct ScheduleConfig {
    int timesteps = kDefaultTimesteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;

    NoiseSchedule build() const { return make_linear_schedule(timesteps, beta_start, beta_end); }
};

struct ShapesCorpusConfig {
    std::int64_t count = 2000;
    ShapesOptions shapes;
};

/// Clean image source: either the procedural toy corpus or a directory of
/// PNG files (full-scale data). The two are mutually exclusive.
struct CorpusConfig {
    std::optional<ShapesCorpusConfig> shapes = ShapesCorpusConfig{};
    std::optional<std::string> image_dir;
    /// Images at the end of the corpus reserved for the test split.
    std::int64_t holdout = 64;
};

struct AutoencoderSection {
    AutoencoderOptions model;
    AeTrainConfig train;
};

struct TokenModelSection {
    TokenModelOptions model;
    TokenTrainConfig train;
};

struct DiffusionSection {
    EpsilonNetOptions model;
    TrainConfig train;
    /// Replaces the top-level schedule for this model when set.
    std::optional<ScheduleConfig> schedule;
};

struct ArtifactsSection {
    SplitConfig train;
    SplitConfig test;
};

struct EvalSection {
    std::vector<RestoreMode> modes = {RestoreMode::kBlind, RestoreMode::kNonBlind, RestoreMode::kGuided};
    double guidance_scale = kDefaultGuidanceScale;
    int n_steps = kDefaultRestoreSteps;
    std::int64_t max_images = 32;
    std::int64_t batch_size = 64;
    std::vector<double> sweep_scale = {1, 2, 3, 4, 5, 6};
    std::vector<int> sweep_steps = {5, 10, 20, 30, 50};
};

/// Complete pipeline configuration. Seeds of every stage derive from the
/// single master seed.
struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "genfix-out";
    ScheduleConfig schedule;
    CorpusConfig corpus;
    AutoencoderSection autoencoder;
    TokenModelSection token_model;
    DiffusionSection uncond_diffusion;
    ArtifactsSection artifacts;
    DiffusionSection restorer;
    EvalSection eval;

    const ScheduleConfig& schedule_for(const DiffusionSection& section) const {
        return section.schedule ? *section.schedule : schedule;
    }

    PipelineConfig() {
        uncond_diffusion.model.cond_channels = 0;
        uncond_diffusion.model.num_classes = 0;
        uncond_diffusion.train.mask_prob = 0.0;
        restorer.model.base_width = 64;
        artifacts.test.name = "test";
        artifacts.test.temperature = ParamRange::fixed(18.0);
        artifacts.test.alpha = ParamRange::fixed(0.25);
        artifacts.test.gamma = ParamRange::fixed(1.009);
        artifacts.test.beta = ParamRange::fixed(0.005);
    }
};

namespace detail {

/// Reads an object key by key; unknown keys are an error.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("'" + path_ + "' must be an object");
        }
    }

    template <class T>
    void opt(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("'" + where(key) + "' has the wrong type: " + e.what());
        }
    }

    const nlohmann::json* section(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key())) {
                throw ConfigError("unknown key '" + where(item.key()) + "'");
            }
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_into(const nlohmann::json& j, const std::string& path, ParamRange& out) {
    try {
        out = ParamRange::from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

inline void read_model(ObjectReader& r, AutoencoderOptions& o) {
    r.opt("image_channels", o.image_channels);
    r.opt("image_size", o.image_size);
    r.opt("downsample", o.downsample);
    r.opt("latent_dim", o.latent_dim);
    r.opt("codebook_size", o.codebook_size);
    r.opt("width", o.width);
    r.opt("max_groups", o.max_groups);
}

inline void read_model(ObjectReader& r, TokenModelOptions& o) {
    r.opt("d_model", o.d_model);
    r.opt("layers", o.layers);
    r.opt("heads", o.heads);
}

inline void read_model(ObjectReader& r, EpsilonNetOptions& o) {
    r.opt("base_width", o.base_width);
    r.opt("channel_mult", o.channel_mult);
    r.opt("time_embed_dim", o.time_embed_dim);
    r.opt("max_groups", o.max_groups);
    r.opt("dropout", o.dropout);
}

inline void read_schedule(const nlohmann::json& j, const std::string& where, ScheduleConfig& s) {
    ObjectReader r(j, where);
    r.opt("timesteps", s.timesteps);
    r.opt("beta_start", s.beta_start);
    r.opt("beta_end", s.beta_end);
    r.finish();
}

template <class Options>
void read_model_section(ObjectReader& parent, const std::string& key, Options& o) {
    if (const auto* j = parent.section(key)) {
        ObjectReader r(*j, parent.where(key));
        read_model(r, o);
        r.finish();
    }
}

inline void read_train(ObjectReader& r, AeTrainConfig& c) {
    r.opt("steps", c.steps);
    r.opt("batch_size", c.batch_size);
    r.opt("learning_rate", c.learning_rate);
    r.opt("commitment", c.commitment);
    r.opt("continuous_fraction", c.continuous_fraction);
    r.opt("dead_code_interval", c.dead_code_interval);
    r.opt("min_lr_fraction", c.min_lr_fraction);
}

inline void read_train(ObjectReader& r, TokenTrainConfig& c) {
    r.opt("steps", c.steps);
    r.opt("batch_size", c.batch_size);
    r.opt("learning_rate", c.learning_rate);
}

inline void read_train(ObjectReader& r, TrainConfig& c) {
    r.opt("steps", c.steps);
    r.opt("batch_size", c.batch_size);
    r.opt("learning_rate", c.learning_rate);
    r.opt("mask_prob", c.mask_prob);
    r.opt("min_lr_fraction", c.min_lr_fraction);
    r.opt("ema_decay", c.ema_decay);
    r.opt("mirror", c.mirror);
    r.opt("checkpoint_every", c.checkpoint_every);
}

template <class Train>
void read_train_section(ObjectReader& parent, Train& c) {
    if (const auto* j = parent.section("train")) {
        ObjectReader r(*j, parent.where("train"));
        read_train(r, c);
        r.finish();
    }
}

inline void read_split(const nlohmann::json& j, const std::string& path, SplitConfig& s) {
    ObjectReader r(j, path);
    std::string mode = to_string(s.class_mode);
    r.opt("class_mode", mode);
    s.class_mode = class_mode_from_string(mode);
    if (const auto* classes = r.section("classes")) {
        if (!classes->is_array()) {
            throw ConfigError("'" + r.where("classes") + "' must be an array of class names");
        }
        s.classes.clear();
        for (const auto& c : *classes) {
            try {
                s.classes.push_back(artifact_class_from_string(c.get<std::string>()));
            } catch (const std::exception& e) {
                throw ConfigError("'" + r.where("classes") + "': " + e.what());
            }
        }
    }
    r.opt("rect_h", s.rect_h);
    r.opt("rect_w", s.rect_w);
    if (const auto* t = r.section("temperature")) read_into(*t, r.where("temperature"), s.temperature);
    r.opt("top_k", s.top_k);
    r.opt("keep_fraction", s.keep_fraction);
    r.opt("inversion_stop", s.inversion_stop);
    r.opt("inversion_steps", s.inversion_steps);
    if (const auto* a = r.section("alpha")) read_into(*a, r.where("alpha"), s.alpha);
    if (const auto* g = r.section("gamma")) read_into(*g, r.where("gamma"), s.gamma);
    if (const auto* b = r.section("beta")) read_into(*b, r.where("beta"), s.beta);
    r.finish();
}

}  // namespace detail

/// Checks cross-field constraints; throws ConfigError.
inline void validate(const PipelineConfig& c) {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) {
            throw ConfigError(msg);
        }
    };
    for (const auto* s : {&c.schedule, &c.schedule_for(c.uncond_diffusion), &c.schedule_for(c.restorer)}) {
        check(s->timesteps >= 1 && s->beta_start > 0.0 && s->beta_start <= s->beta_end && s->beta_end < 1.0,
              "schedule needs timesteps >= 1 and 0 < beta_start <= beta_end < 1");
    }
    check(c.corpus.shapes.has_value() != c.corpus.image_dir.has_value(),
          "corpus needs exactly one of 'shapes' (toy) or 'image_dir' (full scale)");
    if (c.corpus.shapes) {
        check(c.corpus.shapes->count > c.corpus.holdout, "corpus.shapes.count must exceed corpus.holdout");
        check(c.corpus.shapes->shapes.image_size == c.autoencoder.model.image_size,
              "corpus.shapes.image_size must equal autoencoder.model.image_size");
        check(c.corpus.shapes->shapes.min_shapes >= 1 &&
                  c.corpus.shapes->shapes.min_shapes <= c.corpus.shapes->shapes.max_shapes,
              "corpus.shapes needs 1 <= min_shapes <= max_shapes");
    }
    check(c.corpus.holdout >= 1, "corpus.holdout must be positive");
    try {
        c.autoencoder.model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("autoencoder.model: ") + e.what());
    }
    check(c.autoencoder.train.steps >= 1 && c.autoencoder.train.batch_size >= 1 &&
              c.autoencoder.train.learning_rate > 0.0,
          "autoencoder.train needs positive steps, batch_size and learning_rate");
    check(c.token_model.model.d_model % c.token_model.model.heads == 0,
          "token_model.model.d_model must be divisible by heads");
    check(c.token_model.train.steps >= 1 && c.token_model.train.batch_size >= 1 &&
              c.token_model.train.learning_rate > 0.0,
          "token_model.train needs positive steps, batch_size and learning_rate");
    for (const auto* section : {&c.uncond_diffusion, &c.restorer}) {
        const auto& m = section->model;
        check(m.time_embed_dim > 0 && m.time_embed_dim % 2 == 0, "time_embed_dim must be a positive even number");
        check(m.base_width > 0 && !m.channel_mult.empty(), "diffusion networks need base_width > 0 and channel_mult");
        check(m.dropout >= 0.0 && m.dropout < 1.0, "dropout must lie in [0, 1)");
        try {
            section->train.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("diffusion train section: ") + e.what());
        }
    }
    for (const auto* split : {&c.artifacts.train, &c.artifacts.test}) {
        split->validate();
        check(split->inversion_stop >= 0 && split->inversion_stop <= c.schedule_for(c.uncond_diffusion).timesteps,
              "inversion_stop must lie in [0, timesteps] of the unconditional schedule");
        check(split->inversion_steps >= 1, "inversion_steps must be positive");
        check(split->top_k >= 1 && split->top_k <= c.autoencoder.model.codebook_size,
              "top_k must lie in [1, codebook_size]");
        check(split->temperature.lo > 0.0, "temperature must be positive");
        const auto grid = c.autoencoder.model.latent_size();
        check(split->rect_h >= 1 && split->rect_w >= 1 && split->rect_h <= grid && split->rect_w <= grid,
              "replacement rectangle must fit the token grid");
    }
    check(!c.eval.modes.empty(), "eval.modes must not be empty");
    check(c.eval.guidance_scale >= 0.0, "eval.guidance_scale must be non-negative");
    check(c.eval.n_steps >= 1 && c.eval.max_images >= 1 && c.eval.batch_size >= 1,
          "eval needs positive n_steps, max_images and batch_size");
    for (double s : c.eval.sweep_scale) {
        check(s >= 0.0, "eval.sweep_scale values must be non-negative");
    }
    for (int n : c.eval.sweep_steps) {
        check(n >= 1, "eval.sweep_steps values must be positive");
    }
}

/// Parses and validates a configuration document. Missing keys keep their
/// defaults; unknown keys are rejected.
inline PipelineConfig parse_config(const nlohmann::json& j) {
    using detail::ObjectReader;
    PipelineConfig c;
    ObjectReader root(j, "");
    root.opt("seed", c.seed);
    root.opt("output_dir", c.output_dir);
    if (const auto* s = root.section("schedule")) {
        detail::read_schedule(*s, "schedule", c.schedule);
    }
    if (const auto* s = root.section("corpus")) {
        ObjectReader r(*s, "corpus");
        const auto* shapes = r.section("shapes");
        const auto* dir = r.section("image_dir");
        if (shapes && dir) {
            throw ConfigError("corpus.shapes (toy) and corpus.image_dir (full scale) are mutually exclusive");
        }
        if (dir) {
            c.corpus.shapes.reset();
            try {
                c.corpus.image_dir = dir->get<std::string>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("'corpus.image_dir' must be a string");
            }
        }
        if (shapes) {
            ObjectReader sr(*shapes, "corpus.shapes");
            sr.opt("count", c.corpus.shapes->count);
            sr.opt("image_size", c.corpus.shapes->shapes.image_size);
            sr.opt("min_shapes", c.corpus.shapes->shapes.min_shapes);
            sr.opt("max_shapes", c.corpus.shapes->shapes.max_shapes);
            sr.finish();
        }
        r.opt("holdout", c.corpus.holdout);
        r.finish();
    }
    if (const auto* s = root.section("autoencoder")) {
        ObjectReader r(*s, "autoencoder");
        detail::read_model_section(r, "model", c.autoencoder.model);
        detail::read_train_section(r, c.autoencoder.train);
        r.finish();
    }
    if (const auto* s = root.section("token_model")) {
        ObjectReader r(*s, "token_model");
        detail::read_model_section(r, "model", c.token_model.model);
        detail::read_train_section(r, c.token_model.train);
        r.finish();
    }
    for (auto [key, section] : {std::pair{"uncond_diffusion", &c.uncond_diffusion}, std::pair{"restorer", &c.restorer}}) {
        if (const auto* s = root.section(key)) {
            ObjectReader r(*s, key);
            detail::read_model_section(r, "model", section->model);
            detail::read_train_section(r, section->train);
            if (const auto* sc = r.section("schedule")) {
                section->schedule = c.schedule;
                detail::read_schedule(*sc, std::string(key) + ".schedule", *section->schedule);
            }
            r.finish();
        }
    }
    if (const auto* s = root.section("artifacts")) {
        ObjectReader r(*s, "artifacts");
        if (const auto* t = r.section("train")) detail::read_split(*t, "artifacts.train", c.artifacts.train);
        if (const auto* t = r.section("test")) detail::read_split(*t, "artifacts.test", c.artifacts.test);
        r.finish();
    }
    if (const auto* s = root.section("eval")) {
        ObjectReader r(*s, "eval");
        if (const auto* modes = r.section("modes")) {
            if (!modes->is_array() || modes->empty()) {
                throw ConfigError("'eval.modes' must be a non-empty array");
            }
            c.eval.modes.clear();
            for (const auto& m : *modes) {
                try {
                    c.eval.modes.push_back(restore_mode_from_string(m.get<std::string>()));
                } catch (const std::exception& e) {
                    throw ConfigError(std::string("'eval.modes': ") + e.what());
                }
            }
        }
        r.opt("guidance_scale", c.eval.guidance_scale);
        r.opt("n_steps", c.eval.n_steps);
        r.opt("max_images", c.eval.max_images);
        r.opt("batch_size", c.eval.batch_size);
        r.opt("sweep_scale", c.eval.sweep_scale);
        r.opt("sweep_steps", c.eval.sweep_steps);
        r.finish();
    }
    root.finish();

    // Shapes implied by the autoencoder.
    const auto& ae = c.autoencoder.model;
    c.token_model.model.vocab = ae.codebook_size;
    c.token_model.model.seq_len = ae.latent_size() * ae.latent_size();
    for (auto* section : {&c.uncond_diffusion, &c.restorer}) {
        section->model.latent_channels = ae.latent_dim;
    }
    c.uncond_diffusion.model.cond_channels = 0;
    c.uncond_diffusion.model.num_classes = 0;
    c.restorer.model.cond_channels = ae.latent_dim;
    c.restorer.model.num_classes = kNumClassTokens;
    c.artifacts.train.name = "train";
    c.artifacts.test.name = "test";
    validate(c);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

inline nlohmann::json to_json(const SplitConfig& s) {
    nlohmann::json classes = nlohmann::json::array();
    for (auto c : s.classes) {
        classes.push_back(to_string(c));
    }
    return {{"class_mode", to_string(s.class_mode)},
            {"classes", classes},
            {"rect_h", s.rect_h},
            {"rect_w", s.rect_w},
            {"temperature", s.temperature.to_json()},
            {"top_k", s.top_k},
            {"keep_fraction", s.keep_fraction},
            {"inversion_stop", s.inversion_stop},
            {"inversion_steps", s.inversion_steps},
            {"alpha", s.alpha.to_json()},
            {"gamma", s.gamma.to_json()},
            {"beta", s.beta.to_json()}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"steps", t.steps},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"mask_prob", t.mask_prob},
            {"min_lr_fraction", t.min_lr_fraction},
            {"ema_decay", t.ema_decay},
            {"mirror", t.mirror},
            {"checkpoint_every", t.checkpoint_every}};
}

/// Fully resolved configuration, re-parseable by parse_config.
inline nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json corpus = {{"holdout", c.corpus.holdout}};
    if (c.corpus.shapes) {
        corpus["shapes"] = {{"count", c.corpus.shapes->count},
                            {"image_size", c.corpus.shapes->shapes.image_size},
                            {"min_shapes", c.corpus.shapes->shapes.min_shapes},
                            {"max_shapes", c.corpus.shapes->shapes.max_shapes}};
    } else {
        corpus["image_dir"] = *c.corpus.image_dir;
    }
    auto ae_model = c.autoencoder.model.to_json();
    const auto& at = c.autoencoder.train;
    auto net = [](const EpsilonNetOptions& o) {
        return nlohmann::json{{"base_width", o.base_width},
                              {"channel_mult", o.channel_mult},
                              {"time_embed_dim", o.time_embed_dim},
                              {"max_groups", o.max_groups},
                              {"dropout", o.dropout}};
    };
    auto schedule = [](const ScheduleConfig& s) {
        return nlohmann::json{{"timesteps", s.timesteps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
    };
    auto diffusion = [&](const DiffusionSection& d) {
        nlohmann::json j{{"model", net(d.model)}, {"train", to_json(d.train)}};
        if (d.schedule) {
            j["schedule"] = schedule(*d.schedule);
        }
        return j;
    };
    const auto& tm = c.token_model;
    nlohmann::json modes = nlohmann::json::array();
    for (auto m : c.eval.modes) {
        modes.push_back(to_string(m));
    }
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"schedule", schedule(c.schedule)},
        {"corpus", corpus},
        {"autoencoder",
         {{"model", ae_model},
          {"train",
           {{"steps", at.steps},
            {"batch_size", at.batch_size},
            {"learning_rate", at.learning_rate},
            {"commitment", at.commitment},
            {"continuous_fraction", at.continuous_fraction},
            {"dead_code_interval", at.dead_code_interval},
            {"min_lr_fraction", at.min_lr_fraction}}}}},
        {"token_model",
         {{"model", {{"d_model", tm.model.d_model}, {"layers", tm.model.layers}, {"heads", tm.model.heads}}},
          {"train",
           {{"steps", tm.train.steps},
            {"batch_size", tm.train.batch_size},
            {"learning_rate", tm.train.learning_rate}}}}},
        {"uncond_diffusion", diffusion(c.uncond_diffusion)},
        {"artifacts", {{"train", to_json(c.artifacts.train)}, {"test", to_json(c.artifacts.test)}}},
        {"restorer", diffusion(c.restorer)},
        {"eval",
         {{"modes", modes},
          {"guidance_scale", c.eval.guidance_scale},
          {"n_steps", c.eval.n_steps},
          {"max_images", c.eval.max_images},
          {"batch_size", c.eval.batch_size},
          {"sweep_scale", c.eval.sweep_scale},
          {"sweep_steps", c.eval.sweep_steps}}},
    };
}

/// Full-scale reference value for a configuration key.
struct ReferenceValue {
    const char* key;
    const char* full_scale;
};

inline const std::vector<ReferenceValue>& reference_values() {
    static const std::vector<ReferenceValue> table = {
        {"schedule.timesteps", "1000"},
        {"autoencoder.model.image_size", "256"},
        {"autoencoder.model.downsample", "4 (64x64 token grid)"},
        {"autoencoder.model.codebook_size", "8192"},
        {"uncond_diffusion.train.steps", "pretrained unconditional model"},
        {"artifacts.train.rect_h x rect_w", "4 x 4 tokens"},
        {"artifacts.train.temperature", "21 (test 18)"},
        {"artifacts.train.top_k", "500"},
        {"artifacts.train.keep_fraction", "0.9"},
        {"artifacts.train.inversion_stop", "840"},
        {"artifacts.train.inversion_steps", "48"},
        {"artifacts.train.alpha", "0.3 (test 0.25)"},
        {"artifacts.train.gamma / beta", "1.015 / 0.01 (test 1.009 / 0.005)"},
        {"restorer.model.time_embed_dim", "768"},
        {"restorer.train.steps", "390000 (FFHQ), 87000 (AFHQ)"},
        {"restorer.train.batch_size", "24"},
        {"restorer.train.learning_rate", "1e-4"},
        {"restorer.train.mask_prob", "0.5"},
        {"eval.guidance_scale", "3.0"},
        {"eval.n_steps", "30"},
    };
    return table;
}

}  // namespace genfix
