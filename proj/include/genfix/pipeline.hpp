// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
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

#include "genfix/artifacts.hpp"
#include "genfix/checkpoint.hpp"
#include "genfix/config.hpp"
#include "genfix/errors.hpp"
#include "genfix/image_io.hpp"
#include "genfix/metrics.hpp"
#include "genfix/restorer.hpp"
#include "genfix/rng.hpp"
#include "genfix/shapes.hpp"

namespace genfix {

/// Stream ids under the master seed, one per stage.
enum class Stage : std::uint64_t {
    kCorpus = 0xC0,
    kAutoencoder = 0xA1,
    kTokenModel = 0xA2,
    kUncond = 0xA3,
    kSynth = 0xA4,
    kRestorer = 0xA5,
    kEval = 0xA6,
};

inline std::uint64_t stage_seed(const PipelineConfig& cfg, Stage stage) {
    return Rng::derive(cfg.seed, {static_cast<std::uint64_t>(stage)});
}

using Logger = std::function<void(const std::string&)>;

/// Output layout of one pipeline run.
struct PipelinePaths {
    std::filesystem::path root;

    std::filesystem::path autoencoder() const { return root / "autoencoder.ckpt"; }
    std::filesystem::path autoencoder_curve() const { return root / "autoencoder_curve.csv"; }
    std::filesystem::path token_model() const { return root / "token_model.ckpt"; }
    std::filesystem::path token_model_curve() const { return root / "token_model_curve.csv"; }
    std::filesystem::path uncond() const { return root / "uncond.ckpt"; }
    std::filesystem::path uncond_curve() const { return root / "uncond_curve.csv"; }
    std::filesystem::path dataset(const std::string& split) const { return root / "data" / split; }
    std::filesystem::path manifest(const std::string& split) const { return dataset(split) / "manifest.jsonl"; }
    std::filesystem::path restorer() const { return root / "restorer.ckpt"; }
    std::filesystem::path restorer_curve() const { return root / "restorer_curve.csv"; }
    std::filesystem::path eval_dir() const { return root / "eval"; }
};

/// output_dir, placed under $GENFIX_OUT when that is set and output_dir is
/// relative.
inline PipelinePaths resolve_paths(const PipelineConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir);
    if (const char* env = std::getenv("GENFIX_OUT"); env != nullptr && *env != '\0' && dir.is_relative()) {
        dir = std::filesystem::path(env) / dir;
    }
    return {dir};
}

// ---------------------------------------------------------------------------
// CSV and digests

inline std::string format_number(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

/// Header row plus data rows, comma separated, LF line endings.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            os << (i ? "," : "") << csv_field(fields[i]);
        }
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) {
        line(r);
    }
}

inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DependencyError("'" + path.string() + "' not found");
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            fields.push_back(f);
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DependencyError("'" + path.string() + "' not found");
    }
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[1 << 14];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// Digest over every regular file below `dir` (relative path and content),
/// in sorted path order.
inline std::string tree_digest(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::string joined;
    for (const auto& f : files) {
        joined += std::filesystem::relative(f, dir).generic_string() + ":" + file_digest(f) + "\n";
    }
    return std::to_string(stream_id(joined));
}

// ---------------------------------------------------------------------------
// Corpus

struct Corpus {
    torch::Tensor train;    // [N, C, H, W] in [0, 1]
    torch::Tensor holdout;  // [M, C, H, W] in [0, 1]
};

inline torch::Tensor read_image_dir(const std::filesystem::path& dir, std::int64_t image_size) {
    if (!std::filesystem::is_directory(dir)) {
        throw DependencyError("image directory '" + dir.string() + "' not found");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw InvalidArgument("image directory '" + dir.string() + "' holds no PNG files");
    }
    std::vector<torch::Tensor> images;
    for (const auto& f : files) {
        auto img = read_png(f);
        if (img.size(0) == 1) {
            img = img.expand({3, img.size(1), img.size(2)}).clone();
        }
        if (img.size(1) != image_size || img.size(2) != image_size) {
            throw InvalidArgument("'" + f.string() + "' is not " + std::to_string(image_size) + "x" +
                                  std::to_string(image_size));
        }
        images.push_back(img);
    }
    return torch::stack(images);
}

/// Clean corpus split into training images and the held-out tail.
inline Corpus load_corpus(const PipelineConfig& cfg) {
    torch::Tensor all;
    if (cfg.corpus.shapes) {
        all = render_shapes_corpus(stage_seed(cfg, Stage::kCorpus), cfg.corpus.shapes->count, cfg.corpus.shapes->shapes);
    } else {
        all = read_image_dir(*cfg.corpus.image_dir, cfg.autoencoder.model.image_size);
    }
    const auto n = all.size(0);
    if (n <= cfg.corpus.holdout) {
        throw InvalidArgument("corpus has " + std::to_string(n) + " images, not more than the holdout");
    }
    return {all.slice(0, 0, n - cfg.corpus.holdout), all.slice(0, n - cfg.corpus.holdout)};
}

// ---------------------------------------------------------------------------
// Model loading

inline nlohmann::json schedule_json(const ScheduleConfig& s) {
    return {{"timesteps", s.timesteps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    return make_linear_schedule(j.at("timesteps").get<int>(), j.at("beta_start").get<double>(),
                                j.at("beta_end").get<double>());
}

inline Autoencoder autoencoder_from(const Checkpoint& ckpt, const nlohmann::json& options, const std::string& prefix) {
    Autoencoder ae(AutoencoderOptions::from_json(options));
    restore_module(ckpt, *ae, prefix);
    ae->eval();
    return ae;
}

template <class Fn>
auto with_config_errors(const std::string& what, Fn fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptData(what + " checkpoint has a malformed config: " + e.what());
    }
}

inline Autoencoder load_autoencoder(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    require_kind(ckpt, "autoencoder");
    return with_config_errors("autoencoder", [&] { return autoencoder_from(ckpt, ckpt.config.at("model"), ""); });
}

inline TokenTransformer load_token_model(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    require_kind(ckpt, "token_model");
    return with_config_errors("token model", [&] {
        TokenTransformer model(TokenModelOptions::from_json(ckpt.config.at("model")));
        restore_module(ckpt, *model);
        model->eval();
        return model;
    });
}

struct UncondModel {
    EpsilonNet net{nullptr};
    NoiseSchedule schedule = make_linear_schedule();
};

inline UncondModel load_uncond(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    require_kind(ckpt, "uncond_diffusion");
    return with_config_errors("unconditional diffusion", [&] {
        UncondModel m{EpsilonNet(EpsilonNetOptions::from_json(ckpt.config.at("model"))),
                      schedule_from_json(ckpt.config.at("schedule"))};
        restore_module(ckpt, *m.net);
        m.net->eval();
        return m;
    });
}

inline Restorer load_restorer(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    require_kind(ckpt, "restorer");
    return with_config_errors("restorer", [&] {
        Restorer r{autoencoder_from(ckpt, ckpt.config.at("autoencoder"), "autoencoder."),
                   EpsilonNet(EpsilonNetOptions::from_json(ckpt.config.at("model"))),
                   schedule_from_json(ckpt.config.at("schedule"))};
        restore_module(ckpt, *r.net, "net.");
        r.net->eval();
        return r;
    });
}

// ---------------------------------------------------------------------------
// Stages

inline std::int64_t log_interval(std::int64_t steps) { return std::max<std::int64_t>(1, steps / 20); }

struct AutoencoderReport {
    double recon_mse = 0.0;  // held-out, [-1, 1] pixel units
    double codebook_usage = 0.0;
    double final_loss = 0.0;
};

inline AutoencoderReport stage_train_autoencoder(const PipelineConfig& cfg, const Logger& log = {}) {
    const auto paths = resolve_paths(cfg);
    const auto corpus = load_corpus(cfg);
    const auto seed = stage_seed(cfg, Stage::kAutoencoder);
    seed_torch(seed);
    Autoencoder ae(cfg.autoencoder.model);
    auto train_cfg = cfg.autoencoder.train;
    train_cfg.seed = seed;
    const auto every = log_interval(train_cfg.steps);
    auto result = train_autoencoder(ae, to_model_range(corpus.train), train_cfg, [&](const CurvePoint& p) {
        if (log && p.step % every == 0) {
            log("train-ae step " + std::to_string(p.step) + " loss " + format_number(p.loss));
        }
    });
    ae->eval();
    const auto holdout = to_model_range(corpus.holdout);
    AutoencoderReport report{reconstruction_mse(ae, holdout), codebook_usage(ae, holdout), result.final_loss};

    Checkpoint ckpt{"autoencoder",
                    {{"model", cfg.autoencoder.model.to_json()}, {"train", to_json(cfg)["autoencoder"]["train"]}},
                    cfg.seed,
                    {{"heldout_recon_mse", report.recon_mse},
                     {"codebook_usage", report.codebook_usage},
                     {"latent_scale", ae->scale()}}};
    store_module(ckpt, *ae);
    save_checkpoint(ckpt, paths.autoencoder());
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : result.curve) {
        rows.push_back({std::to_string(p.step), format_number(p.loss), p.extra < 0 ? "" : format_number(p.extra)});
    }
    write_csv(paths.autoencoder_curve(), {"step", "loss", "code_usage"}, rows);
    return report;
}

inline double stage_train_tokens(const PipelineConfig& cfg, const Logger& log = {}) {
    const auto paths = resolve_paths(cfg);
    auto ae = load_autoencoder(paths.autoencoder());
    const auto corpus = load_corpus(cfg);
    auto tokenize_all = [&](const torch::Tensor& images) {
        std::vector<TokenGrid> grids;
        const auto n = images.size(0);
        auto codes = ae->codes();
        for (std::int64_t start = 0; start < n; start += 64) {
            auto z = encode_images(ae, to_model_range(images.slice(0, start, std::min<std::int64_t>(start + 64, n))));
            for (std::int64_t i = 0; i < z.size(0); ++i) {
                grids.push_back(quantize(z[i], codes).first);
            }
        }
        return grids_to_sequences(grids);
    };
    auto train_seq = tokenize_all(corpus.train);
    auto holdout_seq = tokenize_all(corpus.holdout);

    const auto seed = stage_seed(cfg, Stage::kTokenModel);
    seed_torch(seed);
    TokenTransformer model(cfg.token_model.model);
    auto train_cfg = cfg.token_model.train;
    train_cfg.seed = seed;
    const auto every = log_interval(train_cfg.steps);
    auto result = train_token_model(model, train_seq, train_cfg, [&](std::int64_t step, double loss) {
        if (log && step % every == 0) {
            log("train-tokens step " + std::to_string(step) + " loss " + format_number(loss));
        }
    });
    model->eval();
    const double ppl = perplexity(model, holdout_seq);

    Checkpoint ckpt{"token_model",
                    {{"model", cfg.token_model.model.to_json()}, {"train", to_json(cfg)["token_model"]["train"]}},
                    cfg.seed,
                    {{"heldout_perplexity", ppl}}};
    store_module(ckpt, *model);
    save_checkpoint(ckpt, paths.token_model());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        rows.push_back({std::to_string(i + 1), format_number(result.losses[i])});
    }
    write_csv(paths.token_model_curve(), {"step", "loss"}, rows);
    return ppl;
}

inline std::vector<std::vector<std::string>> curve_rows(const TrainResult& result, bool with_mask_rate) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result.curve) {
        std::vector<std::string> row{std::to_string(r.step), format_number(r.loss)};
        if (with_mask_rate) {
            row.push_back(format_number(r.masking_rate));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json loss_array(const TrainResult& result) {
    auto arr = nlohmann::json::array();
    for (const auto& r : result.curve) {
        arr.push_back(r.loss);
    }
    return arr;
}

inline TrainResult stage_train_uncond(const PipelineConfig& cfg, const Logger& log = {}) {
    const auto paths = resolve_paths(cfg);
    auto ae = load_autoencoder(paths.autoencoder());
    const auto corpus = load_corpus(cfg);
    auto images = to_model_range(corpus.train);
    if (cfg.uncond_diffusion.train.mirror) {
        images = with_mirrored(images);
    }
    LatentPairs data{torch::Tensor(), encode_scaled(ae, images), torch::Tensor()};
    const auto seed = stage_seed(cfg, Stage::kUncond);
    seed_torch(seed);
    EpsilonNet net(cfg.uncond_diffusion.model);
    auto train_cfg = cfg.uncond_diffusion.train;
    train_cfg.seed = seed;
    const auto& schedule_cfg = cfg.schedule_for(cfg.uncond_diffusion);
    const auto schedule = schedule_cfg.build();
    const auto every = log_interval(train_cfg.steps);
    auto result = train_diffusion(net, schedule, data, train_cfg, [&](const TrainCurveRow& r) {
        if (log && r.step % every == 0) {
            log("train-uncond step " + std::to_string(r.step) + " loss " + format_number(r.loss));
        }
    });
    Checkpoint ckpt{"uncond_diffusion",
                    {{"model", cfg.uncond_diffusion.model.to_json()},
                     {"schedule", schedule_json(schedule_cfg)},
                     {"train", to_json(cfg.uncond_diffusion.train)}},
                    cfg.seed,
                    {{"loss_curve", loss_array(result)}}};
    store_module(ckpt, *net);
    save_checkpoint(ckpt, paths.uncond());
    write_csv(paths.uncond_curve(), {"step", "loss"}, curve_rows(result, false));
    return result;
}

/// Builds the "train" split from the training images or the "test" split
/// from the held-out images.
inline Manifest stage_synth(const PipelineConfig& cfg, const std::string& split, const Logger& log = {}) {
    if (split != "train" && split != "test") {
        throw InvalidArgument("unknown split '" + split + "' (expected train or test)");
    }
    const auto paths = resolve_paths(cfg);
    auto ae = load_autoencoder(paths.autoencoder());
    auto tokens = load_token_model(paths.token_model());
    auto uncond = load_uncond(paths.uncond());
    SynthesisModels models{ae, tokens, uncond.net, uncond.schedule};
    const auto corpus = load_corpus(cfg);
    const auto& images = split == "train" ? corpus.train : corpus.holdout;
    const auto& split_cfg = split == "train" ? cfg.artifacts.train : cfg.artifacts.test;
    const auto every = static_cast<std::size_t>(log_interval(images.size(0)));
    return build_dataset(models, images, split_cfg, stage_seed(cfg, Stage::kSynth), paths.dataset(split),
                         [&](std::size_t done, std::size_t total) {
                             if (log && (done % every == 0 || done == total)) {
                                 log("synth " + split + " " + std::to_string(done) + "/" + std::to_string(total));
                             }
                         });
}

inline TrainResult stage_train_restorer(const PipelineConfig& cfg, const Logger& log = {}) {
    const auto paths = resolve_paths(cfg);
    auto ae = load_autoencoder(paths.autoencoder());
    const auto manifest = read_manifest(paths.manifest("train"));
    if (manifest.records.empty()) {
        throw TrainingFailure("training manifest is empty");
    }
    auto pairs = load_pairs(manifest);
    if (cfg.restorer.train.mirror) {
        pairs = with_mirrored(pairs);
    }
    const auto data = encode_pairs(ae, pairs);
    const auto seed = stage_seed(cfg, Stage::kRestorer);
    seed_torch(seed);
    EpsilonNet net(cfg.restorer.model);
    auto train_cfg = cfg.restorer.train;
    train_cfg.seed = seed;
    const auto& schedule_cfg = cfg.schedule_for(cfg.restorer);
    const auto schedule = schedule_cfg.build();
    const auto every = log_interval(train_cfg.steps);

    auto snapshot = [&](const TrainResult* result) {
        Checkpoint ckpt{"restorer",
                        {{"model", cfg.restorer.model.to_json()},
                         {"autoencoder", ae->options.to_json()},
                         {"schedule", schedule_json(schedule_cfg)},
                         {"train", to_json(cfg.restorer.train)}},
                        cfg.seed,
                        {{"loss_curve", result ? loss_array(*result) : nlohmann::json::array()}}};
        store_module(ckpt, *net, "net.");
        store_module(ckpt, *ae, "autoencoder.");
        return ckpt;
    };
    auto result = train_diffusion(net, schedule, data, train_cfg, [&](const TrainCurveRow& r) {
        if (log && r.step % every == 0) {
            log("train-restorer step " + std::to_string(r.step) + " loss " + format_number(r.loss) + " mask_rate " +
                format_number(r.masking_rate));
        }
        if (train_cfg.checkpoint_every > 0 && r.step % train_cfg.checkpoint_every == 0) {
            save_checkpoint(snapshot(nullptr), paths.root / ("restorer_step" + std::to_string(r.step) + ".ckpt"));
        }
    });
    save_checkpoint(snapshot(&result), paths.restorer());
    write_csv(paths.restorer_curve(), {"step", "loss", "masking_rate"}, curve_rows(result, true));
    return result;
}

inline std::vector<std::string> report_fields(const ReportRow& r) {
    return {r.mode, r.cls, std::to_string(r.count), format_number(r.mse), format_number(r.psnr), format_number(r.ssim)};
}

inline const std::vector<std::string>& report_header() {
    static const std::vector<std::string> h = {"mode", "class", "count", "mse", "psnr", "ssim"};
    return h;
}

/// First `max_images` records of a manifest.
inline Manifest truncate_manifest(Manifest m, std::int64_t max_images) {
    if (static_cast<std::int64_t>(m.records.size()) > max_images) {
        m.records.resize(static_cast<std::size_t>(max_images));
    }
    return m;
}

struct EvalOutputs {
    std::vector<ReportRow> report;
    std::vector<ReportRow> baseline;  // artifact vs clean
    std::vector<std::vector<std::string>> sweep_scale;
    std::vector<std::vector<std::string>> sweep_steps;
};

/// Restores the test split in every configured mode and writes report.csv,
/// baseline.csv, the sweep CSVs and the restored images under eval/.
inline EvalOutputs stage_eval(const PipelineConfig& cfg, const Logger& log = {},
                              const std::optional<std::filesystem::path>& checkpoint = {},
                              const std::optional<std::filesystem::path>& manifest_path = {}) {
    const auto paths = resolve_paths(cfg);
    auto restorer = load_restorer(checkpoint.value_or(paths.restorer()));
    const auto manifest =
        truncate_manifest(read_manifest(manifest_path.value_or(paths.manifest("test"))), cfg.eval.max_images);
    if (manifest.records.empty()) {
        throw InvalidArgument("cannot evaluate an empty manifest");
    }
    const auto pairs = load_pairs(manifest);
    const auto seed = stage_seed(cfg, Stage::kEval);
    const auto out = paths.eval_dir();
    EvalOutputs result;
    std::vector<PairMetrics> scored;
    for (auto mode : cfg.eval.modes) {
        std::vector<torch::Tensor> images;
        scored = restore_and_score(restorer, pairs, mode, cfg.eval.guidance_scale, cfg.eval.n_steps, seed,
                                   cfg.eval.batch_size, &images);
        const auto dir = out / "restored" / to_string(mode);
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < images.size(); ++i) {
            write_png(dir / std::filesystem::path(manifest.records[i].artifact).filename(), images[i]);
        }
        auto rows = summarize_scores(to_string(mode), scored);
        result.report.insert(result.report.end(), rows.begin(), rows.end());
        if (log) {
            log("eval " + to_string(mode) + " psnr " + format_number(rows.back().psnr));
        }
    }
    result.baseline = summarize_scores("artifact", scored, true);

    auto overall = [](const std::vector<PairMetrics>& s) { return summarize_scores("", s).back(); };
    for (double scale : cfg.eval.sweep_scale) {
        auto row = overall(restore_and_score(restorer, pairs, RestoreMode::kGuided, scale, cfg.eval.n_steps, seed,
                                             cfg.eval.batch_size));
        result.sweep_scale.push_back(
            {format_number(scale), format_number(row.mse), format_number(row.psnr), format_number(row.ssim)});
        if (log) {
            log("sweep scale " + format_number(scale) + " psnr " + format_number(row.psnr));
        }
    }
    for (int steps : cfg.eval.sweep_steps) {
        auto row = overall(restore_and_score(restorer, pairs, RestoreMode::kGuided, cfg.eval.guidance_scale, steps,
                                             seed, cfg.eval.batch_size));
        result.sweep_steps.push_back(
            {std::to_string(steps), format_number(row.mse), format_number(row.psnr), format_number(row.ssim)});
        if (log) {
            log("sweep steps " + std::to_string(steps) + " psnr " + format_number(row.psnr));
        }
    }

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result.report) rows.push_back(report_fields(r));
    write_csv(out / "report.csv", report_header(), rows);
    rows.clear();
    for (const auto& r : result.baseline) rows.push_back(report_fields(r));
    write_csv(out / "baseline.csv", report_header(), rows);
    write_csv(out / "sweep_scale.csv", {"scale", "mse", "psnr", "ssim"}, result.sweep_scale);
    write_csv(out / "sweep_steps.csv", {"steps", "mse", "psnr", "ssim"}, result.sweep_steps);
    return result;
}

/// Human-readable plan printed by --dry-run.
inline std::string describe_plan(const PipelineConfig& cfg) {
    const auto paths = resolve_paths(cfg);
    std::ostringstream os;
    os << "resolved config:\n" << to_json(cfg).dump(2) << "\n\n";
    os << "outputs under " << paths.root.string() << ":\n"
       << "  train-ae        -> " << paths.autoencoder().filename().string() << ", "
       << paths.autoencoder_curve().filename().string() << "\n"
       << "  train-tokens    -> " << paths.token_model().filename().string() << "\n"
       << "  train-uncond    -> " << paths.uncond().filename().string() << "\n"
       << "  synth           -> data/train, data/test\n"
       << "  train-restorer  -> " << paths.restorer().filename().string() << "\n"
       << "  eval            -> eval/report.csv, eval/sweep_scale.csv, eval/sweep_steps.csv\n\n";
    os << "full-scale reference values:\n";
    for (const auto& r : reference_values()) {
        os << "  " << std::left << std::setw(36) << r.key << r.full_scale << "\n";
    }
    return os.str();
}

}  // namespace genfix
