// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

// genfix command-line driver.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "genfix/config.hpp"
#include "genfix/image_io.hpp"
#include "genfix/metrics.hpp"
#include "genfix/nn.hpp"
#include "genfix/pipeline.hpp"
#include "genfix/restorer.hpp"
#include "genfix/schedule.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace genfix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitDependency = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int report_error(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
    return code;
}

void log_line(const std::string& msg) { std::cerr << "[genfix] " << msg << std::endl; }

void emit(const json& j) { std::cout << j.dump() << std::endl; }

// JSON has no infinity; non-finite values are emitted as strings.
json metric_json(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return format_number(v);
}

// "a:b" (unit steps), "a:b:step" or a comma-separated list.
std::vector<double> parse_value_list(const std::string& spec) {
    std::vector<double> out;
    auto to_double = [](const std::string& s) {
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) {
                throw UsageError("bad number '" + s + "'");
            }
            return v;
        } catch (const std::logic_error&) {
            throw UsageError("bad number '" + s + "'");
        }
    };
    const char sep = spec.find(':') != std::string::npos ? ':' : ',';
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, sep)) {
        parts.push_back(to_double(item));
    }
    if (sep == ',') {
        if (parts.empty()) {
            throw UsageError("empty value list");
        }
        return parts;
    }
    if (parts.size() < 2 || parts.size() > 3) {
        throw UsageError("range must look like a:b or a:b:step");
    }
    const double step = parts.size() == 3 ? parts[2] : 1.0;
    if (step <= 0.0 || parts[1] < parts[0]) {
        throw UsageError("range needs a <= b and a positive step");
    }
    const auto count = static_cast<std::int64_t>(std::floor((parts[1] - parts[0]) / step + 1e-9)) + 1;
    for (std::int64_t i = 0; i < count; ++i) {
        out.push_back(parts[0] + static_cast<double>(i) * step);
    }
    return out;
}

struct ConfigArgs {
    std::string path;
    bool dry_run = false;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a) {
    cmd->add_option("-c,--config", a.path, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--dry-run", a.dry_run, "validate the config and print the resolved plan without running");
}

// Returns the config, or nullopt after printing the plan for --dry-run.
std::optional<PipelineConfig> load_or_plan(const ConfigArgs& a) {
    auto cfg = load_config(a.path);
    if (a.dry_run) {
        std::cout << describe_plan(cfg);
        return std::nullopt;
    }
    return cfg;
}

int cmd_inspect_schedule(const std::optional<std::string>& config, int timesteps, double beta_start, double beta_end,
                         const std::vector<int>& steps, bool all) {
    ScheduleConfig sc{timesteps, beta_start, beta_end};
    if (config) {
        sc = load_config(*config).schedule;
    }
    const auto s = sc.build();
    std::vector<int> ts = steps;
    if (all) {
        ts.clear();
        for (int t = 0; t <= s.steps(); ++t) ts.push_back(t);
    } else if (ts.empty()) {
        ts = {0, 1, s.steps() / 4, s.steps() / 2, 3 * s.steps() / 4, s.steps()};
    }
    std::cout << "t,beta,alpha,alpha_bar,sqrt_alpha_bar,sqrt_one_minus_alpha_bar\n";
    for (int t : ts) {
        s.check_step(t, true);
        const double ab = s.alpha_bar(t);
        std::cout << t << "," << (t == 0 ? "" : format_number(s.beta(t))) << ","
                  << (t == 0 ? "" : format_number(s.alpha(t))) << "," << format_number(ab) << ","
                  << format_number(std::sqrt(ab)) << "," << format_number(std::sqrt(1.0 - ab)) << "\n";
    }
    return kExitOk;
}

int cmd_restore(const std::string& checkpoint, const std::vector<std::string>& inputs, const std::string& mode_name,
                const std::optional<std::string>& cls_name, double scale, int steps, std::uint64_t seed) {
    const auto mode = [&] {
        try {
            return restore_mode_from_string(mode_name);
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
    }();
    ArtifactClass cls = ArtifactClass::kMask;
    if (mode == RestoreMode::kBlind) {
        if (cls_name) {
            log_line("warning: --class is ignored in blind mode");
        }
    } else {
        if (!cls_name) {
            throw UsageError("--mode " + mode_name + " requires --class");
        }
        try {
            cls = artifact_class_from_string(*cls_name);
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
    }
    auto restorer = load_restorer(checkpoint);
    std::vector<torch::Tensor> images;
    for (const auto& in : inputs) {
        images.push_back(to_model_range(read_png(in)));
        restorer.autoencoder->check_image(images.back().unsqueeze(0));
    }
    auto labels = torch::full({static_cast<std::int64_t>(images.size())}, class_index(cls), torch::kInt64);
    if (mode != RestoreMode::kBlind && cls == ArtifactClass::kMask) {
        throw InvalidArgument("non-blind and guided restoration need a real artifact class");
    }
    auto restored = restore_images(restorer, torch::stack(images), mode, labels, scale, steps, seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        fs::path in(inputs[i]);
        auto out = in.parent_path() / (in.stem().string() + ".restored-" + to_string(mode) + ".png");
        write_png(out, to_unit_range(restored[static_cast<std::int64_t>(i)]));
        emit({{"input", in.string()}, {"output", out.string()}, {"mode", to_string(mode)}});
    }
    return kExitOk;
}

int cmd_metrics(const std::string& a, const std::string& b) {
    auto x = read_png(a);
    auto y = read_png(b);
    if (!x.sizes().equals(y.sizes())) {
        throw InvalidArgument("images differ in shape");
    }
    auto v = compare_images(x, y);
    emit({{"a", a}, {"b", b}, {"mse", v.mse}, {"psnr", metric_json(v.psnr)}, {"ssim", v.ssim}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    use_deterministic_math();

    CLI::App app{"genfix: generative-artifact restoration with latent diffusion"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // inspect-schedule
    auto* inspect = app.add_subcommand("inspect-schedule", "print noise-schedule values as CSV");
    std::optional<std::string> inspect_config;
    int timesteps = kDefaultTimesteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;
    std::vector<int> inspect_steps;
    bool inspect_all = false;
    inspect->add_option("-c,--config", inspect_config, "take the schedule from a pipeline config");
    inspect->add_option("--timesteps", timesteps, "schedule length T");
    inspect->add_option("--beta-start", beta_start, "beta at t = 1");
    inspect->add_option("--beta-end", beta_end, "beta at t = T");
    inspect->add_option("--steps", inspect_steps, "step indices to print")->delimiter(',');
    inspect->add_flag("--all", inspect_all, "print every step 0..T");

    // training stages and synthesis
    ConfigArgs ae_args, tok_args, unc_args, res_args, synth_args, eval_args, run_args;
    auto* train_ae = app.add_subcommand("train-ae", "train the vector-quantized autoencoder");
    add_config_args(train_ae, ae_args);
    auto* train_tokens = app.add_subcommand("train-tokens", "train the autoregressive token model");
    add_config_args(train_tokens, tok_args);
    auto* train_uncond = app.add_subcommand("train-uncond", "train the unconditional latent diffusion model");
    add_config_args(train_uncond, unc_args);
    auto* synth = app.add_subcommand("synth", "synthesize artifact/clean pairs with a manifest");
    add_config_args(synth, synth_args);
    std::string synth_split = "both";
    synth->add_option("--split", synth_split, "train, test or both")
        ->check(CLI::IsMember({"train", "test", "both"}));
    auto* train_restorer = app.add_subcommand("train-restorer", "train the class-conditioned restorer");
    add_config_args(train_restorer, res_args);

    // restore
    auto* restore = app.add_subcommand("restore", "restore artifact images");
    std::string restore_ckpt;
    std::vector<std::string> restore_inputs;
    std::string restore_mode = "guided";
    std::optional<std::string> restore_class;
    double restore_scale = kDefaultGuidanceScale;
    int restore_steps = kDefaultRestoreSteps;
    std::uint64_t restore_seed = 0;
    restore->add_option("--checkpoint", restore_ckpt, "restorer checkpoint")->required();
    restore->add_option("inputs", restore_inputs, "artifact PNG images")->required()->check(CLI::ExistingFile);
    restore->add_option("--mode", restore_mode, "blind, nonblind or guided");
    restore->add_option("--class", restore_class, "artifact class for nonblind and guided modes");
    restore->add_option("--scale", restore_scale, "guidance scale")->check(CLI::NonNegativeNumber);
    restore->add_option("--steps", restore_steps, "sampling steps")->check(CLI::PositiveNumber);
    restore->add_option("--seed", restore_seed, "noise seed");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate the restorer on the test split");
    add_config_args(eval, eval_args);
    std::optional<std::string> eval_ckpt, eval_manifest, eval_sweep_scale, eval_sweep_steps;
    std::vector<std::string> eval_modes;
    eval->add_option("--checkpoint", eval_ckpt, "restorer checkpoint (default: from the config)");
    eval->add_option("--manifest", eval_manifest, "test manifest (default: from the config)");
    eval->add_option("--modes", eval_modes, "modes to report")->delimiter(',');
    eval->add_option("--sweep-scale", eval_sweep_scale, "guidance scales, a:b[:step] or a list");
    eval->add_option("--sweep-steps", eval_sweep_steps, "sampling step counts, a:b[:step] or a list");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "compare two PNG images");
    std::string metric_a, metric_b;
    metrics->add_option("a", metric_a, "first image")->required()->check(CLI::ExistingFile);
    metrics->add_option("b", metric_b, "second image")->required()->check(CLI::ExistingFile);

    // run
    auto* run = app.add_subcommand("run", "run every stage in order");
    add_config_args(run, run_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), kExitUsage);
    }

    try {
        if (*inspect) {
            return cmd_inspect_schedule(inspect_config, timesteps, beta_start, beta_end, inspect_steps, inspect_all);
        }
        if (*metrics) {
            return cmd_metrics(metric_a, metric_b);
        }
        if (*restore) {
            return cmd_restore(restore_ckpt, restore_inputs, restore_mode, restore_class, restore_scale,
                               restore_steps, restore_seed);
        }
        auto train_ae_stage = [](const PipelineConfig& cfg) {
            auto r = stage_train_autoencoder(cfg, log_line);
            const auto paths = resolve_paths(cfg);
            emit({{"stage", "train-ae"},
                  {"checkpoint", paths.autoencoder().string()},
                  {"curve", paths.autoencoder_curve().string()},
                  {"heldout_recon_mse", r.recon_mse},
                  {"codebook_usage", r.codebook_usage}});
        };
        auto train_tokens_stage = [](const PipelineConfig& cfg) {
            auto ppl = stage_train_tokens(cfg, log_line);
            emit({{"stage", "train-tokens"},
                  {"checkpoint", resolve_paths(cfg).token_model().string()},
                  {"heldout_perplexity", ppl}});
        };
        auto train_uncond_stage = [](const PipelineConfig& cfg) {
            auto r = stage_train_uncond(cfg, log_line);
            emit({{"stage", "train-uncond"},
                  {"checkpoint", resolve_paths(cfg).uncond().string()},
                  {"final_loss", r.curve.back().loss}});
        };
        auto synth_stage = [](const PipelineConfig& cfg, const std::string& split) {
            for (const std::string s : {"train", "test"}) {
                if (split != "both" && split != s) continue;
                auto m = stage_synth(cfg, s, log_line);
                const auto path = resolve_paths(cfg).manifest(s);
                emit({{"stage", "synth"},
                      {"split", s},
                      {"manifest", path.string()},
                      {"count", m.records.size()},
                      {"digest", file_digest(path)}});
            }
        };
        auto train_restorer_stage = [](const PipelineConfig& cfg) {
            auto r = stage_train_restorer(cfg, log_line);
            const auto n = r.curve.size();
            const auto w = std::min<std::size_t>(100, n);
            emit({{"stage", "train-restorer"},
                  {"checkpoint", resolve_paths(cfg).restorer().string()},
                  {"smoothed_start", window_mean(r.curve, 0, w)},
                  {"smoothed_end", window_mean(r.curve, n - w, n)},
                  {"masking_rate", r.curve.back().masking_rate}});
        };
        auto eval_stage = [&](const PipelineConfig& cfg) {
            auto out = stage_eval(cfg, log_line, eval_ckpt ? std::optional<fs::path>(*eval_ckpt) : std::nullopt,
                                  eval_manifest ? std::optional<fs::path>(*eval_manifest) : std::nullopt);
            emit({{"stage", "eval"},
                  {"report", (resolve_paths(cfg).eval_dir() / "report.csv").string()},
                  {"rows", out.report.size()}});
        };

        if (*inspect || *metrics || *restore) {
            return kExitOk;
        }
        if (*train_ae) {
            if (auto cfg = load_or_plan(ae_args)) train_ae_stage(*cfg);
        } else if (*train_tokens) {
            if (auto cfg = load_or_plan(tok_args)) train_tokens_stage(*cfg);
        } else if (*train_uncond) {
            if (auto cfg = load_or_plan(unc_args)) train_uncond_stage(*cfg);
        } else if (*synth) {
            if (auto cfg = load_or_plan(synth_args)) synth_stage(*cfg, synth_split);
        } else if (*train_restorer) {
            if (auto cfg = load_or_plan(res_args)) train_restorer_stage(*cfg);
        } else if (*eval) {
            auto cfg = load_config(eval_args.path);
            if (!eval_modes.empty()) {
                cfg.eval.modes.clear();
                for (const auto& m : eval_modes) {
                    try {
                        cfg.eval.modes.push_back(restore_mode_from_string(m));
                    } catch (const InvalidArgument& e) {
                        throw UsageError(e.what());
                    }
                }
            }
            if (eval_sweep_scale) {
                cfg.eval.sweep_scale = parse_value_list(*eval_sweep_scale);
            }
            if (eval_sweep_steps) {
                cfg.eval.sweep_steps.clear();
                for (double v : parse_value_list(*eval_sweep_steps)) {
                    if (v < 1.0 || v != std::floor(v)) {
                        throw UsageError("--sweep-steps needs positive integers");
                    }
                    cfg.eval.sweep_steps.push_back(static_cast<int>(v));
                }
            }
            if (eval_args.dry_run) {
                std::cout << describe_plan(cfg);
            } else {
                eval_stage(cfg);
            }
        } else if (*run) {
            if (auto cfg = load_or_plan(run_args)) {
                train_ae_stage(*cfg);
                train_tokens_stage(*cfg);
                train_uncond_stage(*cfg);
                synth_stage(*cfg, "both");
                train_restorer_stage(*cfg);
                eval_stage(*cfg);
            }
        }
        return kExitOk;
    } catch (const UsageError& e) {
        return report_error("usage", e.what(), kExitUsage);
    } catch (const DependencyError& e) {
        return report_error("dependency", e.what(), kExitDependency);
    } catch (const ConfigError& e) {
        return report_error("config", e.what(), kExitData);
    } catch (const CorruptData& e) {
        return report_error("corrupt-data", e.what(), kExitData);
    } catch (const InvalidArgument& e) {
        return report_error("invalid-argument", e.what(), kExitUsage);
    } catch (const TrainingFailure& e) {
        return report_error("training", e.what(), kExitFailure);
    } catch (const DatasetBuildError& e) {
        return report_error("dataset-build", e.what(), kExitFailure);
    } catch (const std::exception& e) {
        return report_error("runtime", e.what(), kExitFailure);
    }
}
