// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cstdio>
#include <fstream>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "genfix/image_io.hpp"

using genfix::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && GENFIX_OUT='" + dir.string() + "' '" GENFIX_CLI "' " +
                            args + " 2>'" + err_path.string() + "'";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return r;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
}

nlohmann::json last_error(const RunResult& r) {
    std::istringstream is(r.err);
    std::string line;
    nlohmann::json found;
    while (std::getline(is, line)) {
        if (!line.empty() && line.front() == '{') {
            found = nlohmann::json::parse(line);
        }
    }
    return found;
}

std::size_t data_rows(const std::string& csv) {
    std::size_t lines = 0;
    for (char c : csv) {
        lines += c == '\n';
    }
    return lines == 0 ? 0 : lines - 1;
}

std::string smoke_config() { return std::string(GENFIX_SOURCE_DIR) + "/configs/smoke.json"; }

}  // namespace

TEST(Cli, InspectScheduleCsv) {
    TempDir dir("cli-inspect");
    auto r = run_cli("inspect-schedule --steps 0,1,1000", dir.path());
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream is(r.out);
    std::string header, t0, t1, tT;
    std::getline(is, header);
    std::getline(is, t0);
    std::getline(is, t1);
    std::getline(is, tT);
    EXPECT_EQ(header, "t,beta,alpha,alpha_bar,sqrt_alpha_bar,sqrt_one_minus_alpha_bar");
    EXPECT_EQ(t0.rfind("0,,,1,1,0", 0), 0u) << t0;
    EXPECT_EQ(t1.rfind("1,0.0001,0.9999,0.9999,", 0), 0u) << t1;
    EXPECT_EQ(tT.rfind("1000,0.02,0.98,", 0), 0u) << tT;

    auto bad = run_cli("inspect-schedule --steps 1001", dir.path());
    EXPECT_EQ(bad.code, 64);
    EXPECT_EQ(last_error(bad).value("error", ""), "invalid-argument");
}

TEST(Cli, UsageErrors) {
    TempDir dir("cli-usage");
    EXPECT_EQ(run_cli("", dir.path()).code, 64);
    EXPECT_EQ(run_cli("no-such-command", dir.path()).code, 64);
    auto r = run_cli("train-ae", dir.path());
    EXPECT_EQ(r.code, 64);
    EXPECT_EQ(last_error(r).value("error", ""), "usage");
    EXPECT_EQ(run_cli("eval -c " + smoke_config() + " --sweep-steps 0,4 --dry-run", dir.path()).code, 64);
    EXPECT_EQ(run_cli("eval -c " + smoke_config() + " --modes semi --dry-run", dir.path()).code, 64);
}

TEST(Cli, ConfigErrors) {
    TempDir dir("cli-config");
    {
        std::ofstream os(dir / "bad.json");
        os << R"({"sed": 3})";
    }
    auto r = run_cli("train-ae -c bad.json", dir.path());
    EXPECT_EQ(r.code, 65);
    EXPECT_EQ(last_error(r).value("error", ""), "config");
    // a missing file is rejected while parsing arguments
    EXPECT_EQ(run_cli("train-ae -c absent.json", dir.path()).code, 64);
}

TEST(Cli, DryRunPrintsPlanWithoutOutputs) {
    TempDir dir("cli-dry");
    auto r = run_cli("run -c " + smoke_config() + " --dry-run", dir.path());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("train-ae"), std::string::npos);
    EXPECT_NE(r.out.find("eval/sweep_scale.csv"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "smoke"));
}

TEST(Cli, MissingUpstreamCheckpointIsDependencyError) {
    TempDir dir("cli-dep");
    auto r = run_cli("train-restorer -c " + smoke_config(), dir.path());
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(last_error(r).value("error", ""), "dependency");
}

TEST(Cli, RestoreNeedsClassOutsideBlindMode) {
    TempDir dir("cli-restore");
    genfix::write_png(dir / "in.png", torch::zeros({3, 32, 32}));
    auto r = run_cli("restore --checkpoint none.ckpt --mode nonblind in.png", dir.path());
    EXPECT_EQ(r.code, 64);
    EXPECT_EQ(last_error(r).value("error", ""), "usage");
    EXPECT_EQ(run_cli("restore --checkpoint none.ckpt --mode guided --class BLUR in.png", dir.path()).code, 64);
    EXPECT_EQ(run_cli("restore --checkpoint none.ckpt --mode blind in.png", dir.path()).code, 2);
}

TEST(Cli, MetricsJson) {
    TempDir dir("cli-metrics");
    genfix::write_png(dir / "a.png", torch::zeros({3, 16, 16}));
    genfix::write_png(dir / "b.png", torch::full({3, 16, 16}, 0.2));
    auto same = run_cli("metrics a.png a.png", dir.path());
    ASSERT_EQ(same.code, 0) << same.err;
    auto j = nlohmann::json::parse(same.out);
    EXPECT_EQ(j.at("mse").get<double>(), 0.0);
    EXPECT_EQ(j.at("psnr"), "inf");
    EXPECT_EQ(j.at("ssim").get<double>(), 1.0);

    auto diff = run_cli("metrics a.png b.png", dir.path());
    ASSERT_EQ(diff.code, 0) << diff.err;
    auto k = nlohmann::json::parse(diff.out);
    const double q = 51.0 / 255.0;
    EXPECT_NEAR(k.at("mse").get<double>(), q * q, 1e-7);
    EXPECT_NEAR(k.at("psnr").get<double>(), -10.0 * std::log10(q * q), 1e-6);

    genfix::write_png(dir / "c.png", torch::zeros({3, 8, 16}));
    EXPECT_EQ(run_cli("metrics a.png c.png", dir.path()).code, 64);
    EXPECT_EQ(run_cli("metrics a.png absent.png", dir.path()).code, 64);
}

TEST(Cli, SmokePipelineAndSweeps) {
    TempDir dir("cli-smoke");
    auto r = run_cli("run -c " + smoke_config(), dir.path());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto out = dir / "smoke";
    for (const char* f : {"autoencoder.ckpt", "token_model.ckpt", "uncond.ckpt", "restorer.ckpt",
                          "data/train/manifest.jsonl", "data/test/manifest.jsonl", "restorer_curve.csv",
                          "eval/report.csv"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }

    auto sweep = run_cli("eval -c " + smoke_config() + " --modes nonblind --sweep-scale 1:6 --sweep-steps 5,10,20,30,50",
                         dir.path());
    ASSERT_EQ(sweep.code, 0) << sweep.err;
    EXPECT_EQ(data_rows(slurp(out / "eval/sweep_scale.csv")), 6u);
    EXPECT_EQ(data_rows(slurp(out / "eval/sweep_steps.csv")), 5u);

    // restore one test artifact in each mode
    const auto test_dir = out / "data/test";
    fs::path artifact;
    for (const auto& e : fs::recursive_directory_iterator(test_dir)) {
        if (e.path().extension() == ".png" && e.path().string().find("artifact") != std::string::npos) {
            artifact = e.path();
            break;
        }
    }
    ASSERT_FALSE(artifact.empty());
    fs::copy_file(artifact, dir / "x.png");
    auto blind = run_cli("restore --checkpoint smoke/restorer.ckpt --mode blind --steps 3 x.png", dir.path());
    ASSERT_EQ(blind.code, 0) << blind.err;
    EXPECT_TRUE(fs::exists(dir / "x.restored-blind.png"));
    auto guided = run_cli("restore --checkpoint smoke/restorer.ckpt --class DDIM_SCALE --steps 3 x.png", dir.path());
    ASSERT_EQ(guided.code, 0) << guided.err;
    EXPECT_TRUE(fs::exists(dir / "x.restored-guided.png"));
}
