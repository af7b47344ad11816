// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/image_io.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/scene_io.hpp"

#include "oracle_values.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace gss {
namespace {

namespace fs = std::filesystem;

const fs::path kDataDir = GSSTREAM_TEST_DATA_DIR;

/// Runs the CLI with `args`; returns its exit status. Output goes to `log`.
int run_cli(const std::string &args, const fs::path &log) {
    const std::string cmd =
        std::string("\"") + GSSTREAM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) {
        return -1;
    }
    return WEXITSTATUS(status);
}

std::string read_file(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

/// A small three-frame moving scene shared by the tests below.
class CliTest : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        root_ = test::scratch_dir("cli");
        frames_ = root_ / "frames";
        const int rc = run_cli("synth --blobs 3 --frames 3 --width 32 --height 32 --max-speed 0.02 "
                               "--seed 5 --out " + q(frames_),
                               root_ / "synth.log");
        ASSERT_EQ(rc, 0) << read_file(root_ / "synth.log");
        std::ofstream cfg(root_ / "small.cfg");
        cfg << "# tiny fit budget for tests\n"
               "fit.n_gaussians = 4\n"
               "fit.iterations = 20\n"
               "fit.decode_iterations = 10\n";
    }

    static fs::path root_;
    static fs::path frames_;
};

fs::path CliTest::root_;
fs::path CliTest::frames_;

TEST_F(CliTest, SynthWritesFramesAndScenes) {
    EXPECT_EQ(list_frames(frames_).size(), 3u);
    EXPECT_TRUE(fs::exists(frames_ / "manifest.json"));
    EXPECT_TRUE(fs::exists(frames_ / "scene_0002.json"));
}

TEST_F(CliTest, RenderEmptySceneIsBlack) {
    const fs::path dir = root_ / "render_empty";
    fs::create_directories(dir);
    save_scene(dir / "empty.json", Scene{});
    ASSERT_EQ(run_cli("render " + q(dir / "empty.json") + " --out " + q(dir / "out"),
                      dir / "log"),
              0)
        << read_file(dir / "log");
    const ImageBuffer img = decode_ppm(read_file(dir / "out" / "rgb.ppm"));
    EXPECT_EQ(img.width, 256);
    EXPECT_EQ(img.height, 144);
    for (double v : img.rgb) {
        ASSERT_EQ(v, 0.0);
    }
    EXPECT_TRUE(fs::exists(dir / "out" / "depth.gsdp"));
    EXPECT_TRUE(fs::exists(dir / "out" / "alpha.gsdp"));
}

TEST_F(CliTest, RenderOutsideDeformationWindowExitsThree) {
    const fs::path dir = root_ / "render_window";
    EXPECT_EQ(run_cli("render " + q(frames_ / "scene_0000.json") + " --time 5 --out " + q(dir),
                      root_ / "window.log"),
              3);
}

TEST_F(CliTest, RenderIsThreadInvariant) {
    const fs::path dir = root_ / "render_threads";
    const std::string scene = q(frames_ / "scene_0001.json");
    ASSERT_EQ(run_cli("render " + scene + " --threads 1 --out " + q(dir / "a"), dir.string() + ".log"), 0);
    ASSERT_EQ(run_cli("render " + scene + " --threads 4 --out " + q(dir / "b"), dir.string() + ".log"), 0);
    EXPECT_EQ(read_file(dir / "a" / "rgb.ppm"), read_file(dir / "b" / "rgb.ppm"));
    EXPECT_EQ(read_file(dir / "a" / "depth.gsdp"), read_file(dir / "b" / "depth.gsdp"));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    const fs::path empty = root_ / "empty_dir";
    fs::create_directories(empty);
    EXPECT_EQ(run_cli("fit " + q(empty) + " --out " + q(root_ / "x"), root_ / "u1.log"), 2);
    EXPECT_EQ(run_cli("no-such-command", root_ / "u2.log"), 2);
    EXPECT_EQ(run_cli("metrics " + q(frames_) + " " + q(kDataDir / "noise_pair" / "clean") +
                          " --out " + q(root_ / "mm"),
                      root_ / "u3.log"),
              2);
}

TEST_F(CliTest, MetricsMatchOraclePsnr) {
    const fs::path out = root_ / "metrics_noise";
    ASSERT_EQ(run_cli("metrics " + q(kDataDir / "noise_pair" / "noisy") + " " +
                          q(kDataDir / "noise_pair" / "clean") + " --out " + q(out),
                      root_ / "m.log"),
              0)
        << read_file(root_ / "m.log");
    const Json summary = load_json(out / "metrics_summary.json");
    EXPECT_NEAR(summary.at("mean_psnr").get<double>(), oracle::kNoisePairPsnr, 1e-9);
    EXPECT_NEAR(summary.at("mean_psnr").get<double>(), 20.0, 0.5);
    std::ifstream lines(out / "metrics.jsonl");
    std::string line;
    ASSERT_TRUE(std::getline(lines, line));
    const Json row = parse_json(line);
    EXPECT_TRUE(row.at("depth_loss").is_null());
}

TEST_F(CliTest, MetricsOfIdenticalDirsReportsInfinitePsnr) {
    const fs::path out = root_ / "metrics_same";
    ASSERT_EQ(run_cli("metrics " + q(frames_) + " " + q(frames_) + " --out " + q(out),
                      root_ / "ms.log"),
              0);
    std::ifstream lines(out / "metrics.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const Json row = parse_json(line);
        EXPECT_EQ(row.at("psnr"), "inf");
        EXPECT_EQ(row.at("ssim").get<double>(), 1.0);
        EXPECT_EQ(row.at("depth_loss").get<double>(), 0.0);
        ++n;
    }
    EXPECT_EQ(n, 3);
}

TEST_F(CliTest, FitWritesArtefactsAndIsReproducible) {
    const std::string base = "--config " + q(root_ / "small.cfg") + " --seed 7 fit " + q(frames_);
    ASSERT_EQ(run_cli(base + " --out " + q(root_ / "fit_a"), root_ / "fa.log"), 0)
        << read_file(root_ / "fa.log");
    ASSERT_EQ(run_cli(base + " --out " + q(root_ / "fit_b"), root_ / "fb.log"), 0);
    const fs::path a = root_ / "fit_a";
    for (const char *f : {"loss_curve.csv", "summary.json", "fixture.json", "scene_0000.json",
                          "scene_0002.json"}) {
        EXPECT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(read_file(a / f), read_file(root_ / "fit_b" / f)) << f;
    }
    std::ifstream curve(a / "loss_curve.csv");
    std::string header;
    std::getline(curve, header);
    EXPECT_EQ(header, "iter,total,mse,depth,mask");
    const Json summary = load_json(a / "summary.json");
    EXPECT_EQ(summary.at("frames").get<int>(), 3);
    EXPECT_FALSE(summary.at("partial").get<bool>());
    EXPECT_EQ(summary.at("seed").get<int>(), 7);
    EXPECT_EQ(summary.at("stages").size(), 5u); // three encodes, two decodes
}

TEST_F(CliTest, StreamResumeMatchesUninterruptedRun) {
    const fs::path fixture = root_ / "fit_a" / "fixture.json";
    if (!fs::exists(fixture)) {
        ASSERT_EQ(run_cli("--config " + q(root_ / "small.cfg") + " --seed 7 fit " + q(frames_) +
                              " --out " + q(root_ / "fit_a"),
                          root_ / "fa.log"),
                  0);
    }
    const std::string base = "--predictor fixture stream " + q(frames_) + " --fixture " + q(fixture);
    ASSERT_EQ(run_cli(base + " --out " + q(root_ / "full"), root_ / "s1.log"), 0)
        << read_file(root_ / "s1.log");
    ASSERT_EQ(run_cli(base + " --frames 2 --out " + q(root_ / "part"), root_ / "s2.log"), 0)
        << read_file(root_ / "s2.log");
    ASSERT_EQ(run_cli(base + " --resume " + q(root_ / "part" / "checkpoint.json") + " --out " +
                          q(root_ / "rest"),
                      root_ / "s3.log"),
              0)
        << read_file(root_ / "s3.log");
    EXPECT_EQ(read_file(root_ / "full" / "checkpoint.json"),
              read_file(root_ / "rest" / "checkpoint.json"));
    int compared = 0;
    for (const auto &entry : fs::directory_iterator(root_ / "rest" / "renders")) {
        const fs::path twin = root_ / "full" / "renders" / entry.path().filename();
        ASSERT_TRUE(fs::exists(twin)) << twin;
        EXPECT_EQ(read_file(entry.path()), read_file(twin)) << entry.path().filename();
        ++compared;
    }
    EXPECT_GT(compared, 0);
    std::ifstream telemetry(root_ / "full" / "telemetry.jsonl");
    std::string line;
    int rows = 0;
    while (std::getline(telemetry, line)) {
        EXPECT_TRUE(parse_json(line).contains("population"));
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

} // namespace
} // namespace gss
