// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: render, fit, stream, synth and metrics.

#include "gsstream/config.hpp"
#include "gsstream/errors.hpp"
#include "gsstream/fit_predictor.hpp"
#include "gsstream/image_io.hpp"
#include "gsstream/losses.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/rasterizer.hpp"
#include "gsstream/scene_io.hpp"
#include "gsstream/stream_engine.hpp"
#include "gsstream/synth.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gss;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRender = 3;
constexpr int kExitDiverged = 4;

/// Input or configuration problem detected by the CLI itself.
class UsageError : public Error {
  public:
    using Error::Error;
};

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool strict = false;
    bool deterministic_init = false;
    std::optional<std::string> predictor;
    std::optional<int> threads;
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("gsstream");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char *env = std::getenv("GSPLAT_LOG")) {
        const std::string level = env;
        if (level == "error") {
            spdlog::set_level(spdlog::level::err);
        } else if (level == "warn") {
            spdlog::set_level(spdlog::level::warn);
        } else if (level == "info") {
            spdlog::set_level(spdlog::level::info);
        } else if (level == "debug") {
            spdlog::set_level(spdlog::level::debug);
        } else {
            spdlog::warn("ignoring GSPLAT_LOG='{}' (expected error, warn, info or debug)", level);
        }
    }
}

/// Config file first, then command-line overrides.
RunConfig resolve_config(const GlobalOptions &opts) {
    RunConfig cfg;
    if (!opts.config.empty()) {
        cfg.apply(load_config(opts.config));
    }
    if (opts.seed) {
        cfg.seed = *opts.seed;
    }
    if (opts.out) {
        cfg.out = *opts.out;
    }
    if (opts.strict) {
        cfg.stream.strict = true;
    }
    if (opts.deterministic_init) {
        cfg.fit.deterministic_init = true;
    }
    if (opts.predictor) {
        cfg.predictor = *opts.predictor;
    }
    if (opts.threads) {
        if (*opts.threads < 0) {
            throw UsageError("--threads must be >= 0");
        }
        cfg.threads = *opts.threads;
    }
    cfg.stream.raster.threads = cfg.threads;
    cfg.fit.raster = cfg.stream.raster;
    cfg.fit.seed = cfg.seed;
    cfg.fit.validate();
    return cfg;
}

/// JSON number, or the string "inf" for an infinite PSNR.
Json psnr_json(double value) {
    if (std::isinf(value)) {
        return value > 0 ? Json("inf") : Json("-inf");
    }
    return Json(value);
}

std::vector<ImageBuffer> load_frames(const fs::path &dir) {
    const auto files = list_frames(dir);
    if (files.empty()) {
        throw UsageError(fmt::format("no frame_NNNN.ppm files in {}", dir.string()));
    }
    std::vector<ImageBuffer> frames;
    frames.reserve(files.size());
    for (const auto &f : files) {
        frames.push_back(load_frame(f));
    }
    for (const auto &f : frames) {
        if (f.width != frames.front().width || f.height != frames.front().height) {
            throw UsageError("frames differ in size");
        }
    }
    return frames;
}

// ---------------------------------------------------------------- render

int cmd_render(const RunConfig &cfg, const std::string &scene_path, std::optional<double> time) {
    const Scene scene = load_scene(scene_path);
    cfg.camera.validate();
    const double t = time.value_or(scene.frame_time);
    fs::create_directories(cfg.out);
    const ImageBuffer img = render_at(scene.gaussians, t, cfg.camera, cfg.stream.raster);
    write_render(cfg.out, img);
    spdlog::info("rendered {} Gaussians at t={} into {}", scene.gaussians.size(), t,
                 cfg.out.string());
    return kExitOk;
}

// ---------------------------------------------------------------- fit

struct CurveWriter {
    std::ofstream csv;
    int next_iter = 0;

    explicit CurveWriter(const fs::path &path) : csv(path) {
        csv << "iter,total,mse,depth,mask\n";
    }
    /// Appends a report's curve; iterations continue across stages.
    std::pair<int, int> append(const FitReport &report) {
        const int first = next_iter;
        for (const auto &it : report.curve) {
            csv << fmt::format("{},{},{},{},{}\n", next_iter + it.iter, it.loss.total,
                               it.loss.mse, it.loss.depth, it.loss.mask);
        }
        if (!report.curve.empty()) {
            next_iter += report.curve.back().iter + 1;
        }
        return {first, next_iter - 1};
    }
};

Json stage_json(const std::string &stage, std::uint32_t frame, const FitReport &r,
                std::pair<int, int> range) {
    return Json{{"stage", stage},
                {"frame", frame},
                {"first_iter", range.first},
                {"last_iter", range.second},
                {"initial_loss", r.curve.empty() ? 0.0 : r.curve.front().loss.total},
                {"final_loss", r.curve.empty() ? 0.0 : r.curve.back().loss.total},
                {"depth_weight", r.mean_depth_weight},
                {"evaluations", r.evaluations},
                {"stop_reason", r.stop_reason}};
}

int cmd_fit(const RunConfig &cfg, const std::string &frames_dir) {
    const auto frames = load_frames(frames_dir);
    const OrthoCamera camera = cfg.camera_for(frames.front().width, frames.front().height);
    fs::create_directories(cfg.out);

    FitPredictor predictor(camera, cfg.fit);
    CurveWriter curve(cfg.out / "loss_curve.csv");
    Json stages = Json::array();
    Json per_frame = Json::array();
    std::vector<FixturePredictor::Entry> entries;
    std::optional<EncodeResult> prev;
    std::vector<double> psnrs;

    const auto write_summary = [&](bool partial, const std::string &error) {
        Json summary{{"frames", frames.size()},
                     {"completed_frames", entries.size()},
                     {"partial", partial},
                     {"seed", cfg.seed},
                     {"deterministic_init", cfg.fit.deterministic_init},
                     {"n_gaussians", entries.empty() ? 0 : entries.front().scene.gaussians.size()},
                     {"per_frame", per_frame},
                     {"stages", stages}};
        if (!psnrs.empty()) {
            double mean = 0.0;
            for (double p : psnrs) {
                mean += p;
            }
            mean /= static_cast<double>(psnrs.size());
            summary["psnr"] = psnr_json(mean);
            summary["min_psnr"] = psnr_json(*std::min_element(psnrs.begin(), psnrs.end()));
        }
        if (!error.empty()) {
            summary["error"] = error;
        }
        save_json(cfg.out / "summary.json", summary, 2);
    };

    try {
        for (std::uint32_t k = 0; k < frames.size(); ++k) {
            EncodeResult enc = predictor.encode(frames[k], k);
            stages.push_back(stage_json("encode", k, predictor.last_encode_report(),
                                        curve.append(predictor.last_encode_report())));
            FixturePredictor::Entry entry;
            entry.scene.frame_time = k;
            for (std::size_t i = 0; i < enc.gaussians.size(); ++i) {
                entry.scene.gaussians.push_back(
                    {enc.gaussians[i], identity_deformation(k, cfg.stream.init_gamma0),
                     enc.ids[i]});
            }
            const double p = psnr(render(enc.gaussians, camera, cfg.fit.raster), frames[k]);
            psnrs.push_back(p);
            per_frame.push_back(Json{{"frame", k}, {"psnr", psnr_json(p)}});

            if (prev) {
                const PredictorOutput out = predictor.decode(prev->state, enc.state);
                stages.push_back(stage_json("decode", k, predictor.last_decode_report(),
                                            curve.append(predictor.last_decode_report())));
                entry.forward = out.forward_deform;
                for (std::size_t i = 0; i < out.current_ids.size(); ++i) {
                    entry.backward.emplace(out.current_ids[i], out.backward_deform[i]);
                }
            }
            save_scene(cfg.out / fmt::format("scene_{:04d}.json", k), entry.scene);
            entries.push_back(std::move(entry));
            prev = std::move(enc);
            spdlog::info("frame {}: PSNR {:.2f} dB", k, p);
        }
    } catch (const FitDiverged &e) {
        curve.csv.flush();
        write_summary(true, e.what());
        throw;
    }
    save_json(cfg.out / "fixture.json", FixturePredictor(entries).to_json(), -1);
    write_summary(false, "");
    return kExitOk;
}

// ---------------------------------------------------------------- stream

struct StreamOptions {
    std::string fixture;
    std::string resume;
    std::optional<std::uint32_t> max_frames;
};

std::unique_ptr<Predictor> make_predictor(const RunConfig &cfg, const OrthoCamera &camera,
                                          const StreamOptions &opts) {
    if (cfg.predictor == "fixture") {
        const fs::path path = opts.fixture.empty() ? cfg.fixture : fs::path(opts.fixture);
        if (path.empty()) {
            throw UsageError("the fixture predictor needs --fixture or paths.fixture");
        }
        return std::make_unique<FixturePredictor>(FixturePredictor::load(path));
    }
    if (cfg.predictor == "fit") {
        return std::make_unique<FitPredictor>(camera, cfg.fit);
    }
    throw UsageError(fmt::format("unknown predictor '{}' (expected fixture or fit)",
                                 cfg.predictor));
}

int cmd_stream(const RunConfig &cfg, const std::string &frames_dir, const StreamOptions &opts) {
    const auto frames = load_frames(frames_dir);
    const OrthoCamera camera = cfg.camera_for(frames.front().width, frames.front().height);
    auto predictor = make_predictor(cfg, camera, opts);

    std::optional<CanonicalSceneState> resume;
    if (!opts.resume.empty()) {
        resume = CanonicalSceneState::from_json(load_json(opts.resume));
    }

    const fs::path render_dir = cfg.out / "renders";
    fs::create_directories(render_dir);
    std::ofstream telemetry(cfg.out / "telemetry.jsonl");

    const std::size_t limit =
        opts.max_frames ? std::min<std::size_t>(*opts.max_frames, frames.size()) : frames.size();
    const FrameSource source = [&](std::uint32_t index) -> std::optional<ImageBuffer> {
        if (index >= limit) {
            return std::nullopt;
        }
        return frames[index];
    };
    StreamSinks sinks;
    sinks.on_render = [&](std::uint32_t frame, const RenderedFrame &r) {
        write_render(render_dir, r.image, fmt::format("f{:04d}_t{:09.4f}", frame, r.t));
    };
    sinks.on_telemetry = [&](const StepTelemetry &t) {
        telemetry << dump_json(t.to_json()) << '\n';
        telemetry.flush();
    };

    const StreamSummary summary = run_stream(source, *predictor, camera, cfg.stream, sinks, resume);
    save_json(cfg.out / "checkpoint.json", summary.final_state.to_json(), -1);
    Json out{{"frames", summary.frames},
             {"failed_steps", summary.failed_steps},
             {"final_frame", summary.final_state.frame_index},
             {"population", summary.final_state.gaussians.size()},
             {"predictor", predictor->name()}};
    save_json(cfg.out / "summary.json", out, 2);
    spdlog::info("streamed {} frames ({} failed steps)", summary.frames, summary.failed_steps);
    return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
    std::string spec;
    int n_blobs = 4;
    int frames = 2;
    int width = 64;
    int height = 64;
    double max_speed = 0.05;
    bool two_layer = false;
    double depth_noise = 0.0;
};

int cmd_synth(const RunConfig &cfg, const SynthOptions &opts) {
    SceneSpec spec;
    if (!opts.spec.empty()) {
        try {
            spec = SceneSpec::from_json(load_json(opts.spec));
        } catch (const Json::exception &e) {
            throw ParseError(e.what());
        }
    } else {
        spec.seed = cfg.seed;
        spec.n_blobs = opts.n_blobs;
        spec.frames = opts.frames;
        spec.width = opts.width;
        spec.height = opts.height;
        spec.max_speed = opts.max_speed;
        spec.depth = opts.two_layer ? DepthLayout::TwoLayer : DepthLayout::Single;
    }
    GroundTruth gt = make_scene(spec);
    if (opts.depth_noise > 0.0) {
        gt.frames = perturb_depth(gt.frames, opts.depth_noise, spec.seed);
    }
    write_scene_run(cfg.out, gt);
    spdlog::info("wrote {} frames to {}", gt.frames.size(), cfg.out.string());
    return kExitOk;
}

// ---------------------------------------------------------------- metrics

std::vector<fs::path> list_ppm(const fs::path &dir) {
    if (!fs::is_directory(dir)) {
        throw UsageError(fmt::format("{} is not a directory", dir.string()));
    }
    std::vector<fs::path> out;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".ppm") {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Depth companion of a PPM: frame_0001.ppm -> frame_0001.depth.gsdp,
/// x.rgb.ppm -> x.depth.gsdp.
std::optional<fs::path> depth_for(const fs::path &ppm) {
    std::string name = ppm.filename().string();
    name = name.substr(0, name.size() - 4); // strip ".ppm"
    if (name.size() > 4 && name.ends_with(".rgb")) {
        name = name.substr(0, name.size() - 4);
    }
    const fs::path p = ppm.parent_path() / (name + ".depth.gsdp");
    if (fs::exists(p)) {
        return p;
    }
    return std::nullopt;
}

int cmd_metrics(const RunConfig &cfg, const std::string &rendered_dir,
                const std::string &reference_dir) {
    const auto rendered = list_ppm(rendered_dir);
    const auto reference = list_ppm(reference_dir);
    if (rendered.size() != reference.size()) {
        throw UsageError(fmt::format("{} rendered frames but {} reference frames",
                                     rendered.size(), reference.size()));
    }
    if (rendered.empty()) {
        throw UsageError("no PPM frames to compare");
    }
    fs::create_directories(cfg.out);
    std::ofstream jsonl(cfg.out / "metrics.jsonl");
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    double depth_sum = 0.0;
    int depth_count = 0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const ImageBuffer a = read_ppm(rendered[i]);
        const ImageBuffer b = read_ppm(reference[i]);
        if (a.width != b.width || a.height != b.height) {
            throw UsageError(fmt::format("{} and {} differ in size", rendered[i].string(),
                                         reference[i].string()));
        }
        const double p = psnr(a, b);
        const double s = ssim(a, b);
        Json line{{"frame", i},
                  {"rendered", rendered[i].filename().string()},
                  {"reference", reference[i].filename().string()},
                  {"psnr", psnr_json(p)},
                  {"ssim", s}};
        const auto da = depth_for(rendered[i]);
        const auto db = depth_for(reference[i]);
        line["depth_loss"] = nullptr;
        if (da && db) {
            try {
                const double d = depth_loss(read_gsdp(*da), read_gsdp(*db));
                line["depth_loss"] = d;
                depth_sum += d;
                ++depth_count;
            } catch (const DegenerateDepth &e) {
                spdlog::warn("frame {}: depth loss undefined ({})", i, e.what());
            }
        }
        jsonl << dump_json(line) << '\n';
        psnr_sum += p;
        ssim_sum += s;
    }
    const double n = static_cast<double>(rendered.size());
    Json summary{{"frames", rendered.size()},
                 {"mean_psnr", psnr_json(psnr_sum / n)},
                 {"mean_ssim", ssim_sum / n},
                 {"mean_depth_loss",
                  depth_count > 0 ? Json(depth_sum / depth_count) : Json(nullptr)}};
    save_json(cfg.out / "metrics_summary.json", summary, 2);
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    setup_logging();

    CLI::App app{"gsstream: online dynamic Gaussian splatting engine"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand
    GlobalOptions g;
    app.add_option("--config", g.config, "flat key = value configuration file");
    app.add_option("--seed", g.seed, "random seed (overrides the config)");
    app.add_option("--out", g.out, "output directory (overrides the config)");
    app.add_flag("--strict", g.strict, "abort the stream on the first failing step");
    app.add_flag("--deterministic-init", g.deterministic_init,
                 "initialise fitted Gaussians at their token anchors (no sampling)");
    app.add_option("--predictor", g.predictor, "predictor backend: fixture or fit");
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");

    std::string scene_path;
    std::optional<double> time;
    auto *render = app.add_subcommand("render", "render a scene JSON at one time");
    render->add_option("scene", scene_path, "scene JSON")->required();
    render->add_option("--time", time, "render time (default: the scene's frame time)");

    std::string frames_dir;
    auto *fit = app.add_subcommand("fit", "fit Gaussians and deformations to a frame directory");
    fit->add_option("frames_dir", frames_dir, "directory of frame_NNNN.ppm + .depth.gsdp")->required();

    StreamOptions stream_opts;
    auto *stream = app.add_subcommand("stream", "run the online reconstruction loop");
    stream->add_option("frames_dir", frames_dir, "directory of frame_NNNN.ppm + .depth.gsdp")
        ->required();
    stream->add_option("--fixture", stream_opts.fixture, "fixture file for the fixture predictor");
    stream->add_option("--resume", stream_opts.resume, "checkpoint to continue from");
    stream->add_option("--frames", stream_opts.max_frames, "only use the first N frames");

    SynthOptions synth_opts;
    auto *synth = app.add_subcommand("synth", "generate a synthetic RGB-D sequence");
    synth->add_option("--spec", synth_opts.spec, "scene spec JSON (overrides the flags below)");
    synth->add_option("--blobs", synth_opts.n_blobs, "number of blobs");
    synth->add_option("--frames", synth_opts.frames, "number of frames");
    synth->add_option("--width", synth_opts.width, "canvas width");
    synth->add_option("--height", synth_opts.height, "canvas height");
    synth->add_option("--max-speed", synth_opts.max_speed, "largest per-axis speed per frame");
    synth->add_flag("--two-layer", synth_opts.two_layer, "place blobs on two depth layers");
    synth->add_option("--depth-noise", synth_opts.depth_noise, "std of added depth noise");

    std::string rendered_dir;
    std::string reference_dir;
    auto *metrics = app.add_subcommand("metrics", "PSNR / SSIM / depth loss between two dirs");
    metrics->add_option("rendered", rendered_dir, "rendered frames")->required();
    metrics->add_option("reference", reference_dir, "reference frames")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitInput;
    }

    // Parse/config problems map to 2 everywhere; only the failing stage decides 3 vs 4.
    RunConfig cfg;
    try {
        cfg = resolve_config(g);
    } catch (const Error &e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    }

    try {
        if (*render) {
            return cmd_render(cfg, scene_path, time);
        }
        if (*fit) {
            return cmd_fit(cfg, frames_dir);
        }
        if (*stream) {
            return cmd_stream(cfg, frames_dir, stream_opts);
        }
        if (*synth) {
            return cmd_synth(cfg, synth_opts);
        }
        return cmd_metrics(cfg, rendered_dir, reference_dir);
    } catch (const FitDiverged &e) {
        spdlog::error("optimisation diverged: {}", e.what());
        return kExitDiverged;
    } catch (const ParseError &e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    } catch (const UsageError &e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    } catch (const ShapeError &e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    } catch (const SpecError &e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return kExitRender;
    }
}
