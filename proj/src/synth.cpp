// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/synth.hpp"

#include "gsstream/errors.hpp"
#include "gsstream/image_io.hpp"
#include "gsstream/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gss {

namespace fs = std::filesystem;

bool Blob::visible_at(int frame) const {
    return frame >= appear_frame && (vanish_frame < 0 || frame < vanish_frame);
}

Json blob_to_json(const Blob &b) {
    return Json{{"mu0", vec3_to_json(b.mu0)},
                {"velocity", vec3_to_json(b.velocity)},
                {"scale", vec3_to_json(b.scale)},
                {"quat", Json::array({b.rotation.w, b.rotation.x, b.rotation.y, b.rotation.z})},
                {"alpha", b.opacity},
                {"color", vec3_to_json(b.color)},
                {"appear_frame", b.appear_frame},
                {"vanish_frame", b.vanish_frame},
                {"fade_gamma0", b.fade_gamma0},
                {"fade_gamma1", b.fade_gamma1}};
}

Blob blob_from_json(const Json &j) {
    Blob b;
    b.mu0 = vec3_from_json(j.at("mu0"), "mu0");
    b.velocity = vec3_from_json(j.value("velocity", Json::array({0, 0, 0})), "velocity");
    b.scale = vec3_from_json(j.at("scale"), "scale");
    if (j.contains("quat")) {
        const Json &q = j.at("quat");
        b.rotation = normalize_quaternion(q.at(0).get<double>(), q.at(1).get<double>(),
                                          q.at(2).get<double>(), q.at(3).get<double>());
    }
    b.opacity = j.value("alpha", b.opacity);
    b.color = vec3_from_json(j.value("color", Json::array({1, 1, 1})), "color");
    b.appear_frame = j.value("appear_frame", 0);
    b.vanish_frame = j.value("vanish_frame", -1);
    b.fade_gamma0 = j.value("fade_gamma0", 500.0);
    b.fade_gamma1 = j.value("fade_gamma1", 0.25);
    return b;
}

Json SceneSpec::to_json() const {
    Json j{{"seed", seed},
           {"n_blobs", n_blobs},
           {"width", width},
           {"height", height},
           {"frames", frames},
           {"depth", depth == DepthLayout::Single ? "single" : "two_layer"},
           {"layout", layout == BlobLayout::Random ? "random" : "token_grid"},
           {"max_speed", max_speed},
           {"min_radius_px", min_radius_px},
           {"max_radius_px", max_radius_px},
           {"min_opacity", min_opacity},
           {"max_opacity", max_opacity},
           {"region_min", region_min},
           {"region_max", region_max},
           {"grid_w", grid_w},
           {"grid_h", grid_h}};
    j["blobs"] = Json::array();
    for (const auto &b : blobs) {
        j["blobs"].push_back(blob_to_json(b));
    }
    return j;
}

SceneSpec SceneSpec::from_json(const Json &j) {
    SceneSpec s;
    try {
        s.seed = j.value("seed", s.seed);
        s.n_blobs = j.value("n_blobs", s.n_blobs);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.frames = j.value("frames", s.frames);
        const std::string depth = j.value("depth", std::string("single"));
        if (depth != "single" && depth != "two_layer") {
            throw SpecError(fmt::format("unknown depth layout '{}'", depth));
        }
        s.depth = depth == "single" ? DepthLayout::Single : DepthLayout::TwoLayer;
        const std::string layout = j.value("layout", std::string("random"));
        if (layout != "random" && layout != "token_grid") {
            throw SpecError(fmt::format("unknown blob layout '{}'", layout));
        }
        s.layout = layout == "random" ? BlobLayout::Random : BlobLayout::TokenGrid;
        s.max_speed = j.value("max_speed", s.max_speed);
        s.min_radius_px = j.value("min_radius_px", s.min_radius_px);
        s.max_radius_px = j.value("max_radius_px", s.max_radius_px);
        s.min_opacity = j.value("min_opacity", s.min_opacity);
        s.max_opacity = j.value("max_opacity", s.max_opacity);
        s.region_min = j.value("region_min", s.region_min);
        s.region_max = j.value("region_max", s.region_max);
        s.grid_w = j.value("grid_w", s.grid_w);
        s.grid_h = j.value("grid_h", s.grid_h);
        if (j.contains("blobs")) {
            for (const auto &b : j.at("blobs")) {
                s.blobs.push_back(blob_from_json(b));
            }
        }
    } catch (const Json::exception &e) {
        throw SpecError(fmt::format("malformed scene spec: {}", e.what()));
    }
    return s;
}

namespace {

double depth_for(const SceneSpec &spec, Rng &rng, int index) {
    if (spec.depth == DepthLayout::Single) {
        return 2.0;
    }
    // Two well separated layers; alternate so both are populated.
    (void)rng;
    return index % 2 == 0 ? 1.5 : 3.0;
}

std::vector<Blob> generate_blobs(const SceneSpec &spec, const OrthoCamera &cam, Rng &rng) {
    std::vector<Blob> blobs;
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    const int n = spec.layout == BlobLayout::TokenGrid ? spec.grid_w * spec.grid_h : spec.n_blobs;
    for (int i = 0; i < n; ++i) {
        Blob b;
        const double radius_px = uniform(spec.min_radius_px, spec.max_radius_px);
        const double aspect = uniform(0.6, 1.0);
        b.scale = Vec3(radius_px / cam.fx, aspect * radius_px / cam.fy, radius_px / cam.fx);
        const double angle = uniform(0.0, M_PI);
        b.rotation = normalize_quaternion(std::cos(angle / 2), 0.0, 0.0, std::sin(angle / 2));
        b.opacity = uniform(spec.min_opacity, spec.max_opacity);
        b.color = Vec3(uniform(0.05, 1.0), uniform(0.05, 1.0), uniform(0.05, 1.0));
        b.velocity = Vec3(uniform(-spec.max_speed, spec.max_speed),
                          uniform(-spec.max_speed, spec.max_speed), 0.0);
        const double span = std::max(0, spec.frames - 1);
        double x, y;
        if (spec.layout == BlobLayout::TokenGrid) {
            const int gx = i % spec.grid_w;
            const int gy = i / spec.grid_w;
            const double cell_w = 1.0 / spec.grid_w;
            const double cell_h = 1.0 / spec.grid_h;
            x = (gx + 0.5) * cell_w + uniform(-0.3, 0.3) * cell_w;
            y = (gy + 0.5) * cell_h + uniform(-0.3, 0.3) * cell_h;
            // Keep the trajectory inside the canvas.
            b.velocity.x() = std::clamp(b.velocity.x(), -x / std::max(span, 1.0),
                                        (1.0 - x) / std::max(span, 1.0));
            b.velocity.y() = std::clamp(b.velocity.y(), -y / std::max(span, 1.0),
                                        (1.0 - y) / std::max(span, 1.0));
        } else {
            // Choose a start so that start + v * span stays inside the region.
            const double lo_x = spec.region_min + std::max(0.0, -b.velocity.x() * span);
            const double hi_x = spec.region_max - std::max(0.0, b.velocity.x() * span);
            const double lo_y = spec.region_min + std::max(0.0, -b.velocity.y() * span);
            const double hi_y = spec.region_max - std::max(0.0, b.velocity.y() * span);
            if (lo_x > hi_x || lo_y > hi_y) {
                throw SpecError("max_speed too large for the number of frames");
            }
            x = uniform(lo_x, hi_x);
            y = uniform(lo_y, hi_y);
        }
        // Canonical x maps to pixels through fx; invert the camera offset.
        b.mu0 = Vec3((x * cam.width - cam.cx) / cam.fx, (y * cam.height - cam.cy) / cam.fy,
                     depth_for(spec, rng, i));
        blobs.push_back(b);
    }
    return blobs;
}

DynamicGaussian blob_gaussian(const Blob &b, std::size_t index, int anchor, double gamma0,
                              double gamma1) {
    DynamicGaussian g;
    g.base.mu = b.mu0 + b.velocity * double(anchor);
    g.base.scale = b.scale;
    g.base.rotation = b.rotation;
    g.base.opacity = b.opacity;
    g.base.color = b.color;
    g.deform.velocity = b.velocity;
    g.deform.gamma0 = gamma0;
    g.deform.gamma1 = gamma1;
    g.deform.t0 = double(anchor);
    g.id = {0, static_cast<std::uint32_t>(index)};
    return g;
}

} // namespace

std::vector<DynamicGaussian> GroundTruth::interval_gaussians(int k) const {
    std::vector<DynamicGaussian> out;
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const Blob &b = blobs[i];
        const bool here = b.visible_at(k);
        const bool next = b.visible_at(k + 1);
        if (here && next) {
            out.push_back(blob_gaussian(b, i, k, b.fade_gamma0, 1.0));
        } else if (here) {
            out.push_back(blob_gaussian(b, i, k, b.fade_gamma0, b.fade_gamma1));
        } else if (next) {
            out.push_back(blob_gaussian(b, i, k + 1, b.fade_gamma0, b.fade_gamma1));
        }
    }
    return out;
}

ImageBuffer GroundTruth::render(double t) const {
    const int k = static_cast<int>(std::floor(t));
    return render_at(interval_gaussians(k), t, camera, raster);
}

GroundTruth make_scene(const SceneSpec &spec) {
    if (spec.width <= 0 || spec.height <= 0 || spec.frames <= 0) {
        throw SpecError("scene spec needs positive canvas size and frame count");
    }
    if (spec.layout == BlobLayout::Random && spec.blobs.empty() && spec.n_blobs < 0) {
        throw SpecError("n_blobs must be non-negative");
    }
    if (!(spec.region_min >= 0.0 && spec.region_min < spec.region_max && spec.region_max <= 1.0)) {
        throw SpecError("placement region must satisfy 0 <= region_min < region_max <= 1");
    }
    if (std::abs(spec.max_speed) > 1.0) {
        throw SpecError("max_speed must lie in [0, 1]");
    }
    GroundTruth gt;
    gt.spec = spec;
    gt.camera = OrthoCamera::unit_square(spec.width, spec.height);
    Rng rng(spec.seed);
    gt.blobs = spec.blobs.empty() ? generate_blobs(spec, gt.camera, rng) : spec.blobs;

    for (std::size_t i = 0; i < gt.blobs.size(); ++i) {
        const Blob &b = gt.blobs[i];
        try {
            validate(StaticGaussian{b.mu0, b.scale, b.rotation, b.opacity, b.color});
            validate(DeformationParams{b.velocity, b.fade_gamma0, 1.0, 0.0});
        } catch (const Error &e) {
            throw SpecError(fmt::format("blob {}: {}", i, e.what()));
        }
        for (int f = 0; f < spec.frames; ++f) {
            if (!b.visible_at(f)) {
                continue;
            }
            const Vec3 p = gt.camera.view.apply(b.mu0 + b.velocity * double(f));
            const double u = gt.camera.fx * p.x() + gt.camera.cx;
            const double v = gt.camera.fy * p.y() + gt.camera.cy;
            if (u < 0.0 || u >= spec.width || v < 0.0 || v >= spec.height) {
                throw SpecError(
                    fmt::format("blob {} centre ({:.2f}, {:.2f}) leaves the image at frame {}", i,
                                u, v, f));
            }
        }
    }
    for (int f = 0; f < spec.frames; ++f) {
        gt.frames.push_back(gt.render(double(f)));
    }
    return gt;
}

std::vector<ImageBuffer> perturb_depth(const std::vector<ImageBuffer> &frames, double noise_level,
                                       std::uint64_t seed) {
    if (noise_level < 0.0) {
        throw Error("noise level must be non-negative");
    }
    std::vector<ImageBuffer> out = frames;
    if (noise_level == 0.0) {
        return out;
    }
    Rng rng(seed);
    for (auto &f : out) {
        for (auto &d : f.depth) {
            d += noise_level * rng.normal();
        }
    }
    return out;
}

void write_scene_run(const fs::path &dir, const GroundTruth &gt) {
    fs::create_directories(dir);
    Json manifest;
    manifest["spec"] = gt.spec.to_json();
    manifest["camera"] = Json{{"fx", gt.camera.fx},        {"fy", gt.camera.fy},
                              {"cx", gt.camera.cx},        {"cy", gt.camera.cy},
                              {"width", gt.camera.width},  {"height", gt.camera.height}};
    manifest["blobs"] = Json::array();
    for (const auto &b : gt.blobs) {
        manifest["blobs"].push_back(blob_to_json(b));
    }
    manifest["frames"] = Json::array();
    manifest["scenes"] = Json::array();
    for (int f = 0; f < int(gt.frames.size()); ++f) {
        save_frame(dir, f, gt.frames[f]);
        const std::string stem = frame_stem(f);
        manifest["frames"].push_back(
            Json{{"index", f}, {"rgb", stem + ".ppm"}, {"depth", stem + ".depth.gsdp"}});
        const std::string scene_name = fmt::format("scene_{:04d}.json", f);
        save_scene(dir / scene_name, Scene{double(f), gt.interval_gaussians(f)});
        manifest["scenes"].push_back(scene_name);
    }
    save_json(dir / "manifest.json", manifest, 2);
}

} // namespace gss
