// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/camera.hpp"
#include "gsstream/gaussian.hpp"
#include "gsstream/image.hpp"
#include "gsstream/rasterizer.hpp"
#include "gsstream/scene_io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace gss {

/// One ground-truth Gaussian with constant velocity and optional lifecycle events.
/// It is visible on frames [appear_frame, vanish_frame); vanish_frame < 0 means never.
struct Blob {
    Vec3 mu0 = Vec3(0.5, 0.5, 2.0); // canonical position at global time 0
    Vec3 velocity = Vec3::Zero();   // canonical units per frame
    Vec3 scale = Vec3(0.05, 0.05, 0.05);
    Quaternion rotation;
    double opacity = 0.9;
    Vec3 color = Vec3(1.0, 1.0, 1.0);
    int appear_frame = 0;
    int vanish_frame = -1;
    double fade_gamma0 = 500.0; // sharpness of appear/vanish transitions
    double fade_gamma1 = 0.25;  // half-width of the visible window around a transition

    bool visible_at(int frame) const;
};

enum class DepthLayout { Single, TwoLayer };
enum class BlobLayout { Random, TokenGrid };

struct SceneSpec {
    std::uint64_t seed = 0;
    int n_blobs = 1;
    int width = 64;
    int height = 64;
    int frames = 2;
    DepthLayout depth = DepthLayout::Single;
    BlobLayout layout = BlobLayout::Random;
    double max_speed = 0.0;            // |v| bound per axis in x, y (canonical units/frame)
    double min_radius_px = 2.0;        // blob scale range, in pixels
    double max_radius_px = 5.0;
    double min_opacity = 0.6;
    double max_opacity = 0.95;
    double region_min = 0.1;           // Random layout: centres stay in [min, max]^2
    double region_max = 0.9;           //   of the canvas (fractions) on every frame
    int grid_w = 16;                   // TokenGrid layout only
    int grid_h = 16;
    std::vector<Blob> blobs;           // explicit blobs override random generation

    Json to_json() const;
    static SceneSpec from_json(const Json &j);
};

/// Ground-truth dynamic scene plus its rendered RGB-D frames.
struct GroundTruth {
    SceneSpec spec;
    OrthoCamera camera;
    std::vector<Blob> blobs;
    std::vector<ImageBuffer> frames; // rendered at integer times
    RasterConfig raster;

    /// Dynamic Gaussians valid on [k, k+1], anchored at t0 = k or k + 1.
    std::vector<DynamicGaussian> interval_gaussians(int k) const;
    /// Render at any global time t in [0, frames - 1].
    ImageBuffer render(double t) const;
};

/// Throws SpecError when a visible blob centre leaves the image.
GroundTruth make_scene(const SceneSpec &spec);

/// Adds seeded N(0, noise^2) noise to every depth sample; RGB untouched.
std::vector<ImageBuffer> perturb_depth(const std::vector<ImageBuffer> &frames, double noise_level,
                                       std::uint64_t seed);

/// Write frames (PPM + GSDP), per-interval scene JSON and a manifest into `dir`.
void write_scene_run(const std::filesystem::path &dir, const GroundTruth &gt);

Json blob_to_json(const Blob &b);
Blob blob_from_json(const Json &j);

} // namespace gss
