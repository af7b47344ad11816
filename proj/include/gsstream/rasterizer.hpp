// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/camera.hpp"
#include "gsstream/gaussian.hpp"
#include "gsstream/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gss {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Blending constants. Defaults follow common splatting practice.
struct RasterConfig {
    double max_alpha = 0.99;         // per-splat opacity clamp
    double min_transmittance = 1e-4; // stop blending once T drops below
    double blur = 0.3;               // px^2 added to the 2D covariance diagonal
    double cutoff_sigma = 3.0;       // footprint ellipse, in standard deviations
    double min_depth_alpha = 1e-6;   // depth is normalised only above this alpha
    int tile_size = 16;
    int threads = 1; // 0 = hardware concurrency
};

struct ProjectedGaussian {
    Vec2 center = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity(); // inverse of cov2d
    double camera_depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    GaussianId source_id;
    bool valid = true;
    // Inclusive pixel bounding box of the footprint ellipse.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

/// Counters describing the discrete decisions a render made.
struct RenderStats {
    std::uint64_t skipped_singular = 0;
    std::uint64_t contributions = 0;   // (pixel, splat) pairs blended
    std::uint64_t clamped = 0;         // pairs whose opacity hit max_alpha
    std::uint64_t early_stopped = 0;   // pixels that hit min_transmittance

    friend bool operator==(const RenderStats &, const RenderStats &) = default;
};

/// Project a Gaussian through the orthographic Jacobian J = [[fx,0,0],[0,fy,0]].
/// cov2d includes the blur dilation.
ProjectedGaussian project_gaussian(const StaticGaussian &g, const OrthoCamera &cam,
                                   const RasterConfig &cfg = {});

/// Tiled render. `ids` breaks depth ties (ascending); when empty the input
/// index is used as token_index.
ImageBuffer render(std::span<const StaticGaussian> gaussians, std::span<const GaussianId> ids,
                   const OrthoCamera &cam, const RasterConfig &cfg = {},
                   RenderStats *stats = nullptr);
ImageBuffer render(std::span<const StaticGaussian> gaussians, const OrthoCamera &cam,
                   const RasterConfig &cfg = {}, RenderStats *stats = nullptr);

/// Reference per-pixel loop over every splat. Must match render() bit for bit.
ImageBuffer render_naive(std::span<const StaticGaussian> gaussians,
                         std::span<const GaussianId> ids, const OrthoCamera &cam,
                         const RasterConfig &cfg = {}, RenderStats *stats = nullptr);

/// Materialise every Gaussian at t and render. Propagates OutOfWindow.
ImageBuffer render_at(std::span<const DynamicGaussian> scene, double t, const OrthoCamera &cam,
                      const RasterConfig &cfg = {}, RenderStats *stats = nullptr);

/// dL/d(render outputs), same layout as ImageBuffer.
struct ImageGrad {
    std::vector<double> rgb;
    std::vector<double> depth;
    std::vector<double> alpha;

    explicit ImageGrad(std::size_t pixels = 0)
        : rgb(pixels * 3, 0.0), depth(pixels, 0.0), alpha(pixels, 0.0) {}
};

/// Gradient w.r.t. one StaticGaussian. `rotation` is w.r.t. the raw (w,x,y,z)
/// components, through normalisation.
struct GaussianGrad {
    Vec3 mu = Vec3::Zero();
    Vec3 scale = Vec3::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
};

struct DynamicGaussianGrad {
    GaussianGrad base; // w.r.t. the un-deformed parameters (mu0, alpha0, ...)
    Vec3 velocity = Vec3::Zero();
    double gamma0 = 0.0;
    double gamma1 = 0.0;
};

/// Backpropagate per-pixel output gradients to every Gaussian.
std::vector<GaussianGrad> render_backward(std::span<const StaticGaussian> gaussians,
                                          std::span<const GaussianId> ids,
                                          const OrthoCamera &cam, const ImageGrad &grad,
                                          const RasterConfig &cfg = {});

/// Chain a gradient at the materialised Gaussian back to its dynamic parameters.
DynamicGaussianGrad chain_materialize(const DynamicGaussian &g, double t,
                                      const GaussianGrad &at_t);

/// A scalar objective on a rendered image, returning its output gradients.
struct LossEval {
    double value = 0.0;
    ImageGrad grad;
};
using ImageLossFn = std::function<LossEval(const ImageBuffer &rendered)>;

struct RenderGradients {
    double loss = 0.0;
    ImageBuffer image;
    std::vector<GaussianGrad> grads;
};

/// Render, evaluate `loss`, and backpropagate.
RenderGradients render_gradients(std::span<const StaticGaussian> gaussians,
                                 std::span<const GaussianId> ids, const OrthoCamera &cam,
                                 const ImageLossFn &loss, const RasterConfig &cfg = {});

} // namespace gss
