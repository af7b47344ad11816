// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/image.hpp"
#include "gsstream/rasterizer.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace gss {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

struct LossWeights {
    double lambda_mse = 1.0;
    double lambda_depth = 0.05;
    double lambda_mask = 3.0;
    double decay_w = 1.0; // sensitivity of the adaptive depth weight
    /// When set, used instead of the adaptive weight (a fitter holds the
    /// detached weight fixed so its objective does not drift between steps).
    std::optional<double> frozen_depth_weight;
    /// Treat target depth <= 0 as "no measurement" and leave those pixels out
    /// of the depth term.
    bool skip_missing_depth = false;
    /// Weight each pixel's depth residual by the rendered alpha. Keeps the
    /// objective from jumping where a footprint edge uncovers a pixel.
    bool coverage_weighted_depth = false;

    void validate() const;
};

/// How a total loss treats a depth plane that cannot be tau-normalised.
enum class DepthPolicy {
    Strict,         // throw DegenerateDepth
    SkipDegenerate, // contribute zero depth loss and no gradient
};

struct LossBreakdown {
    double total = 0.0;
    double mse = 0.0;
    double depth = 0.0;
    double mask = 0.0;
    double depth_weight = 0.0; // effective (adaptive) depth weight used
    bool depth_valid = true;
};

double mse(std::span<const double> a, std::span<const double> b);
/// Mean squared error over every pixel and channel of the RGB planes.
double mse(const ImageBuffer &a, const ImageBuffer &b);

double psnr_from_mse(double mse_value, double max_val = 1.0);
double psnr(const ImageBuffer &a, const ImageBuffer &b, double max_val = 1.0);

/// Mean SSIM over the valid 11x11 windows (Gaussian, sigma 1.5, K1 0.01, K2 0.03),
/// averaged over the three channels. Images must be at least 11x11.
double ssim(const ImageBuffer &a, const ImageBuffer &b, double max_val = 1.0);
double ssim_plane(std::span<const double> a, std::span<const double> b, int width, int height,
                  double max_val = 1.0);

/// (x - median) / mean|x - median| over the pixels where `mask` is non-zero.
/// Pixels outside the mask are set to 0.
Plane tau_normalize(const Plane &d, const Plane *mask = nullptr);

/// Mean absolute difference of the tau-normalised planes.
double depth_loss(const Plane &d_hat, const Plane &d_ref, const Plane *mask = nullptr);

/// depth_loss together with its gradient w.r.t. d_hat.
double depth_loss_with_grad(const Plane &d_hat, const Plane &d_ref, std::vector<double> &grad,
                            const Plane *mask = nullptr);

/// depth_loss with each residual scaled by coverage (e.g. rendered alpha).
/// Fills the gradients w.r.t. d_hat and coverage when requested.
double coverage_weighted_depth_loss(const Plane &d_hat, const Plane &d_ref, const Plane *coverage,
                                    const Plane *mask = nullptr,
                                    std::vector<double> *grad = nullptr,
                                    std::vector<double> *coverage_grad = nullptr);

/// lambda_depth * sigmoid(-L / w).
double adaptive_depth_weight(const LossWeights &weights, double current_depth_loss);

/// MSE restricted to pixels with mask == 1; 0 for an empty mask.
double masked_loss(const ImageBuffer &a, const ImageBuffer &b, const Plane &mask);

/// lambda_mse * MSE + adaptive_weight * depth_loss. The adaptive weight is
/// treated as a constant when `grad` is requested.
LossBreakdown total_static_loss(const ImageBuffer &rendered, const ImageBuffer &target,
                                const LossWeights &weights,
                                DepthPolicy policy = DepthPolicy::Strict,
                                ImageGrad *grad = nullptr);

/// Average over the sampled times of MSE + adaptive depth term + mask term.
/// `masks` is either empty or one plane per time.
LossBreakdown total_dynamic_loss(std::span<const ImageBuffer> rendered,
                                 std::span<const ImageBuffer> targets, const LossWeights &weights,
                                 std::span<const Plane> masks = {},
                                 DepthPolicy policy = DepthPolicy::Strict,
                                 std::vector<ImageGrad> *grads = nullptr);

/// n uniformly spaced times in [t1, t2] including both endpoints.
std::vector<double> time_grid(double t1, double t2, int n);

} // namespace gss
