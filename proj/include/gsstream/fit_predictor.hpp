// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/camera.hpp"
#include "gsstream/losses.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gss {

struct FitConfig {
    int n_gaussians = 0;          // 0 = one token per 16x16 pixel block
    int iterations = 500;         // encode iteration cap
    int decode_iterations = 200;  // decode iteration cap
    double step_size = 1.0;       // initial global step multiplier
    int candidates = 4;           // K offset candidates per Gaussian
    double tolerance = 1e-6;      // relative improvement over `patience` iterations
    int patience = 50;
    LossWeights weights;
    bool skip_missing_depth = true; // target depth <= 0 carries no depth supervision
    bool coverage_weighted_depth = true;
    bool deterministic_init = false;
    std::uint64_t seed = 0;
    double offset_std_xy = 0.5; // in token cells
    double offset_std_z = 0.3;  // in inverse-depth units
    double init_opacity = 0.5;
    double init_gamma0 = 4.0;
    double init_gamma1 = 0.5;
    RasterConfig raster;

    void validate() const;
};

struct FitIteration {
    int iter = 0;
    LossBreakdown loss;
};

struct FitReport {
    std::vector<FitIteration> curve; // accepted iterates, starting with the initial one
    double mean_depth_weight = 0.0;  // average adaptive depth weight over the curve
    int evaluations = 0;
    bool converged = false; // stopped before the iteration cap
    std::string stop_reason = "iterations"; // "iterations", "tolerance" or "no_descent"
};

/// Columns of a token grid with `n` cells laid over a w x h image; picks the
/// factorisation of n closest to the image aspect ratio.
std::pair<int, int> token_grid(int n, int width, int height);

/// Projected, diagonally preconditioned gradient descent with step halving.
/// `eval` returns the loss at x and fills `grad` when non-null; `project`
/// maps a point back into the feasible set. Accepted losses never increase.
struct Minimizer {
    using Eval = std::function<LossBreakdown(const std::vector<double> &x,
                                             std::vector<double> *grad)>;
    using Project = std::function<void(std::vector<double> &x)>;

    int iterations = 100;
    double step_size = 1.0;
    double max_step = 4.0;
    int max_halvings = 12;
    double tolerance = 1e-6;
    int patience = 50;
    /// Parameters per block (one Gaussian). When a full step cannot be made
    /// to descend, random subsets of blocks are tried before giving up, so a
    /// single parameter stuck against a discontinuity does not stall the rest.
    std::size_t block_size = 0;
    int subset_attempts = 6;
    std::uint64_t seed = 0;

    /// Throws FitDiverged when a loss or gradient is non-finite.
    FitReport run(std::vector<double> &x, const std::vector<double> &rates, const Eval &eval,
                  const Project &project) const;
};

/// Gradient-descent stand-in for the static encoder and dynamic decoder.
class FitPredictor final : public Predictor {
  public:
    FitPredictor(OrthoCamera camera, FitConfig cfg);

    std::string name() const override { return "fit"; }
    EncodeResult encode(const ImageBuffer &frame, std::uint32_t frame_index) override;
    PredictorOutput decode(const PredictorState &prev, const PredictorState &cur,
                           const DecodeContext &ctx = {}) override;

    const FitConfig &config() const { return cfg_; }
    const OrthoCamera &camera() const { return camera_; }
    /// Diagnostics of the most recent calls; not part of the predictor contract.
    const FitReport &last_encode_report() const { return encode_report_; }
    const FitReport &last_decode_report() const { return decode_report_; }

    /// Initial Gaussians before optimisation (exposed for tests and ablations).
    std::vector<StaticGaussian> initial_gaussians(const ImageBuffer &frame,
                                                  std::uint32_t frame_index) const;

    static std::vector<DynamicGaussian> state_gaussians(const PredictorState &s);
    static ImageBuffer state_frame(const PredictorState &s);

  private:
    OrthoCamera camera_;
    FitConfig cfg_;
    FitReport encode_report_;
    FitReport decode_report_;
};

} // namespace gss
