// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/camera.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace gss {

struct StreamConfig {
    double prune_epsilon = 1e-3;
    /// Render times within each interval, as fractions of [k-1, k].
    std::vector<double> render_fractions{0.0, 0.5, 1.0};
    /// gamma0 of the identity lifecycle given to first-frame Gaussians.
    double init_gamma0 = 4.0;
    bool strict = false;
    RasterConfig raster;
};

struct StepTelemetry {
    std::uint32_t frame = 0;
    std::size_t persistent = 0; // previous-frame Gaussians matched and kept
    std::size_t emerging = 0;   // current-frame Gaussians kept
    std::size_t pruned = 0;     // removed by the opacity test at t_k
    std::size_t retired = 0;    // older Gaussians whose window ended
    std::size_t population = 0;

    Json to_json() const;
    friend bool operator==(const StepTelemetry &, const StepTelemetry &) = default;
};

/// The streaming engine's persistent memory between frames. Deformation t0
/// values are global stream times.
struct CanonicalSceneState {
    std::vector<DynamicGaussian> gaussians;
    std::optional<PredictorState> prev_predictor_state;
    std::uint32_t frame_index = 0;
    std::size_t max_frame_count = 0; // largest per-frame contribution seen
    StepTelemetry telemetry;

    /// Checkpoint: scene JSON fields plus frame_index and predictor state.
    Json to_json() const;
    static CanonicalSceneState from_json(const Json &j);

    friend bool operator==(const CanonicalSceneState &, const CanonicalSceneState &) = default;
};

struct RenderedFrame {
    double t = 0.0; // global time
    ImageBuffer image;
};

struct StepResult {
    CanonicalSceneState state;
    std::vector<RenderedFrame> frames;
};

/// Encode the first frame; every Gaussian gets an identity lifecycle at t0 = 0.
StepResult stream_init(const ImageBuffer &first_frame, Predictor &predictor,
                       const OrthoCamera &camera, const StreamConfig &cfg);

/// One online step for frame k = state.frame_index + 1: predict, update matched
/// deformations, fuse, render the interval, prune. `state` is never modified;
/// any failure leaves the caller's state as it was. `source_index` is the index
/// handed to the predictor (defaults to k; differs after a skipped frame).
StepResult stream_step(const CanonicalSceneState &state, const ImageBuffer &frame,
                       Predictor &predictor, const OrthoCamera &camera, const StreamConfig &cfg,
                       const DecodeContext &ctx = {},
                       std::optional<std::uint32_t> source_index = std::nullopt);

struct StreamSummary {
    std::size_t frames = 0;
    std::size_t failed_steps = 0;
    std::vector<StepTelemetry> telemetry;
    CanonicalSceneState final_state;
};

/// Sinks receive outputs as soon as each step completes.
struct StreamSinks {
    std::function<void(std::uint32_t frame, const RenderedFrame &)> on_render;
    std::function<void(const StepTelemetry &)> on_telemetry;
};

/// Frame source: returns the frame with the given index, or nullopt at end of stream.
using FrameSource = std::function<std::optional<ImageBuffer>(std::uint32_t index)>;

/// Drive init + step over a stream. Failing steps are logged and skipped unless
/// cfg.strict. Throws if the population bound is ever violated.
/// `resume` continues from a checkpoint instead of initialising.
StreamSummary run_stream(const FrameSource &frames, Predictor &predictor,
                         const OrthoCamera &camera, const StreamConfig &cfg,
                         const StreamSinks &sinks = {},
                         std::optional<CanonicalSceneState> resume = std::nullopt);

} // namespace gss
