// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/gaussian.hpp"
#include "gsstream/image.hpp"
#include "gsstream/scene_io.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gss {

/// Backend-specific memory of one encoded frame. Opaque to the stream engine.
struct PredictorState {
    std::string backend;
    std::uint32_t frame_index = 0;
    Json payload;

    Json to_json() const;
    static PredictorState from_json(const Json &j);

    friend bool operator==(const PredictorState &, const PredictorState &) = default;
};

struct EncodeResult {
    PredictorState state;
    std::vector<StaticGaussian> gaussians;
    std::vector<GaussianId> ids;
};

/// What a backend predicts for one frame pair (previous k-1, current k).
/// Backward deformations use t0 = 1 (current endpoint), forward ones t0 = 0.
struct PredictorOutput {
    std::vector<StaticGaussian> current_static;
    std::vector<GaussianId> current_ids;
    std::vector<DeformationParams> backward_deform; // one per current Gaussian
    std::map<GaussianId, DeformationParams> forward_deform; // keyed by previous ids

    /// Throws PredictorError if sizes disagree or deformations are invalid.
    void validate() const;
};

/// An observed frame strictly inside the interval, at local time t in (0, 1).
struct TimedFrame {
    double t = 0.5;
    ImageBuffer frame;
    std::optional<Plane> mask;
};

/// Extra supervision a harness can hand to decode().
struct DecodeContext {
    std::vector<TimedFrame> intermediates;
    std::optional<Plane> mask_prev; // foreground mask at t = 0
    std::optional<Plane> mask_cur;  // foreground mask at t = 1
};

/// Stand-in for the learned encoder/decoder pair.
class Predictor {
  public:
    virtual ~Predictor() = default;

    virtual std::string name() const = 0;

    /// Static Gaussians for one RGB-D frame, plus the state decode() needs later.
    virtual EncodeResult encode(const ImageBuffer &frame, std::uint32_t frame_index) = 0;

    /// Bidirectional deformation between two encoded frames.
    virtual PredictorOutput decode(const PredictorState &prev, const PredictorState &cur,
                                   const DecodeContext &ctx = {}) = 0;
};

/// Replays a fixture file: a JSON array with one scene object per frame, each
/// optionally carrying "forward" (keyed by previous-frame ids) and "backward"
/// (keyed by current ids) blocks of {"velocity": [...], "gamma": [g0, g1]}.
class FixturePredictor final : public Predictor {
  public:
    struct Entry {
        Scene scene;
        std::map<GaussianId, DeformationParams> forward;
        std::map<GaussianId, DeformationParams> backward;
    };

    explicit FixturePredictor(std::vector<Entry> entries);
    static FixturePredictor from_json(const Json &j);
    static FixturePredictor load(const std::filesystem::path &path);
    Json to_json() const;

    std::string name() const override { return "fixture"; }
    EncodeResult encode(const ImageBuffer &frame, std::uint32_t frame_index) override;
    PredictorOutput decode(const PredictorState &prev, const PredictorState &cur,
                           const DecodeContext &ctx = {}) override;

    const std::vector<Entry> &entries() const { return entries_; }

  private:
    const Entry &entry(std::uint32_t frame_index) const;
    std::vector<Entry> entries_;
};

/// Deformation used when a fixture omits an id: no motion, full window.
DeformationParams identity_deformation(double t0, double gamma0 = 4.0);

} // namespace gss
