// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/stream_engine.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>

namespace gss {
namespace {

const OrthoCamera kCamera = OrthoCamera::unit_square(32, 32);

/// Same N Gaussians on every frame; ids {k, i}. Forward/backward use `fwd`/`bwd`.
FixturePredictor stationary_fixture(int frames, int n, const DeformationParams &fwd,
                                    const DeformationParams &bwd, std::uint64_t seed = 1) {
    Rng rng(seed);
    const auto bases = test::random_scene(rng, n);
    std::vector<FixturePredictor::Entry> entries;
    for (int k = 0; k < frames; ++k) {
        FixturePredictor::Entry e;
        e.scene.frame_time = k;
        for (int i = 0; i < n; ++i) {
            const GaussianId id{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i)};
            e.scene.gaussians.push_back({bases[i], identity_deformation(k), id});
            e.backward[id] = bwd;
            if (k > 0) {
                e.forward[{static_cast<std::uint32_t>(k - 1), static_cast<std::uint32_t>(i)}] = fwd;
            }
        }
        entries.push_back(std::move(e));
    }
    return FixturePredictor(std::move(entries));
}

DeformationParams persistent(double gamma0 = 1e-3) { return {Vec3::Zero(), gamma0, 1.0, 0.0}; }

FrameSource blank_frames(std::uint32_t n) {
    return [n](std::uint32_t k) -> std::optional<ImageBuffer> {
        if (k >= n) {
            return std::nullopt;
        }
        return ImageBuffer(32, 32);
    };
}

/// Wraps a predictor and fails decode on one chosen frame.
class FailingPredictor final : public Predictor {
  public:
    FailingPredictor(Predictor &inner, std::uint32_t fail_frame)
        : inner_(inner), fail_frame_(fail_frame) {}
    std::string name() const override { return inner_.name(); }
    EncodeResult encode(const ImageBuffer &f, std::uint32_t k) override {
        return inner_.encode(f, k);
    }
    PredictorOutput decode(const PredictorState &a, const PredictorState &b,
                           const DecodeContext &ctx) override {
        if (b.frame_index == fail_frame_) {
            throw PredictorError("injected failure");
        }
        return inner_.decode(a, b, ctx);
    }

  private:
    Predictor &inner_;
    std::uint32_t fail_frame_;
};

TEST(StreamInit, EmptyPredictorOutputGivesEmptyState) {
    FixturePredictor p({FixturePredictor::Entry{}});
    const StepResult r = stream_init(ImageBuffer(32, 32), p, kCamera, {});
    EXPECT_TRUE(r.state.gaussians.empty());
    EXPECT_EQ(r.state.frame_index, 0u);
    ASSERT_EQ(r.frames.size(), 1u);
}

TEST(StreamInit, PassesFixtureThroughWithIdentityLifecycle) {
    auto p = stationary_fixture(1, 7, persistent(), persistent());
    StreamConfig cfg;
    const StepResult r = stream_init(ImageBuffer(32, 32), p, kCamera, cfg);
    ASSERT_EQ(r.state.gaussians.size(), 7u);
    EXPECT_EQ(r.state.telemetry.emerging, 7u);
    EXPECT_EQ(r.state.telemetry.population, 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        const auto &g = r.state.gaussians[i];
        EXPECT_EQ(g.base, p.entries()[0].scene.gaussians[i].base);
        EXPECT_EQ(g.id, p.entries()[0].scene.gaussians[i].id);
        EXPECT_EQ(g.deform.velocity, Vec3::Zero());
        EXPECT_EQ(g.deform.gamma1, 1.0);
        EXPECT_EQ(g.deform.gamma0, cfg.init_gamma0);
        EXPECT_EQ(g.deform.t0, 0.0);
    }
}

TEST(StreamStep, StationaryFixtureRendersConstantAndBoundsPopulation) {
    const int n = 6;
    auto p = stationary_fixture(2, n, persistent(), persistent());
    StreamConfig cfg;
    cfg.render_fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    const StepResult init = stream_init(ImageBuffer(32, 32), p, kCamera, cfg);
    const StepResult r = stream_step(init.state, ImageBuffer(32, 32), p, kCamera, cfg);
    ASSERT_EQ(r.frames.size(), 5u);
    for (const auto &f : r.frames) {
        for (std::size_t i = 0; i < f.image.rgb.size(); ++i) {
            EXPECT_NEAR(f.image.rgb[i], r.frames[0].image.rgb[i], 1e-3);
        }
    }
    EXPECT_EQ(r.state.telemetry.persistent, static_cast<std::size_t>(n));
    EXPECT_EQ(r.state.telemetry.emerging, static_cast<std::size_t>(n));
    EXPECT_EQ(r.state.gaussians.size(), 2u * n);
}

TEST(StreamStep, ForcedVanishingPrunesPreviousFrame) {
    const int n = 5;
    const DeformationParams vanish{Vec3::Zero(), 500.0, 0.0, 0.0};
    auto p = stationary_fixture(2, n, vanish, persistent());
    const StepResult init = stream_init(ImageBuffer(32, 32), p, kCamera, {});
    const StepResult r = stream_step(init.state, ImageBuffer(32, 32), p, kCamera, {});
    EXPECT_EQ(r.state.telemetry.pruned, static_cast<std::size_t>(n));
    EXPECT_EQ(r.state.gaussians.size(), static_cast<std::size_t>(n));
    for (const auto &g : r.state.gaussians) {
        EXPECT_EQ(g.id.frame_index, 1u);
    }
}

TEST(StreamStep, ForwardFieldReplacesMatchedDeformation) {
    const DeformationParams fwd{Vec3(0.1, -0.05, 0), 3.0, 0.7, 0.0};
    auto p = stationary_fixture(2, 3, fwd, persistent());
    const StepResult init = stream_init(ImageBuffer(32, 32), p, kCamera, {});
    const StepResult r = stream_step(init.state, ImageBuffer(32, 32), p, kCamera, {});
    int seen = 0;
    for (const auto &g : r.state.gaussians) {
        if (g.id.frame_index == 0) {
            EXPECT_EQ(g.deform.velocity, fwd.velocity);
            EXPECT_EQ(g.deform.gamma0, fwd.gamma0);
            EXPECT_EQ(g.deform.gamma1, fwd.gamma1);
            EXPECT_EQ(g.deform.t0, 0.0);
            ++seen;
        } else {
            EXPECT_EQ(g.deform.t0, 1.0);
        }
    }
    EXPECT_EQ(seen, 3);
}

TEST(StreamStep, TaggedGaussianFollowsForwardField) {
    // One red Gaussian on frame 0, moving right; nothing on frame 1.
    FixturePredictor::Entry e0;
    StaticGaussian red;
    red.mu = Vec3(8.5 / 32, 16.5 / 32, 2); // centre of pixel (8, 16)
    red.scale = Vec3(0.03, 0.03, 0.03);
    red.color = Vec3(1, 0, 0);
    red.opacity = 0.9;
    e0.scene.gaussians.push_back({red, identity_deformation(0), {0, 0}});
    FixturePredictor::Entry e1;
    e1.forward[{0, 0}] = {Vec3(0.5, 0, 0), 4.0, 1.0, 0.0};
    FixturePredictor p({e0, e1});
    const StepResult init = stream_init(ImageBuffer(32, 32), p, kCamera, {});
    const StepResult r = stream_step(init.state, ImageBuffer(32, 32), p, kCamera, {});
    ASSERT_EQ(r.frames.size(), 3u);
    const auto peak_x = [](const ImageBuffer &img) {
        int best = 0;
        double best_v = -1;
        for (int x = 0; x < img.width; ++x) {
            if (img.r(x, 16, 0) > best_v) {
                best_v = img.r(x, 16, 0);
                best = x;
            }
        }
        return best;
    };
    EXPECT_EQ(peak_x(r.frames[0].image), 8);
    EXPECT_EQ(peak_x(r.frames[1].image), 16); // 0.5 * 0.5 * 32 px further
    EXPECT_EQ(peak_x(r.frames[2].image), 24);
}

TEST(StreamStep, FailureLeavesStateUntouched) {
    auto inner = stationary_fixture(3, 4, persistent(), persistent());
    FailingPredictor p(inner, 1);
    const StepResult init = stream_init(ImageBuffer(32, 32), p, kCamera, {});
    const CanonicalSceneState before = init.state;
    EXPECT_THROW(stream_step(init.state, ImageBuffer(32, 32), p, kCamera, {}), PredictorError);
    EXPECT_EQ(init.state, before);
}

TEST(StreamStep, UninitialisedStateRejected) {
    auto p = stationary_fixture(2, 1, persistent(), persistent());
    EXPECT_THROW(stream_step(CanonicalSceneState{}, ImageBuffer(32, 32), p, kCamera, {}), Error);
}

TEST(RunStream, SingleFrameIsInitOnly) {
    auto p = stationary_fixture(1, 3, persistent(), persistent());
    int renders = 0;
    StreamSinks sinks;
    sinks.on_render = [&](std::uint32_t, const RenderedFrame &) { ++renders; };
    const auto s = run_stream(blank_frames(1), p, kCamera, {}, sinks);
    EXPECT_EQ(s.frames, 1u);
    EXPECT_EQ(renders, 1);
    EXPECT_EQ(s.final_state.frame_index, 0u);
}

TEST(RunStream, StationaryPopulationSteadyAfterSecondFrame) {
    const int n = 5;
    auto p = stationary_fixture(20, n, persistent(4.0), persistent(4.0));
    const auto s = run_stream(blank_frames(20), p, kCamera, {});
    ASSERT_EQ(s.telemetry.size(), 20u);
    for (std::size_t k = 2; k < 20; ++k) {
        EXPECT_EQ(s.telemetry[k].population, s.telemetry[1].population) << "frame " << k;
        EXPECT_LE(s.telemetry[k].population, 2u * n);
    }
    EXPECT_EQ(s.telemetry[5].retired, static_cast<std::size_t>(n));
}

TEST(RunStream, FailedStepIsSkippedUnlessStrict) {
    auto inner = stationary_fixture(5, 3, persistent(), persistent());
    FailingPredictor p(inner, 2);
    const auto s = run_stream(blank_frames(5), p, kCamera, {});
    EXPECT_EQ(s.failed_steps, 1u);
    EXPECT_EQ(s.frames, 5u);
    EXPECT_EQ(s.final_state.frame_index, 3u);
    StreamConfig strict;
    strict.strict = true;
    EXPECT_THROW(run_stream(blank_frames(5), p, kCamera, strict), PredictorError);
}

TEST(RunStream, KeyFrameTimeConsistentAcrossIntervals) {
    auto p = stationary_fixture(4, 6, persistent(4.0), persistent(4.0));
    std::map<double, std::vector<ImageBuffer>> by_time;
    StreamSinks sinks;
    sinks.on_render = [&](std::uint32_t, const RenderedFrame &r) {
        by_time[r.t].push_back(r.image);
    };
    run_stream(blank_frames(4), p, kCamera, {}, sinks);
    for (double t : {1.0, 2.0}) {
        ASSERT_EQ(by_time[t].size(), 2u);
        const auto &a = by_time[t][0];
        const auto &b = by_time[t][1];
        for (std::size_t i = 0; i < a.rgb.size(); ++i) {
            EXPECT_NEAR(a.rgb[i], b.rgb[i], 1e-12);
        }
    }
}

TEST(Checkpoint, JsonRoundTripAndResumeAreExact) {
    const DeformationParams fwd{Vec3(0.01, 0, 0), 6.0, 0.8, 0.0};
    const DeformationParams bwd{Vec3(-0.01, 0, 0), 6.0, 0.8, 0.0};
    auto p = stationary_fixture(20, 5, fwd, bwd, 3);

    std::vector<std::pair<double, ImageBuffer>> full_renders;
    StreamSinks full_sinks;
    full_sinks.on_render = [&](std::uint32_t k, const RenderedFrame &r) {
        if (k > 10) {
            full_renders.emplace_back(r.t, r.image);
        }
    };
    const auto full = run_stream(blank_frames(20), p, kCamera, {}, full_sinks);

    const auto first = run_stream(blank_frames(11), p, kCamera, {});
    const std::string text = dump_json(first.final_state.to_json());
    const CanonicalSceneState restored = CanonicalSceneState::from_json(parse_json(text));
    EXPECT_EQ(restored, first.final_state);

    std::vector<std::pair<double, ImageBuffer>> resumed_renders;
    StreamSinks resumed_sinks;
    resumed_sinks.on_render = [&](std::uint32_t, const RenderedFrame &r) {
        resumed_renders.emplace_back(r.t, r.image);
    };
    const auto resumed = run_stream(blank_frames(20), p, kCamera, {}, resumed_sinks, restored);
    EXPECT_EQ(resumed.final_state, full.final_state);
    ASSERT_EQ(resumed_renders.size(), full_renders.size());
    for (std::size_t i = 0; i < full_renders.size(); ++i) {
        EXPECT_EQ(resumed_renders[i].first, full_renders[i].first);
        EXPECT_EQ(resumed_renders[i].second, full_renders[i].second);
    }
}

TEST(PredictorOutput, ValidateCatchesInconsistency) {
    PredictorOutput out;
    out.current_static.resize(2);
    out.current_ids = {{1, 0}, {1, 1}};
    out.backward_deform.resize(1);
    EXPECT_THROW(out.validate(), PredictorError);
    out.backward_deform.resize(2);
    EXPECT_NO_THROW(out.validate());
    out.backward_deform[1].velocity = Vec3(2, 0, 0);
    EXPECT_THROW(out.validate(), PredictorError);
}

TEST(FixturePredictor, DecodeIsStateless) {
    auto p = stationary_fixture(3, 4, persistent(), persistent());
    const auto s0 = p.encode(ImageBuffer(32, 32), 0).state;
    const auto s1 = p.encode(ImageBuffer(32, 32), 1).state;
    const auto s2 = p.encode(ImageBuffer(32, 32), 2).state;
    const auto a = p.decode(s0, s1);
    p.decode(s1, s2);
    const auto b = p.decode(s0, s1);
    EXPECT_EQ(a.current_ids, b.current_ids);
    EXPECT_EQ(a.backward_deform, b.backward_deform);
    EXPECT_EQ(a.forward_deform, b.forward_deform);
    EXPECT_THROW(p.encode(ImageBuffer(32, 32), 9), PredictorError);
}

TEST(FixturePredictor, JsonRoundTrip) {
    auto p = stationary_fixture(3, 4, {Vec3(0.1, 0, 0), 5, 0.5, 0}, persistent());
    const auto q = FixturePredictor::from_json(parse_json(dump_json(p.to_json())));
    ASSERT_EQ(q.entries().size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(q.entries()[k].scene, p.entries()[k].scene);
        EXPECT_EQ(q.entries()[k].forward, p.entries()[k].forward);
        EXPECT_EQ(q.entries()[k].backward, p.entries()[k].backward);
    }
    EXPECT_THROW(FixturePredictor::from_json(Json::object()), ParseError);
}

} // namespace
} // namespace gss
