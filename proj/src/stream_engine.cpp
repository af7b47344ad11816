// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/stream_engine.hpp"

#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <unordered_map>

namespace gss {

Json StepTelemetry::to_json() const {
    return Json{{"frame", frame},       {"persistent", persistent}, {"emerging", emerging},
                {"pruned", pruned},     {"retired", retired},       {"population", population}};
}

Json CanonicalSceneState::to_json() const {
    Scene scene{double(frame_index), gaussians};
    Json j = scene_to_json(scene);
    j["frame_index"] = frame_index;
    j["max_frame_count"] = max_frame_count;
    j["telemetry"] = telemetry.to_json();
    j["predictor_state"] = prev_predictor_state ? prev_predictor_state->to_json() : Json();
    return j;
}

CanonicalSceneState CanonicalSceneState::from_json(const Json &j) {
    CanonicalSceneState s;
    const Scene scene = scene_from_json(j);
    s.gaussians = scene.gaussians;
    if (!j.contains("frame_index")) {
        throw ParseError("checkpoint is missing 'frame_index'");
    }
    s.frame_index = j.at("frame_index").get<std::uint32_t>();
    s.max_frame_count = j.value("max_frame_count", std::size_t(0));
    if (j.contains("predictor_state") && !j.at("predictor_state").is_null()) {
        s.prev_predictor_state = PredictorState::from_json(j.at("predictor_state"));
    }
    if (j.contains("telemetry")) {
        const Json &t = j.at("telemetry");
        s.telemetry.frame = t.value("frame", 0u);
        s.telemetry.persistent = t.value("persistent", std::size_t(0));
        s.telemetry.emerging = t.value("emerging", std::size_t(0));
        s.telemetry.pruned = t.value("pruned", std::size_t(0));
        s.telemetry.retired = t.value("retired", std::size_t(0));
        s.telemetry.population = t.value("population", std::size_t(0));
    }
    return s;
}

namespace {

std::vector<RenderedFrame> render_interval(const std::vector<DynamicGaussian> &gaussians,
                                           double start, const OrthoCamera &camera,
                                           const StreamConfig &cfg) {
    std::vector<RenderedFrame> out;
    for (const double f : cfg.render_fractions) {
        if (f < 0.0 || f > 1.0) {
            throw Error(fmt::format("render fraction {} outside [0,1]", f));
        }
        const double t = start + f;
        out.push_back({t, render_at(gaussians, t, camera, cfg.raster)});
    }
    return out;
}

} // namespace

StepResult stream_init(const ImageBuffer &first_frame, Predictor &predictor,
                       const OrthoCamera &camera, const StreamConfig &cfg) {
    EncodeResult enc = predictor.encode(first_frame, 0);
    if (enc.ids.size() != enc.gaussians.size()) {
        throw PredictorError("encode returned mismatched id and gaussian lists");
    }
    StepResult out;
    CanonicalSceneState &s = out.state;
    s.frame_index = 0;
    s.gaussians.reserve(enc.gaussians.size());
    for (std::size_t i = 0; i < enc.gaussians.size(); ++i) {
        s.gaussians.push_back({enc.gaussians[i], identity_deformation(0.0, cfg.init_gamma0),
                               enc.ids[i]});
    }
    check_unique_ids(s.gaussians);
    s.prev_predictor_state = std::move(enc.state);
    s.max_frame_count = s.gaussians.size();
    s.telemetry = {0, 0, s.gaussians.size(), 0, 0, s.gaussians.size()};
    out.frames.push_back({0.0, render_at(s.gaussians, 0.0, camera, cfg.raster)});
    return out;
}

StepResult stream_step(const CanonicalSceneState &state, const ImageBuffer &frame,
                       Predictor &predictor, const OrthoCamera &camera, const StreamConfig &cfg,
                       const DecodeContext &ctx, std::optional<std::uint32_t> source_index) {
    if (!state.prev_predictor_state) {
        throw Error("stream_step called on an uninitialised state");
    }
    const std::uint32_t k = state.frame_index + 1;
    const double t_prev = double(k - 1);
    const double t_cur = double(k);

    // 1. prediction
    EncodeResult enc = predictor.encode(frame, source_index.value_or(k));
    PredictorOutput pred = predictor.decode(*state.prev_predictor_state, enc.state, ctx);
    pred.validate();

    StepResult out;
    CanonicalSceneState &s = out.state;
    s.frame_index = k;
    StepTelemetry tel;
    tel.frame = k;

    // Gaussians whose window ended at k-1 cannot take part in [k-1, k].
    std::vector<DynamicGaussian> live;
    live.reserve(state.gaussians.size() + pred.current_static.size());
    for (const auto &g : state.gaussians) {
        if (g.deform.t0 < t_prev) {
            ++tel.retired;
        } else {
            live.push_back(g);
        }
    }

    // 2. update: matched previous-frame Gaussians take the new forward field.
    std::vector<bool> matched(live.size(), false);
    for (std::size_t i = 0; i < live.size(); ++i) {
        auto &g = live[i];
        if (g.deform.t0 != t_prev) {
            continue;
        }
        const auto it = pred.forward_deform.find(g.id);
        if (it == pred.forward_deform.end()) {
            continue;
        }
        g.deform = it->second;
        g.deform.t0 = t_prev + it->second.t0;
        matched[i] = true;
    }
    const std::size_t previous_count = live.size();

    // 3. fuse the current frame with its backward field.
    for (std::size_t i = 0; i < pred.current_static.size(); ++i) {
        DeformationParams d = pred.backward_deform[i];
        d.t0 = t_prev + d.t0;
        live.push_back({pred.current_static[i], d, pred.current_ids[i]});
    }
    check_unique_ids(live);

    // 4. render the interval.
    out.frames = render_interval(live, t_prev, camera, cfg);

    // 5. prune by lifecycle opacity at t_k.
    s.gaussians.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
        const auto &g = live[i];
        const double a =
            opacity_at(g.base.opacity, g.deform.gamma0, g.deform.gamma1, g.deform.t0, t_cur);
        if (a <= cfg.prune_epsilon) {
            ++tel.pruned;
            continue;
        }
        if (i < previous_count) {
            tel.persistent += matched[i] ? 1 : 0;
        } else {
            ++tel.emerging;
        }
        s.gaussians.push_back(g);
    }
    tel.population = s.gaussians.size();

    // 6. remember the predictor state.
    s.prev_predictor_state = std::move(enc.state);
    s.max_frame_count = std::max(state.max_frame_count, pred.current_static.size());
    s.telemetry = tel;
    return out;
}

StreamSummary run_stream(const FrameSource &frames, Predictor &predictor,
                         const OrthoCamera &camera, const StreamConfig &cfg,
                         const StreamSinks &sinks, std::optional<CanonicalSceneState> resume) {
    StreamSummary summary;
    CanonicalSceneState state;
    std::uint32_t next = 0;
    const auto emit = [&](std::uint32_t frame, const StepResult &r) {
        if (sinks.on_render) {
            for (const auto &f : r.frames) {
                sinks.on_render(frame, f);
            }
        }
        if (sinks.on_telemetry) {
            sinks.on_telemetry(r.state.telemetry);
        }
        summary.telemetry.push_back(r.state.telemetry);
    };
    const auto check_bound = [&](const CanonicalSceneState &s) {
        if (s.gaussians.size() > 2 * s.max_frame_count) {
            throw Error(fmt::format("population {} exceeds twice the per-frame count {}",
                                    s.gaussians.size(), s.max_frame_count));
        }
    };

    if (resume) {
        state = std::move(*resume);
        next = state.frame_index + 1;
    } else {
        const auto first = frames(0);
        if (!first) {
            throw Error("stream has no frames");
        }
        StepResult r = stream_init(*first, predictor, camera, cfg);
        check_bound(r.state);
        emit(0, r);
        state = std::move(r.state);
        summary.frames = 1;
        next = 1;
    }

    for (;; ++next) {
        const auto frame = frames(next);
        if (!frame) {
            break;
        }
        ++summary.frames;
        try {
            StepResult r = stream_step(state, *frame, predictor, camera, cfg, {}, next);
            check_bound(r.state);
            emit(next, r);
            state = std::move(r.state);
        } catch (const Error &e) {
            if (cfg.strict) {
                throw;
            }
            ++summary.failed_steps;
            spdlog::error("stream step for frame {} failed: {}; keeping previous state", next,
                          e.what());
        }
    }
    summary.final_state = std::move(state);
    return summary;
}

} // namespace gss
