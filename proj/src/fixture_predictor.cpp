// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/errors.hpp"
#include "gsstream/predictor.hpp"

#include <fmt/format.h>

namespace gss {

namespace {

std::map<GaussianId, DeformationParams> parse_block(const Json &j, const char *name) {
    std::map<GaussianId, DeformationParams> out;
    if (!j.contains(name)) {
        return out;
    }
    const Json &block = j.at(name);
    if (!block.is_object()) {
        throw ParseError(fmt::format("fixture block '{}' must be an object keyed by id", name));
    }
    for (const auto &[key, value] : block.items()) {
        DeformationParams d;
        if (value.contains("velocity")) {
            d.velocity = vec3_from_json(value.at("velocity"), "velocity");
        }
        if (value.contains("gamma")) {
            const Json &g = value.at("gamma");
            if (!g.is_array() || g.size() != 2) {
                throw ParseError("fixture 'gamma' must be [gamma0, gamma1]");
            }
            d.gamma0 = g[0].get<double>();
            d.gamma1 = g[1].get<double>();
        }
        try {
            validate(d);
        } catch (const Error &e) {
            throw ParseError(fmt::format("fixture {} '{}': {}", name, key, e.what()));
        }
        out.emplace(parse_id_key(key), d);
    }
    return out;
}

Json block_to_json(const std::map<GaussianId, DeformationParams> &block) {
    Json j = Json::object();
    for (const auto &[id, d] : block) {
        j[id_key(id)] = Json{{"velocity", vec3_to_json(d.velocity)},
                             {"gamma", Json::array({d.gamma0, d.gamma1})}};
    }
    return j;
}

} // namespace

FixturePredictor::FixturePredictor(std::vector<Entry> entries) : entries_(std::move(entries)) {}

FixturePredictor FixturePredictor::from_json(const Json &j) {
    if (!j.is_array()) {
        throw ParseError("fixture file must be a JSON array with one entry per frame");
    }
    std::vector<Entry> entries;
    for (const auto &item : j) {
        Entry e;
        e.scene = scene_from_json(item);
        e.forward = parse_block(item, "forward");
        e.backward = parse_block(item, "backward");
        entries.push_back(std::move(e));
    }
    return FixturePredictor(std::move(entries));
}

FixturePredictor FixturePredictor::load(const std::filesystem::path &path) {
    return from_json(load_json(path));
}

Json FixturePredictor::to_json() const {
    Json j = Json::array();
    for (const auto &e : entries_) {
        Json item = scene_to_json(e.scene);
        item["forward"] = block_to_json(e.forward);
        item["backward"] = block_to_json(e.backward);
        j.push_back(std::move(item));
    }
    return j;
}

const FixturePredictor::Entry &FixturePredictor::entry(std::uint32_t frame_index) const {
    if (frame_index >= entries_.size()) {
        throw PredictorError(
            fmt::format("fixture has no entry for frame {} ({} entries)", frame_index,
                        entries_.size()));
    }
    return entries_[frame_index];
}

EncodeResult FixturePredictor::encode(const ImageBuffer &, std::uint32_t frame_index) {
    const Entry &e = entry(frame_index);
    EncodeResult out;
    out.state.backend = name();
    out.state.frame_index = frame_index;
    out.state.payload = Json{{"frame", frame_index}};
    for (const auto &g : e.scene.gaussians) {
        out.gaussians.push_back(g.base);
        out.ids.push_back(g.id);
    }
    return out;
}

PredictorOutput FixturePredictor::decode(const PredictorState &prev, const PredictorState &cur,
                                         const DecodeContext &) {
    if (prev.backend != name() || cur.backend != name()) {
        throw PredictorError("fixture decode given a state from another backend");
    }
    const Entry &e = entry(cur.frame_index);
    PredictorOutput out;
    for (const auto &g : e.scene.gaussians) {
        out.current_static.push_back(g.base);
        out.current_ids.push_back(g.id);
        const auto it = e.backward.find(g.id);
        DeformationParams d = it != e.backward.end() ? it->second : identity_deformation(1.0);
        d.t0 = 1.0;
        out.backward_deform.push_back(d);
    }
    for (const auto &[id, d] : e.forward) {
        DeformationParams f = d;
        f.t0 = 0.0;
        out.forward_deform.emplace(id, f);
    }
    return out;
}

} // namespace gss
