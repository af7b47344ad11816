// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/scene_io.hpp"

#include "gsstream/errors.hpp"
#include "gsstream/image_io.hpp"

#include <fmt/format.h>

#include <cmath>

namespace gss {

namespace {

double number(const Json &j, const char *what) {
    if (!j.is_number()) {
        throw ParseError(fmt::format("field '{}' must be a number", what));
    }
    return j.get<double>();
}

const Json &field(const Json &j, const char *name) {
    if (!j.is_object() || !j.contains(name)) {
        throw ParseError(fmt::format("missing field '{}'", name));
    }
    return j.at(name);
}

} // namespace

Json vec3_to_json(const Vec3 &v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json &j, const char *what) {
    if (!j.is_array() || j.size() != 3) {
        throw ParseError(fmt::format("field '{}' must be a 3-element array", what));
    }
    return {number(j[0], what), number(j[1], what), number(j[2], what)};
}

Json gaussian_to_json(const DynamicGaussian &g) {
    Json j;
    j["id"] = Json::array({g.id.frame_index, g.id.token_index});
    j["mu"] = vec3_to_json(g.base.mu);
    j["scale"] = vec3_to_json(g.base.scale);
    j["quat"] = Json::array({g.base.rotation.w, g.base.rotation.x, g.base.rotation.y,
                             g.base.rotation.z});
    j["alpha"] = g.base.opacity;
    j["color"] = vec3_to_json(g.base.color);
    j["velocity"] = vec3_to_json(g.deform.velocity);
    j["gamma"] = Json::array({g.deform.gamma0, g.deform.gamma1});
    j["t0"] = g.deform.t0;
    return j;
}

DynamicGaussian gaussian_from_json(const Json &j) {
    DynamicGaussian g;
    const Json &id = field(j, "id");
    if (!id.is_array() || id.size() != 2 || !id[0].is_number_unsigned() ||
        !id[1].is_number_unsigned()) {
        throw ParseError("field 'id' must be [frame, token] non-negative integers");
    }
    g.id = {id[0].get<std::uint32_t>(), id[1].get<std::uint32_t>()};
    g.base.mu = vec3_from_json(field(j, "mu"), "mu");
    g.base.scale = vec3_from_json(field(j, "scale"), "scale");
    const Json &q = field(j, "quat");
    if (!q.is_array() || q.size() != 4) {
        throw ParseError("field 'quat' must be a 4-element array");
    }
    Quaternion raw{number(q[0], "quat"), number(q[1], "quat"), number(q[2], "quat"),
                   number(q[3], "quat")};
    // Leave already-unit quaternions untouched so reloads are bit exact.
    g.base.rotation = std::abs(raw.norm() - 1.0) > 1e-12 ? normalize_quaternion(raw) : raw;
    g.base.opacity = number(field(j, "alpha"), "alpha");
    g.base.color = vec3_from_json(field(j, "color"), "color");
    if (j.contains("velocity")) {
        g.deform.velocity = vec3_from_json(j.at("velocity"), "velocity");
    }
    if (j.contains("gamma")) {
        const Json &gm = j.at("gamma");
        if (!gm.is_array() || gm.size() != 2) {
            throw ParseError("field 'gamma' must be [gamma0, gamma1]");
        }
        g.deform.gamma0 = number(gm[0], "gamma");
        g.deform.gamma1 = number(gm[1], "gamma");
    }
    if (j.contains("t0")) {
        g.deform.t0 = number(j.at("t0"), "t0");
    }
    try {
        validate(g.base);
        validate(g.deform);
    } catch (const ParseError &) {
        throw;
    } catch (const Error &e) {
        throw ParseError(fmt::format("gaussian ({}, {}): {}", g.id.frame_index,
                                     g.id.token_index, e.what()));
    }
    return g;
}

Json scene_to_json(const Scene &scene) {
    Json j;
    j["frame_time"] = scene.frame_time;
    j["gaussians"] = Json::array();
    for (const auto &g : scene.gaussians) {
        j["gaussians"].push_back(gaussian_to_json(g));
    }
    return j;
}

Scene scene_from_json(const Json &j) {
    Scene scene;
    scene.frame_time = number(field(j, "frame_time"), "frame_time");
    const Json &list = field(j, "gaussians");
    if (!list.is_array()) {
        throw ParseError("field 'gaussians' must be an array");
    }
    for (const auto &g : list) {
        scene.gaussians.push_back(gaussian_from_json(g));
    }
    try {
        check_unique_ids(scene.gaussians);
    } catch (const Error &e) {
        throw ParseError(e.what());
    }
    return scene;
}

std::string dump_json(const Json &j, int indent) { return j.dump(indent); }

Json parse_json(const std::string &text) {
    try {
        return Json::parse(text);
    } catch (const Json::exception &e) {
        throw ParseError(fmt::format("invalid JSON: {}", e.what()));
    }
}

Json load_json(const std::filesystem::path &path) { return parse_json(read_file(path)); }

void save_json(const std::filesystem::path &path, const Json &j, int indent) {
    write_file(path, dump_json(j, indent) + "\n");
}

Scene load_scene(const std::filesystem::path &path) { return scene_from_json(load_json(path)); }

void save_scene(const std::filesystem::path &path, const Scene &scene) {
    save_json(path, scene_to_json(scene));
}

std::string id_key(const GaussianId &id) {
    return fmt::format("{}:{}", id.frame_index, id.token_index);
}

GaussianId parse_id_key(const std::string &key) {
    const auto colon = key.find(':');
    if (colon == std::string::npos) {
        throw ParseError(fmt::format("id key '{}' is not 'frame:token'", key));
    }
    try {
        std::size_t used = 0;
        const unsigned long f = std::stoul(key.substr(0, colon), &used);
        const unsigned long t = std::stoul(key.substr(colon + 1));
        return {static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(t)};
    } catch (const std::exception &) {
        throw ParseError(fmt::format("id key '{}' is not 'frame:token'", key));
    }
}

} // namespace gss
