// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/gaussian.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace gss {

using Json = nlohmann::json;

/// A Gaussian population at a given stream time.
struct Scene {
    double frame_time = 0.0;
    std::vector<DynamicGaussian> gaussians;

    friend bool operator==(const Scene &, const Scene &) = default;
};

Json gaussian_to_json(const DynamicGaussian &g);
/// Throws ParseError on missing or malformed fields. Rotations are normalised.
DynamicGaussian gaussian_from_json(const Json &j);

Json scene_to_json(const Scene &scene);
Scene scene_from_json(const Json &j);

/// Doubles are written in shortest round-trip form, so reloads are bit exact.
std::string dump_json(const Json &j, int indent = -1);
Json parse_json(const std::string &text);
Json load_json(const std::filesystem::path &path);
void save_json(const std::filesystem::path &path, const Json &j, int indent = -1);

Scene load_scene(const std::filesystem::path &path);
void save_scene(const std::filesystem::path &path, const Scene &scene);

/// "frame:token" key used for id-keyed JSON objects.
std::string id_key(const GaussianId &id);
GaussianId parse_id_key(const std::string &key);

Json vec3_to_json(const Vec3 &v);
Vec3 vec3_from_json(const Json &j, const char *what);

} // namespace gss
