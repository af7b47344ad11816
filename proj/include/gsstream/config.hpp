// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/camera.hpp"
#include "gsstream/fit_predictor.hpp"
#include "gsstream/stream_engine.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace gss {

/// Flat `section.key = value` document; `#` starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string &text);
ConfigMap load_config(const std::filesystem::path &path);

struct RunConfig {
    OrthoCamera camera;
    bool camera_explicit = false; // any camera.* key given; otherwise fit to the frames
    std::uint64_t seed = 0;
    FitConfig fit;
    StreamConfig stream;
    std::string predictor = "fixture";
    std::filesystem::path fixture;
    std::filesystem::path out = "out";
    int threads = 1;

    /// Apply every key of `map`; unknown keys and malformed values throw ParseError.
    void apply(const ConfigMap &map);

    /// Camera for frames of the given size: the configured one when explicit,
    /// otherwise the unit-square camera for that canvas.
    OrthoCamera camera_for(int width, int height) const;

    static RunConfig from_map(const ConfigMap &map);
};

} // namespace gss
