// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/config.hpp"

#include "gsstream/errors.hpp"
#include "gsstream/image_io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <functional>
#include <sstream>

namespace gss {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string &key, const std::string &v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError(fmt::format("config key '{}': '{}' is not a number", key, v));
    }
    return out;
}

template <typename Int> Int to_int(const std::string &key, const std::string &v) {
    Int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError(fmt::format("config key '{}': '{}' is not an integer", key, v));
    }
    return out;
}

bool to_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ParseError(fmt::format("config key '{}': '{}' is not a boolean", key, v));
}

std::vector<double> to_list(const std::string &key, const std::string &v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(to_double(key, trim(item)));
    }
    if (out.empty()) {
        throw ParseError(fmt::format("config key '{}': empty list", key));
    }
    return out;
}

} // namespace

ConfigMap parse_config(const std::string &text) {
    ConfigMap map;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(fmt::format("config line {}: expected 'key = value'", lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(fmt::format("config line {}: empty key", lineno));
        }
        if (map.contains(key)) {
            throw ParseError(fmt::format("config line {}: duplicate key '{}'", lineno, key));
        }
        map[key] = value;
    }
    return map;
}

ConfigMap load_config(const std::filesystem::path &path) {
    try {
        return parse_config(read_file(path));
    } catch (const ParseError &) {
        throw;
    } catch (const Error &e) {
        throw ParseError(e.what());
    }
}

void RunConfig::apply(const ConfigMap &map) {
    using Setter = std::function<void(const std::string &, const std::string &)>;
    const auto num = [](double &field) {
        return Setter([&field](const std::string &k, const std::string &v) {
            field = to_double(k, v);
        });
    };
    const auto integer = [](int &field) {
        return Setter([&field](const std::string &k, const std::string &v) {
            field = to_int<int>(k, v);
        });
    };
    const auto flag = [](bool &field) {
        return Setter([&field](const std::string &k, const std::string &v) {
            field = to_bool(k, v);
        });
    };
    const auto cam_num = [this](double &field) {
        return Setter([this, &field](const std::string &k, const std::string &v) {
            field = to_double(k, v);
            camera_explicit = true;
        });
    };
    const auto cam_int = [this](int &field) {
        return Setter([this, &field](const std::string &k, const std::string &v) {
            field = to_int<int>(k, v);
            camera_explicit = true;
        });
    };

    const std::map<std::string, Setter> setters{
        {"camera.fx", cam_num(camera.fx)},
        {"camera.fy", cam_num(camera.fy)},
        {"camera.cx", cam_num(camera.cx)},
        {"camera.cy", cam_num(camera.cy)},
        {"camera.width", cam_int(camera.width)},
        {"camera.height", cam_int(camera.height)},
        {"seed",
         [this](const std::string &k, const std::string &v) {
             seed = to_int<std::uint64_t>(k, v);
         }},
        {"predictor", [this](const std::string &, const std::string &v) { predictor = v; }},
        {"threads", integer(threads)},
        {"paths.fixture", [this](const std::string &, const std::string &v) { fixture = v; }},
        {"paths.out", [this](const std::string &, const std::string &v) { out = v; }},
        {"fit.n_gaussians", integer(fit.n_gaussians)},
        {"fit.iterations", integer(fit.iterations)},
        {"fit.decode_iterations", integer(fit.decode_iterations)},
        {"fit.step_size", num(fit.step_size)},
        {"fit.candidates", integer(fit.candidates)},
        {"fit.tolerance", num(fit.tolerance)},
        {"fit.patience", integer(fit.patience)},
        {"fit.deterministic_init", flag(fit.deterministic_init)},
        {"fit.offset_std_xy", num(fit.offset_std_xy)},
        {"fit.offset_std_z", num(fit.offset_std_z)},
        {"fit.init_opacity", num(fit.init_opacity)},
        {"fit.init_gamma0", num(fit.init_gamma0)},
        {"fit.init_gamma1", num(fit.init_gamma1)},
        {"loss.lambda_mse", num(fit.weights.lambda_mse)},
        {"loss.lambda_depth", num(fit.weights.lambda_depth)},
        {"loss.lambda_mask", num(fit.weights.lambda_mask)},
        {"loss.decay_w", num(fit.weights.decay_w)},
        {"stream.prune_epsilon", num(stream.prune_epsilon)},
        {"stream.init_gamma0", num(stream.init_gamma0)},
        {"stream.strict", flag(stream.strict)},
        {"stream.render_fractions",
         [this](const std::string &k, const std::string &v) {
             stream.render_fractions = to_list(k, v);
         }},
        {"raster.tile_size", integer(stream.raster.tile_size)},
        {"raster.max_alpha", num(stream.raster.max_alpha)},
        {"raster.min_transmittance", num(stream.raster.min_transmittance)},
        {"raster.blur", num(stream.raster.blur)},
        {"raster.cutoff_sigma", num(stream.raster.cutoff_sigma)},
    };
    for (const auto &[key, value] : map) {
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ParseError(fmt::format("unknown config key '{}'", key));
        }
        it->second(key, value);
    }
    if (threads < 0) {
        throw ParseError("threads must be >= 0");
    }
    stream.raster.threads = threads;
    fit.raster = stream.raster;
    fit.seed = seed;
}

OrthoCamera RunConfig::camera_for(int width, int height) const {
    if (camera_explicit) {
        if (camera.width != width || camera.height != height) {
            throw ShapeError(fmt::format("frames are {}x{} but the configured camera is {}x{}",
                                         width, height, camera.width, camera.height));
        }
        return camera;
    }
    return OrthoCamera::unit_square(width, height);
}

RunConfig RunConfig::from_map(const ConfigMap &map) {
    RunConfig cfg;
    cfg.apply(map);
    return cfg;
}

} // namespace gss
