// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <vector>

namespace gss {

/// Planar render target: interleaved RGB, blended depth and accumulated alpha,
/// all row-major.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;   // height * width * 3
    std::vector<double> depth; // height * width
    std::vector<double> alpha; // height * width

    ImageBuffer() = default;
    ImageBuffer(int w, int h)
        : width(w), height(h), rgb(std::size_t(w) * h * 3, 0.0), depth(std::size_t(w) * h, 0.0),
          alpha(std::size_t(w) * h, 0.0) {}

    std::size_t pixel_count() const { return std::size_t(width) * height; }
    std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }

    double &r(int x, int y, int c) { return rgb[index(x, y) * 3 + c]; }
    double r(int x, int y, int c) const { return rgb[index(x, y) * 3 + c]; }

    friend bool operator==(const ImageBuffer &, const ImageBuffer &) = default;
};

/// A single-channel plane with its dimensions.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0) : width(w), height(h), values(std::size_t(w) * h, fill) {}

    std::size_t size() const { return values.size(); }
    friend bool operator==(const Plane &, const Plane &) = default;
};

inline Plane depth_plane(const ImageBuffer &img) {
    Plane p(img.width, img.height);
    p.values = img.depth;
    return p;
}

inline Plane alpha_plane(const ImageBuffer &img) {
    Plane p(img.width, img.height);
    p.values = img.alpha;
    return p;
}

} // namespace gss
