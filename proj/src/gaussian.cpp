// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/gaussian.hpp"

#include "gsstream/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <unordered_set>

namespace gss {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Mat3 Quaternion::rotation() const {
    const double n = norm();
    const double qw = w / n, qx = x / n, qy = y / n, qz = z / n;
    Mat3 r;
    r << 1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy),
        2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx),
        2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy);
    return r;
}

Quaternion normalize_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 1e-12)) {
        throw DegenerateRotation(fmt::format("quaternion norm {} too small to normalise", n));
    }
    return {w / n, x / n, y / n, z / n};
}

Quaternion normalize_quaternion(const Quaternion &q) {
    return normalize_quaternion(q.w, q.x, q.y, q.z);
}

Mat3 covariance_from_rs(const Quaternion &q, const Vec3 &scale) {
    if (!(scale.array() > 0.0).all()) {
        throw InvalidScale(
            fmt::format("scale ({}, {}, {}) must be positive", scale.x(), scale.y(), scale.z()));
    }
    const Mat3 m = q.rotation() * scale.asDiagonal();
    Mat3 sigma = m * m.transpose();
    // Symmetrise exactly; the product is symmetric only up to rounding.
    return 0.5 * (sigma + sigma.transpose());
}

void validate(const StaticGaussian &g) {
    if (!g.mu.allFinite()) {
        throw Error("gaussian position is not finite");
    }
    if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) {
        throw InvalidScale("gaussian scale must be positive and finite");
    }
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
        throw Error(fmt::format("opacity {} outside [0,1]", g.opacity));
    }
    if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all())) {
        throw Error("colour components must lie in [0,1]");
    }
    if (!(g.rotation.norm() > 1e-12)) {
        throw DegenerateRotation("gaussian rotation has zero norm");
    }
}

void validate(const DeformationParams &d) {
    if (!((d.velocity.array().abs() <= 1.0).all())) {
        throw Error("velocity components must lie in [-1,1]");
    }
    if (!(d.gamma0 > 0.0) || !std::isfinite(d.gamma0)) {
        throw Error(fmt::format("gamma0 {} must be positive", d.gamma0));
    }
    if (!(d.gamma1 >= 0.0 && d.gamma1 <= 1.0)) {
        throw Error(fmt::format("gamma1 {} outside [0,1]", d.gamma1));
    }
    if (!std::isfinite(d.t0)) {
        throw Error("t0 is not finite");
    }
}

void check_unique_ids(const std::vector<DynamicGaussian> &gaussians) {
    std::unordered_set<GaussianId> seen;
    seen.reserve(gaussians.size());
    for (const auto &g : gaussians) {
        if (!seen.insert(g.id).second) {
            throw Error(fmt::format("duplicate gaussian id ({}, {})", g.id.frame_index,
                                    g.id.token_index));
        }
    }
}

} // namespace gss
