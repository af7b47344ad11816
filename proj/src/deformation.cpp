// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/deformation.hpp"

#include "gsstream/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gss {

namespace {

double log_sigmoid(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

} // namespace

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_window(double t0, double t) {
    // Global times are sums of integers and fractions; allow rounding slack.
    if (!(std::abs(t - t0) <= kDeformationWindow + 1e-9)) {
        throw OutOfWindow(
            fmt::format("time {} is outside the deformation window of t0 = {}", t, t0));
    }
}

Vec3 position_at(const Vec3 &mu0, const Vec3 &velocity, double t0, double t) {
    check_window(t0, t);
    return mu0 + velocity * (t - t0);
}

double opacity_at(double alpha0, double gamma0, double gamma1, double t0, double t) {
    const double dt = std::abs(t - t0);
    const double a = -gamma0 * (dt - gamma1);
    const double b = gamma0 * gamma1;
    const double ratio = std::exp(log_sigmoid(a) - log_sigmoid(b));
    return std::clamp(alpha0 * ratio, 0.0, alpha0);
}

OpacityGrad opacity_at_grad(double alpha0, double gamma0, double gamma1, double t0, double t) {
    const double dt = std::abs(t - t0);
    const double a = -gamma0 * (dt - gamma1);
    const double b = gamma0 * gamma1;
    const double ratio = std::exp(log_sigmoid(a) - log_sigmoid(b));
    OpacityGrad out;
    out.value = std::clamp(alpha0 * ratio, 0.0, alpha0);
    if (ratio > 1.0) {
        // Clamp active: only reachable through rounding at dt == 0.
        out.d_alpha0 = 1.0;
        return out;
    }
    // d log sigmoid(x) / dx = 1 - sigmoid(x) = sigmoid(-x)
    const double sa = sigmoid(-a);
    const double sb = sigmoid(-b);
    out.d_alpha0 = ratio;
    out.d_gamma0 = out.value * (sa * -(dt - gamma1) - sb * gamma1);
    out.d_gamma1 = out.value * (sa * gamma0 - sb * gamma0);
    return out;
}

double depth_map(double z_inv) {
    const double z = std::max(z_inv, -1.0 + kInverseDepthEpsilon);
    return 2.0 / (1.0 + z);
}

double depth_map_derivative(double z_inv) {
    if (z_inv < -1.0 + kInverseDepthEpsilon) {
        return 0.0;
    }
    const double d = 1.0 + z_inv;
    return -2.0 / (d * d);
}

double inverse_depth_map(double depth) { return 2.0 / depth - 1.0; }

Vec3 pixel_aligned_position(double u, double v, const Vec3 &offset) {
    return {u + offset.x(), v + offset.y(), depth_map(offset.z())};
}

StaticGaussian materialize(const DynamicGaussian &g, double t) {
    StaticGaussian out = g.base;
    out.mu = position_at(g.base.mu, g.deform.velocity, g.deform.t0, t);
    out.opacity = opacity_at(g.base.opacity, g.deform.gamma0, g.deform.gamma1, g.deform.t0, t);
    return out;
}

} // namespace gss
