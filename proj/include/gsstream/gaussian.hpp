// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <functional>
#include <vector>

namespace gss {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Smallest admissible scale, in canonical units. Keeps the covariance invertible.
inline constexpr double kMinScale = 1e-4;

/// Stable identity of a Gaussian: the frame that produced it and its token slot.
struct GaussianId {
    std::uint32_t frame_index = 0;
    std::uint32_t token_index = 0;

    friend auto operator<=>(const GaussianId &, const GaussianId &) = default;
};

/// Unit quaternion (w, x, y, z).
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quaternion identity() { return {}; }

    double norm() const;

    /// Rotation matrix of q / |q|.
    Mat3 rotation() const;

    friend bool operator==(const Quaternion &, const Quaternion &) = default;
};

/// Rescale a raw 4-vector to unit norm. Throws DegenerateRotation when |q| <= 1e-12.
Quaternion normalize_quaternion(double w, double x, double y, double z);
Quaternion normalize_quaternion(const Quaternion &q);

struct StaticGaussian {
    Vec3 mu = Vec3::Zero();
    Vec3 scale = Vec3::Constant(0.01);
    Quaternion rotation;
    double opacity = 1.0;
    Vec3 color = Vec3::Zero();

    friend bool operator==(const StaticGaussian &, const StaticGaussian &) = default;
};

/// Linear velocity plus opacity lifecycle. `t0` is the creation time of the
/// Gaussian in whatever time base the owner uses (local 0/1 or global frame).
struct DeformationParams {
    Vec3 velocity = Vec3::Zero();
    double gamma0 = 4.0;
    double gamma1 = 1.0;
    double t0 = 0.0;

    friend bool operator==(const DeformationParams &, const DeformationParams &) = default;
};

struct DynamicGaussian {
    StaticGaussian base;
    DeformationParams deform;
    GaussianId id;

    friend bool operator==(const DynamicGaussian &, const DynamicGaussian &) = default;
};

/// Sigma = R S S^T R^T. Throws InvalidScale for any non-positive scale.
Mat3 covariance_from_rs(const Quaternion &q, const Vec3 &scale);

/// Throws on invalid scale, opacity/colour out of [0,1] or non-finite fields.
void validate(const StaticGaussian &g);
void validate(const DeformationParams &d);

/// Throws gss::Error if two Gaussians share an id.
void check_unique_ids(const std::vector<DynamicGaussian> &gaussians);

} // namespace gss

template <> struct std::hash<gss::GaussianId> {
    std::size_t operator()(const gss::GaussianId &id) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t(id.frame_index) << 32) | id.token_index);
    }
};
