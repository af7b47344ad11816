// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/gaussian.hpp"

namespace gss {

/// Rigid canonical-to-camera transform.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
};

/// Orthographic camera: (u, v) = (fx x + cx, fy y + cy) in camera coordinates.
/// Pixel (i, j) samples the image plane at (i + 0.5, j + 0.5).
struct OrthoCamera {
    double fx = 256.0;
    double fy = 144.0;
    double cx = 0.0;
    double cy = 0.0;
    RigidTransform view;
    int width = 256;
    int height = 144;

    /// Throws gss::Error on non-positive focal/size or non-orthonormal rotation.
    void validate() const;

    /// Camera whose canonical unit square [0,1]^2 covers the whole image.
    static OrthoCamera unit_square(int width, int height);
};

} // namespace gss
