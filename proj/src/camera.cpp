// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/camera.hpp"

#include "gsstream/errors.hpp"

namespace gss {

void OrthoCamera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) {
        throw Error("camera focal scales must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw Error("camera image size must be positive");
    }
    const Mat3 should_be_identity = view.rotation * view.rotation.transpose();
    if (!((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9)) {
        throw Error("camera view rotation is not orthonormal");
    }
}

OrthoCamera OrthoCamera::unit_square(int width, int height) {
    OrthoCamera cam;
    cam.fx = width;
    cam.fy = height;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace gss
