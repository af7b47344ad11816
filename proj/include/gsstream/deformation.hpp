// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/gaussian.hpp"

namespace gss {

/// Lower clamp of the inverse-depth offset; keeps g(z) = 2/(1+z) finite.
inline constexpr double kInverseDepthEpsilon = 1e-3;

/// A deformation is only defined within one normalised interval of its t0.
inline constexpr double kDeformationWindow = 1.0;

double sigmoid(double x);

/// mu0 + v (t - t0). Throws OutOfWindow when |t - t0| > 1.
Vec3 position_at(const Vec3 &mu0, const Vec3 &velocity, double t0, double t);

/// Lifecycle opacity alpha0 * sigmoid(-gamma0 (|t - t0| - gamma1)) / sigmoid(gamma0 gamma1),
/// clamped to [0, alpha0]. Equals alpha0 exactly at t == t0.
double opacity_at(double alpha0, double gamma0, double gamma1, double t0, double t);

/// Partial derivatives of opacity_at (zero where the clamp is active).
struct OpacityGrad {
    double value = 0.0;
    double d_alpha0 = 0.0;
    double d_gamma0 = 0.0;
    double d_gamma1 = 0.0;
};
OpacityGrad opacity_at_grad(double alpha0, double gamma0, double gamma1, double t0, double t);

/// g(z) = 2 / (1 + z), with z clamped below at -1 + 1e-3.
double depth_map(double z_inv);
/// dg/dz at the clamped argument; zero where the clamp is active.
double depth_map_derivative(double z_inv);
/// g^-1(d) = 2/d - 1.
double inverse_depth_map(double depth);

/// (u + o0, v + o1, g(o2)).
Vec3 pixel_aligned_position(double u, double v, const Vec3 &offset);

/// Evaluate a dynamic Gaussian at time t. Scale, rotation and colour are unchanged.
StaticGaussian materialize(const DynamicGaussian &g, double t);

/// Throws OutOfWindow when t is further than one interval from t0.
void check_window(double t0, double t);

} // namespace gss
