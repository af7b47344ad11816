// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"
#include "gsstream/sampler.hpp"

#include "oracle_values.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace gss {
namespace {

void expect_vec_near(const Vec3 &a, const Vec3 &b, double tol) {
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
    }
}

TEST(PositionAt, ZeroVelocityIsConstant) {
    for (double t : {-0.5, 0.0, 0.3, 1.0}) {
        EXPECT_EQ(position_at(Vec3(0, 0, 1), Vec3::Zero(), 0.0, t), Vec3(0, 0, 1));
    }
}

TEST(PositionAt, LinearMotion) {
    expect_vec_near(position_at(Vec3(0, 0, 1), Vec3(1, 0, 0), 0.0, 0.5), Vec3(0.5, 0, 1), 0.0);
}

TEST(PositionAt, BackwardAnchoredExample) {
    expect_vec_near(position_at(Vec3(0.2, -0.4, 1.5), Vec3(-1, 1, 0.5), 1.0, 0.25),
                    Vec3(0.95, -1.15, 1.125), 1e-15);
}

TEST(PositionAt, OutsideWindowThrows) {
    EXPECT_THROW(position_at(Vec3::Zero(), Vec3::Zero(), 0.0, 1.0001), OutOfWindow);
    EXPECT_THROW(position_at(Vec3::Zero(), Vec3::Zero(), 3.0, 1.5), OutOfWindow);
    EXPECT_NO_THROW(position_at(Vec3::Zero(), Vec3::Zero(), 3.0, 2.0));
}

TEST(PositionAtProperty, DisplacementIsDeltaTimesVelocity) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 mu(rng.normal(), rng.normal(), rng.normal());
        const Vec3 v(2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1);
        const double t0 = std::floor(10 * rng.uniform());
        const double dt = 2 * rng.uniform() - 1;
        const Vec3 d = position_at(mu, v, t0, t0 + dt) - position_at(mu, v, t0, t0);
        EXPECT_LT((d - dt * v).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(position_at(mu, v, t0, t0), mu);
    }
}

TEST(OpacityAt, EqualsAlphaAtCreationTime) {
    for (double g0 : {0.01, 4.0, 500.0}) {
        for (double g1 : {0.0, 0.5, 1.0}) {
            EXPECT_EQ(opacity_at(0.8, g0, g1, 2.0, 2.0), 0.8);
        }
    }
}

TEST(OpacityAt, HalfWindowMatchesOracle) {
    EXPECT_NEAR(opacity_at(1.0, 4.0, 0.5, 0.0, 0.5), oracle::kOpacityHalfWindow, 1e-12);
    EXPECT_NEAR(opacity_at(1.0, 4.0, 0.5, 1.0, 0.5), oracle::kOpacityHalfWindow, 1e-12);
}

TEST(OpacityAt, SharpTransitionCutsBeyondWindow) {
    EXPECT_LT(opacity_at(1.0, 500.0, 0.5, 0.0, 0.6), 1e-20);
    EXPECT_GT(opacity_at(1.0, 500.0, 0.5, 0.0, 0.4), 0.99);
}

TEST(OpacityAtProperty, SymmetricMonotoneAndRatioIdentity) {
    Rng rng(11);
    for (int i = 0; i < 20000; ++i) {
        const double a0 = rng.uniform();
        const double g0 = std::exp(std::log(0.01) + (std::log(1000.0) - std::log(0.01)) * rng.uniform());
        const double g1 = rng.uniform();
        const double d1 = rng.uniform();
        const double d2 = rng.uniform();
        const double t0 = 1.0;
        EXPECT_EQ(opacity_at(a0, g0, g1, t0, t0 + d1), opacity_at(a0, g0, g1, t0, t0 - d1));
        const double near = opacity_at(a0, g0, g1, t0, t0 + std::min(d1, d2));
        const double far = opacity_at(a0, g0, g1, t0, t0 + std::max(d1, d2));
        EXPECT_GE(near, far);
        EXPECT_GE(far, 0.0);
        EXPECT_LE(near, a0);
        if (a0 > 1e-3) {
            const double ratio = opacity_at(a0, g0, g1, t0, t0 + d1) / a0;
            EXPECT_NEAR(ratio, opacity_at(1.0, g0, g1, t0, t0 + d1), 1e-12);
        }
    }
}

TEST(OpacityAtGrad, MatchesFiniteDifferences) {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double a0 = 0.1 + 0.8 * rng.uniform();
        const double g0 = 0.5 + 10 * rng.uniform();
        const double g1 = 0.1 + 0.8 * rng.uniform();
        const double t = 0.05 + 0.9 * rng.uniform();
        const OpacityGrad g = opacity_at_grad(a0, g0, g1, 0.0, t);
        EXPECT_DOUBLE_EQ(g.value, opacity_at(a0, g0, g1, 0.0, t));
        const double h = 1e-6;
        EXPECT_NEAR(g.d_alpha0,
                    (opacity_at(a0 + h, g0, g1, 0, t) - opacity_at(a0 - h, g0, g1, 0, t)) / (2 * h),
                    1e-6);
        EXPECT_NEAR(g.d_gamma0,
                    (opacity_at(a0, g0 + h, g1, 0, t) - opacity_at(a0, g0 - h, g1, 0, t)) / (2 * h),
                    1e-6);
        EXPECT_NEAR(g.d_gamma1,
                    (opacity_at(a0, g0, g1 + h, 0, t) - opacity_at(a0, g0, g1 - h, 0, t)) / (2 * h),
                    1e-6);
    }
}

TEST(DepthMap, Examples) {
    EXPECT_DOUBLE_EQ(depth_map(0.0), 2.0);
    EXPECT_DOUBLE_EQ(depth_map(1.0), 1.0);
    EXPECT_DOUBLE_EQ(depth_map(-0.5), 4.0);
}

TEST(DepthMap, PoleIsClamped) {
    const double at_clamp = depth_map(-1.0 + kInverseDepthEpsilon);
    EXPECT_DOUBLE_EQ(depth_map(-1.0), at_clamp);
    EXPECT_DOUBLE_EQ(depth_map(-5.0), at_clamp);
    EXPECT_TRUE(std::isfinite(at_clamp));
    EXPECT_NEAR(at_clamp, 2.0 / kInverseDepthEpsilon, 1e-9);
}

TEST(DepthMapProperty, StrictlyDecreasingAndInvertible) {
    double prev = depth_map(-1.0 + kInverseDepthEpsilon);
    for (int i = 1; i <= 10000; ++i) {
        const double z = -1.0 + kInverseDepthEpsilon + (2.0 - kInverseDepthEpsilon) * i / 10000.0;
        const double d = depth_map(z);
        EXPECT_LT(d, prev);
        EXPECT_GE(d, 1.0);
        EXPECT_NEAR(inverse_depth_map(d), z, 1e-12);
        prev = d;
    }
}

TEST(DepthMap, DerivativeMatchesFiniteDifference) {
    for (double z : {-0.9, -0.3, 0.0, 0.4, 0.95}) {
        const double h = 1e-6;
        EXPECT_NEAR(depth_map_derivative(z), (depth_map(z + h) - depth_map(z - h)) / (2 * h),
                    1e-5);
    }
}

TEST(PixelAlignedPosition, Examples) {
    expect_vec_near(pixel_aligned_position(10, 5, Vec3::Zero()), Vec3(10, 5, 2), 0.0);
    expect_vec_near(pixel_aligned_position(0, 0, Vec3(1, -1, 1)), Vec3(1, -1, 1), 0.0);
    expect_vec_near(pixel_aligned_position(128, 72, Vec3(0.25, -0.5, 0.2)),
                    Vec3(128.25, 71.5, 2.0 / 1.2), 1e-12);
}

TEST(Materialize, AtCreationTimeReturnsBase) {
    DynamicGaussian g;
    g.base.mu = Vec3(0.3, 0.4, 2.0);
    g.base.opacity = 0.7;
    g.deform = {Vec3(0.2, -0.1, 0), 4.0, 0.5, 3.0};
    EXPECT_EQ(materialize(g, 3.0), g.base);
}

TEST(Materialize, DegenerateDeformationKeepsOpacity) {
    DynamicGaussian g;
    g.base.opacity = 0.9;
    g.deform = {Vec3::Zero(), 1e-3, 1.0, 0.0};
    for (double t : {0.0, 0.25, 0.5, 1.0}) {
        const StaticGaussian s = materialize(g, t);
        EXPECT_EQ(s.mu, g.base.mu);
        EXPECT_NEAR(s.opacity, 0.9, 1e-3);
    }
}

TEST(Materialize, ComposesPositionAndOpacityOracles) {
    DynamicGaussian g;
    g.base.mu = Vec3(0.2, -0.4, 1.5);
    g.base.opacity = 1.0;
    g.base.scale = Vec3(0.1, 0.2, 0.3);
    g.base.color = Vec3(0.1, 0.2, 0.3);
    g.deform = {Vec3(-1, 1, 0.5), 4.0, 0.5, 1.0};
    const StaticGaussian s = materialize(g, 0.5);
    expect_vec_near(s.mu, Vec3(0.7, -0.9, 1.25), 1e-15);
    EXPECT_NEAR(s.opacity, oracle::kOpacityHalfWindow, 1e-12);
    EXPECT_EQ(s.scale, g.base.scale);
    EXPECT_EQ(s.color, g.base.color);
    EXPECT_THROW(materialize(g, 2.5), OutOfWindow);
}

} // namespace
} // namespace gss
