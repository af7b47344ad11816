// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/gaussian.hpp"

#include <cstdint>
#include <random>

namespace gss {

/// Floor applied to every standard deviation before sampling.
inline constexpr double kMinStd = 1e-9;

/// Seedable random source. Uniform and normal draws are derived from the raw
/// 64-bit engine output directly, so sequences do not depend on the standard
/// library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal (Box-Muller).
    double normal();
    std::uint64_t next() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Per-axis truncated normal on [-1,1]^3 (diagonal covariance).
struct TruncNormalParams {
    Vec3 mean = Vec3::Zero();
    Vec3 std = Vec3::Ones();
};

struct TruncNormalMoments {
    Vec3 mean;
    Vec3 variance;
};

/// Standard normal CDF and quantile.
double normal_cdf(double x);
double normal_quantile(double p);

/// Inverse-CDF sample of a scalar N(mean, std^2) truncated to [lo, hi].
double sample_truncnorm_scalar(double mean, double std, double lo, double hi, Rng &rng);

/// Inverse-CDF sample per axis; every component lies in [-1,1].
Vec3 sample_truncnorm(const TruncNormalParams &p, Rng &rng);

/// Analytic mean and variance of each axis truncated to [-1,1].
TruncNormalMoments truncnorm_moments(const TruncNormalParams &p);

/// CDF of the scalar truncated law on [lo, hi].
double truncnorm_cdf(double x, double mean, double std, double lo, double hi);

/// Distribution mean clamped into [-1,1]^3 (no randomness).
Vec3 deterministic_offset(const TruncNormalParams &p);

} // namespace gss
