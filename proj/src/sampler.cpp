// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/sampler.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gss {

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Standardised truncated normal on [a, b] with a + b <= 0, i.e. the interval
// does not sit in the upper tail, so Phi(a) and Phi(b) keep relative precision.
double sample_standard_lower(double a, double b, Rng &rng) {
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    if (pb > 1e-300 && pb - pa > 0.0) {
        const double p = pa + rng.uniform() * (pb - pa);
        return std::clamp(normal_quantile(p), a, b);
    }
    // Deep lower tail: Phi underflows. Mirror to [-b, -a] and use the
    // exponential tail law, exact to O(1/a^2) for -b > 37.
    const double lo = -b;
    const double hi = -a;
    const double width = hi - lo;
    const double u = rng.uniform();
    const double x = lo - std::log1p(-u * -std::expm1(-lo * width)) / lo;
    return -std::clamp(x, lo, hi);
}

} // namespace

double Rng::uniform() {
    // 53 random bits centred in their cell: never exactly 0 or 1.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

double sample_truncnorm_scalar(double mean, double std, double lo, double hi, Rng &rng) {
    const double s = std::max(std, kMinStd);
    const double a = (lo - mean) / s;
    const double b = (hi - mean) / s;
    const double z = (a + b <= 0.0) ? sample_standard_lower(a, b, rng)
                                    : -sample_standard_lower(-b, -a, rng);
    return std::clamp(mean + s * z, lo, hi);
}

Vec3 sample_truncnorm(const TruncNormalParams &p, Rng &rng) {
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        out[i] = sample_truncnorm_scalar(p.mean[i], p.std[i], -1.0, 1.0, rng);
    }
    return out;
}

double truncnorm_cdf(double x, double mean, double std, double lo, double hi) {
    if (x <= lo) {
        return 0.0;
    }
    if (x >= hi) {
        return 1.0;
    }
    const double s = std::max(std, kMinStd);
    const double a = (lo - mean) / s;
    const double b = (hi - mean) / s;
    const double xs = (x - mean) / s;
    if (a + b <= 0.0) {
        return (normal_cdf(xs) - normal_cdf(a)) / (normal_cdf(b) - normal_cdf(a));
    }
    // Upper-tail interval: work with survival functions.
    const double qa = normal_cdf(-a);
    const double qb = normal_cdf(-b);
    return (qa - normal_cdf(-xs)) / (qa - qb);
}

TruncNormalMoments truncnorm_moments(const TruncNormalParams &p) {
    TruncNormalMoments out;
    for (int i = 0; i < 3; ++i) {
        const double s = std::max(p.std[i], kMinStd);
        double a = (-1.0 - p.mean[i]) / s;
        double b = (1.0 - p.mean[i]) / s;
        // Mirror into the lower half so the normaliser keeps precision.
        const double sign = (a + b <= 0.0) ? 1.0 : -1.0;
        if (sign < 0.0) {
            std::swap(a, b);
            a = -a;
            b = -b;
        }
        const double z = normal_cdf(b) - normal_cdf(a);
        const double pa = normal_pdf(a);
        const double pb = normal_pdf(b);
        const double shift = (pa - pb) / z;
        // Infinite bounds contribute no x*pdf(x) term.
        const double apa = std::isfinite(a) ? a * pa : 0.0;
        const double bpb = std::isfinite(b) ? b * pb : 0.0;
        out.mean[i] = p.mean[i] + sign * s * shift;
        out.variance[i] = s * s * (1.0 + (apa - bpb) / z - shift * shift);
    }
    return out;
}

Vec3 deterministic_offset(const TruncNormalParams &p) {
    return p.mean.cwiseMax(-1.0).cwiseMin(1.0);
}

} // namespace gss
