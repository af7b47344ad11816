// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
// Generated by tests/oracles/generate_oracles.py (numpy/scipy/scikit-image).
// Do not edit by hand.
#pragma once

namespace gss::oracle {

inline constexpr double kSsimRgb16 = 0.8048689158518464;
inline constexpr double kSsimGray16 = 0.7998452598665737;
inline constexpr double kSsimRgb24x20 = 0.7778772595588354;
inline constexpr double kTruncMean_0_05 = 0.0;
inline constexpr double kTruncVar_0_05 = 0.1934353258874808;
inline constexpr double kTruncMean_05_05 = 0.35860694463642295;
inline constexpr double kTruncVar_05_05 = 0.15403543383945728;
inline constexpr double kTruncMean_m03_2 = -0.024168235474573307;
inline constexpr double kTruncVar_m03_2 = 0.32201629712251334;
inline constexpr double kTruncCdf_05_05_at0 = 0.18726942941073163;
inline constexpr double kTruncCdf_m03_2_at05 = 0.7711459483302635;
inline constexpr double kOpacityHalfWindow = 0.5676676416183064;
inline constexpr double kAdaptiveWeightL1 = 0.013447071068499756;
inline constexpr double kNoisePairPsnr = 20.00117255039968;

} // namespace gss::oracle
