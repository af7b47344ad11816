// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/losses.hpp"

#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace gss {

namespace {

void require_same_shape(const ImageBuffer &a, const ImageBuffer &b) {
    if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
        throw ShapeError(fmt::format("image shapes differ: {}x{} vs {}x{}", a.width, a.height,
                                     b.width, b.height));
    }
}

void require_same_shape(const Plane &a, const Plane &b) {
    if (a.width != b.width || a.height != b.height || a.size() != b.size()) {
        throw ShapeError(fmt::format("plane shapes differ: {}x{} vs {}x{}", a.width, a.height,
                                     b.width, b.height));
    }
}

bool selected(const Plane *mask, std::size_t i) { return mask == nullptr || mask->values[i] != 0.0; }

double sign(double x) { return (x > 0.0) - (x < 0.0); }

struct TauStats {
    double median = 0.0;
    double scale = 0.0;
    std::size_t count = 0;
    // Positions (into the full plane) of the order statistics defining the median.
    std::size_t median_lo = 0;
    std::size_t median_hi = 0;
};

TauStats tau_stats(const Plane &d, const Plane *mask) {
    if (mask) {
        require_same_shape(d, *mask);
    }
    std::vector<std::size_t> idx;
    idx.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (selected(mask, i)) {
            idx.push_back(i);
        }
    }
    if (idx.size() < 2) {
        throw DegenerateDepth("tau normalisation needs at least two valid pixels");
    }
    const auto by_value = [&](std::size_t a, std::size_t b) {
        return d.values[a] != d.values[b] ? d.values[a] < d.values[b] : a < b;
    };
    TauStats st;
    st.count = idx.size();
    const std::size_t n = idx.size();
    const std::size_t hi = n / 2;
    std::nth_element(idx.begin(), idx.begin() + hi, idx.end(), by_value);
    st.median_hi = idx[hi];
    if (n % 2 == 1) {
        st.median_lo = st.median_hi;
        st.median = d.values[st.median_hi];
    } else {
        st.median_lo = *std::max_element(idx.begin(), idx.begin() + hi, by_value);
        st.median = 0.5 * (d.values[st.median_lo] + d.values[st.median_hi]);
    }
    double dev = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (selected(mask, i)) {
            dev += std::abs(d.values[i] - st.median);
        }
    }
    st.scale = dev / double(n);
    if (!(st.scale > 1e-12)) {
        throw DegenerateDepth("depth plane has no deviation from its median");
    }
    return st;
}

std::array<double, 11> ssim_window() {
    std::array<double, 11> w{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = i - 5;
        w[i] = std::exp(-(x * x) / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (auto &v : w) {
        v /= sum;
    }
    return w;
}

} // namespace

void LossWeights::validate() const {
    if (lambda_mse < 0.0 || lambda_depth < 0.0 || lambda_mask < 0.0) {
        throw Error("loss weights must be non-negative");
    }
    if (!(decay_w > 0.0)) {
        throw Error("decay sensitivity w must be positive");
    }
    if (frozen_depth_weight && !(*frozen_depth_weight >= 0.0)) {
        throw Error("frozen depth weight must be non-negative");
    }
}

double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("mse: size mismatch");
    }
    if (a.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / double(a.size());
}

double mse(const ImageBuffer &a, const ImageBuffer &b) {
    require_same_shape(a, b);
    return mse(std::span<const double>(a.rgb), std::span<const double>(b.rgb));
}

double psnr_from_mse(double mse_value, double max_val) {
    if (mse_value <= 0.0) {
        return kPsnrInfinity;
    }
    return 10.0 * std::log10(max_val * max_val / mse_value);
}

double psnr(const ImageBuffer &a, const ImageBuffer &b, double max_val) {
    return psnr_from_mse(mse(a, b), max_val);
}

double ssim_plane(std::span<const double> a, std::span<const double> b, int width, int height,
                  double max_val) {
    if (a.size() != b.size() || a.size() != std::size_t(width) * height) {
        throw ShapeError("ssim: size mismatch");
    }
    if (width < 11 || height < 11) {
        throw ShapeError("ssim: images must be at least 11x11");
    }
    static const auto win = ssim_window();
    const double c1 = (0.01 * max_val) * (0.01 * max_val);
    const double c2 = (0.03 * max_val) * (0.03 * max_val);
    double total = 0.0;
    int count = 0;
    for (int y = 5; y < height - 5; ++y) {
        for (int x = 5; x < width - 5; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int j = 0; j < 11; ++j) {
                for (int i = 0; i < 11; ++i) {
                    const double w = win[j] * win[i];
                    const std::size_t k = std::size_t(y + j - 5) * width + (x + i - 5);
                    ma += w * a[k];
                    mb += w * b[k];
                    saa += w * a[k] * a[k];
                    sbb += w * b[k] * b[k];
                    sab += w * a[k] * b[k];
                }
            }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / count;
}

double ssim(const ImageBuffer &a, const ImageBuffer &b, double max_val) {
    require_same_shape(a, b);
    const std::size_t n = a.pixel_count();
    double sum = 0.0;
    std::vector<double> pa(n), pb(n);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = a.rgb[i * 3 + c];
            pb[i] = b.rgb[i * 3 + c];
        }
        sum += ssim_plane(pa, pb, a.width, a.height, max_val);
    }
    return sum / 3.0;
}

Plane tau_normalize(const Plane &d, const Plane *mask) {
    const TauStats st = tau_stats(d, mask);
    Plane out(d.width, d.height);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (selected(mask, i)) {
            out.values[i] = (d.values[i] - st.median) / st.scale;
        }
    }
    return out;
}

double depth_loss(const Plane &d_hat, const Plane &d_ref, const Plane *mask) {
    require_same_shape(d_hat, d_ref);
    const Plane a = tau_normalize(d_hat, mask);
    const Plane b = tau_normalize(d_ref, mask);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (selected(mask, i)) {
            sum += std::abs(a.values[i] - b.values[i]);
            ++n;
        }
    }
    return sum / double(n);
}

double depth_loss_with_grad(const Plane &d_hat, const Plane &d_ref, std::vector<double> &grad,
                            const Plane *mask) {
    return coverage_weighted_depth_loss(d_hat, d_ref, nullptr, mask, &grad, nullptr);
}

double coverage_weighted_depth_loss(const Plane &d_hat, const Plane &d_ref, const Plane *coverage,
                                    const Plane *mask, std::vector<double> *grad,
                                    std::vector<double> *coverage_grad) {
    require_same_shape(d_hat, d_ref);
    if (coverage) {
        require_same_shape(d_hat, *coverage);
    }
    const TauStats st = tau_stats(d_hat, mask);
    const Plane ref = tau_normalize(d_ref, mask);
    const double n = double(st.count);

    std::vector<double> local;
    std::vector<double> &g_out = grad ? *grad : local;
    g_out.assign(d_hat.size(), 0.0);
    if (coverage_grad) {
        coverage_grad->assign(d_hat.size(), 0.0);
    }
    double loss = 0.0;
    double g_sum = 0.0;   // sum_j dL/dtau_j
    double g_tau = 0.0;   // sum_j dL/dtau_j * tau_j
    double sgn_sum = 0.0; // sum_i sign(x_i - median)
    for (std::size_t i = 0; i < d_hat.size(); ++i) {
        if (!selected(mask, i)) {
            continue;
        }
        const double c = coverage ? coverage->values[i] : 1.0;
        const double tau = (d_hat.values[i] - st.median) / st.scale;
        const double diff = tau - ref.values[i];
        loss += c * std::abs(diff);
        if (coverage_grad) {
            (*coverage_grad)[i] = std::abs(diff) / n;
        }
        const double g = c * sign(diff) / n;
        g_out[i] = g;
        g_sum += g;
        g_tau += g * tau;
        sgn_sum += sign(d_hat.values[i] - st.median);
    }
    loss /= n;
    if (!grad) {
        return loss;
    }

    // tau_j = (x_j - m) / s with m the median and s = mean |x - m|:
    // dL/dx_k = [g_k - G dm_k - A (sign(x_k - m) - S dm_k) / n] / s
    const auto dm = [&](std::size_t k) {
        if (st.median_lo == st.median_hi) {
            return k == st.median_hi ? 1.0 : 0.0;
        }
        return (k == st.median_lo || k == st.median_hi) ? 0.5 : 0.0;
    };
    for (std::size_t k = 0; k < d_hat.size(); ++k) {
        if (!selected(mask, k)) {
            continue;
        }
        const double m_k = dm(k);
        const double s_k = sign(d_hat.values[k] - st.median) - sgn_sum * m_k;
        g_out[k] = (g_out[k] - g_sum * m_k - g_tau * s_k / n) / st.scale;
    }
    return loss;
}

double adaptive_depth_weight(const LossWeights &weights, double current_depth_loss) {
    return weights.lambda_depth * sigmoid(-current_depth_loss / weights.decay_w);
}

double masked_loss(const ImageBuffer &a, const ImageBuffer &b, const Plane &mask) {
    require_same_shape(a, b);
    if (mask.width != a.width || mask.height != a.height) {
        throw ShapeError("masked_loss: mask shape differs from image");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        if (mask.values[i] == 0.0) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = a.rgb[i * 3 + c] - b.rgb[i * 3 + c];
            sum += d * d;
        }
        count += 3;
    }
    return count == 0 ? 0.0 : sum / double(count);
}

namespace {

// One time sample of the objective. Accumulates `scale` times its gradient into `grad`.
LossBreakdown sample_loss(const ImageBuffer &rendered, const ImageBuffer &target,
                          const LossWeights &weights, const Plane *mask, DepthPolicy policy,
                          ImageGrad *grad, double scale) {
    require_same_shape(rendered, target);
    LossBreakdown out;
    out.mse = mse(rendered, target);

    std::vector<double> depth_grad;
    const Plane target_depth = depth_plane(target);
    std::optional<Plane> measured;
    if (weights.skip_missing_depth) {
        measured.emplace(target.width, target.height);
        for (std::size_t i = 0; i < target_depth.size(); ++i) {
            measured->values[i] = target_depth.values[i] > 0.0 ? 1.0 : 0.0;
        }
    }
    const Plane *depth_mask = measured ? &*measured : nullptr;
    std::vector<double> coverage_grad;
    try {
        if (weights.coverage_weighted_depth) {
            const Plane coverage = alpha_plane(rendered);
            out.depth = coverage_weighted_depth_loss(depth_plane(rendered), target_depth,
                                                     &coverage, depth_mask,
                                                     grad ? &depth_grad : nullptr,
                                                     grad ? &coverage_grad : nullptr);
        } else if (grad) {
            out.depth = depth_loss_with_grad(depth_plane(rendered), target_depth, depth_grad,
                                             depth_mask);
        } else {
            out.depth = depth_loss(depth_plane(rendered), target_depth, depth_mask);
        }
        out.depth_weight = weights.frozen_depth_weight.value_or(
            adaptive_depth_weight(weights, out.depth));
    } catch (const DegenerateDepth &) {
        if (policy == DepthPolicy::Strict) {
            throw;
        }
        out.depth_valid = false;
        out.depth = 0.0;
        out.depth_weight = 0.0;
        depth_grad.clear();
        coverage_grad.clear();
    }
    if (mask) {
        out.mask = masked_loss(rendered, target, *mask);
    }
    out.total = weights.lambda_mse * out.mse + out.depth_weight * out.depth +
                (mask ? weights.lambda_mask * out.mask : 0.0);

    if (grad) {
        const std::size_t n = rendered.pixel_count();
        const double mse_scale = scale * weights.lambda_mse * 2.0 / double(n * 3);
        for (std::size_t i = 0; i < n * 3; ++i) {
            grad->rgb[i] += mse_scale * (rendered.rgb[i] - target.rgb[i]);
        }
        if (!depth_grad.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                grad->depth[i] += scale * out.depth_weight * depth_grad[i];
            }
        }
        if (!coverage_grad.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                grad->alpha[i] += scale * out.depth_weight * coverage_grad[i];
            }
        }
        if (mask) {
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                count += mask->values[i] != 0.0 ? 3 : 0;
            }
            if (count > 0) {
                const double mask_scale = scale * weights.lambda_mask * 2.0 / double(count);
                for (std::size_t i = 0; i < n; ++i) {
                    if (mask->values[i] == 0.0) {
                        continue;
                    }
                    for (int c = 0; c < 3; ++c) {
                        grad->rgb[i * 3 + c] +=
                            mask_scale * (rendered.rgb[i * 3 + c] - target.rgb[i * 3 + c]);
                    }
                }
            }
        }
    }
    return out;
}

} // namespace

LossBreakdown total_static_loss(const ImageBuffer &rendered, const ImageBuffer &target,
                                const LossWeights &weights, DepthPolicy policy, ImageGrad *grad) {
    weights.validate();
    if (grad) {
        *grad = ImageGrad(rendered.pixel_count());
    }
    return sample_loss(rendered, target, weights, nullptr, policy, grad, 1.0);
}

LossBreakdown total_dynamic_loss(std::span<const ImageBuffer> rendered,
                                 std::span<const ImageBuffer> targets, const LossWeights &weights,
                                 std::span<const Plane> masks, DepthPolicy policy,
                                 std::vector<ImageGrad> *grads) {
    weights.validate();
    if (rendered.size() != targets.size() || rendered.empty()) {
        throw ShapeError("total_dynamic_loss: need one target per rendered time");
    }
    if (!masks.empty() && masks.size() != rendered.size()) {
        throw ShapeError("total_dynamic_loss: need one mask per rendered time");
    }
    const double scale = 1.0 / double(rendered.size());
    if (grads) {
        grads->clear();
        for (const auto &r : rendered) {
            grads->emplace_back(r.pixel_count());
        }
    }
    LossBreakdown out;
    out.depth_valid = true;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const LossBreakdown s =
            sample_loss(rendered[i], targets[i], weights, masks.empty() ? nullptr : &masks[i],
                        policy, grads ? &(*grads)[i] : nullptr, scale);
        out.total += scale * s.total;
        out.mse += scale * s.mse;
        out.depth += scale * s.depth;
        out.mask += scale * s.mask;
        out.depth_weight += scale * s.depth_weight;
        out.depth_valid = out.depth_valid && s.depth_valid;
    }
    return out;
}

std::vector<double> time_grid(double t1, double t2, int n) {
    if (n < 1) {
        throw Error("time_grid needs at least one sample");
    }
    if (n == 1) {
        return {t1};
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        out[i] = i == n - 1 ? t2 : t1 + (t2 - t1) * double(i) / double(n - 1);
    }
    return out;
}

} // namespace gss
