// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/rasterizer.hpp"

#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace gss {

namespace {

struct Prepared {
    std::vector<ProjectedGaussian> splats; // in input order
    std::vector<std::uint32_t> order;      // indices sorted front to back
    std::uint64_t skipped = 0;
};

GaussianId id_for(std::span<const GaussianId> ids, std::size_t i) {
    return ids.empty() ? GaussianId{0, static_cast<std::uint32_t>(i)} : ids[i];
}

Prepared prepare(std::span<const StaticGaussian> gaussians, std::span<const GaussianId> ids,
                 const OrthoCamera &cam, const RasterConfig &cfg) {
    if (!ids.empty() && ids.size() != gaussians.size()) {
        throw ShapeError("render: id list length does not match gaussian count");
    }
    Prepared out;
    out.splats.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        ProjectedGaussian p = project_gaussian(gaussians[i], cam, cfg);
        p.source_id = id_for(ids, i);
        if (!p.valid) {
            ++out.skipped;
        }
        out.splats.push_back(p);
    }
    out.order.resize(gaussians.size());
    std::iota(out.order.begin(), out.order.end(), 0u);
    std::sort(out.order.begin(), out.order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const auto &pa = out.splats[a];
        const auto &pb = out.splats[b];
        if (pa.camera_depth != pb.camera_depth) {
            return pa.camera_depth < pb.camera_depth;
        }
        return pa.source_id < pb.source_id;
    });
    std::erase_if(out.order, [&](std::uint32_t i) {
        const auto &p = out.splats[i];
        return !p.valid || p.x0 > p.x1 || p.y0 > p.y1;
    });
    return out;
}

// Opacity of splat p at pixel sample (sx, sy) before the clamp, or a negative
// value when the sample lies outside the footprint. `power` receives the
// Gaussian exponent.
inline double footprint_alpha(const ProjectedGaussian &p, int x, int y, double cutoff2,
                              double &power) {
    if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) {
        return -1.0;
    }
    const double dx = (x + 0.5) - p.center.x();
    const double dy = (y + 0.5) - p.center.y();
    const double q =
        p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy + p.conic(1, 1) * dy * dy;
    if (!(q <= cutoff2)) {
        return -1.0;
    }
    power = -0.5 * q;
    return p.opacity * std::exp(power);
}

struct PixelAccum {
    double r = 0.0, g = 0.0, b = 0.0;
    double depth = 0.0;
    double transmittance = 1.0;
    std::uint64_t contributions = 0;
    std::uint64_t clamped = 0;
    bool stopped = false;
};

template <class Indices>
PixelAccum shade_pixel(int x, int y, const Indices &list, const Prepared &prep,
                       const RasterConfig &cfg) {
    PixelAccum acc;
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
    for (const std::uint32_t idx : list) {
        const ProjectedGaussian &p = prep.splats[idx];
        double power = 0.0;
        double a = footprint_alpha(p, x, y, cutoff2, power);
        if (a < 0.0) {
            continue;
        }
        if (a > cfg.max_alpha) {
            a = cfg.max_alpha;
            ++acc.clamped;
        }
        const double w = a * acc.transmittance;
        acc.r += p.color.x() * w;
        acc.g += p.color.y() * w;
        acc.b += p.color.z() * w;
        acc.depth += p.camera_depth * w;
        acc.transmittance *= (1.0 - a);
        ++acc.contributions;
        if (acc.transmittance < cfg.min_transmittance) {
            acc.stopped = true;
            break;
        }
    }
    return acc;
}

void write_pixel(ImageBuffer &img, int x, int y, const PixelAccum &acc, const RasterConfig &cfg) {
    const std::size_t i = img.index(x, y);
    img.rgb[i * 3 + 0] = acc.r;
    img.rgb[i * 3 + 1] = acc.g;
    img.rgb[i * 3 + 2] = acc.b;
    const double alpha = 1.0 - acc.transmittance;
    img.alpha[i] = alpha;
    img.depth[i] = alpha > cfg.min_depth_alpha ? acc.depth / alpha : 0.0;
}

int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must write
// disjoint outputs.
template <class Fn> void parallel_for(int n, int threads, Fn &&fn) {
    threads = std::min(resolve_threads(threads), n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                fn(i);
            }
        });
    }
}

struct TileGrid {
    int tiles_x = 0, tiles_y = 0, size = 16;
    std::vector<std::vector<std::uint32_t>> lists; // per tile, depth order preserved
};

TileGrid bin_tiles(const Prepared &prep, const OrthoCamera &cam, const RasterConfig &cfg) {
    TileGrid grid;
    grid.size = std::max(1, cfg.tile_size);
    grid.tiles_x = (cam.width + grid.size - 1) / grid.size;
    grid.tiles_y = (cam.height + grid.size - 1) / grid.size;
    grid.lists.resize(std::size_t(grid.tiles_x) * grid.tiles_y);
    for (const std::uint32_t idx : prep.order) {
        const auto &p = prep.splats[idx];
        for (int ty = p.y0 / grid.size; ty <= p.y1 / grid.size; ++ty) {
            for (int tx = p.x0 / grid.size; tx <= p.x1 / grid.size; ++tx) {
                grid.lists[std::size_t(ty) * grid.tiles_x + tx].push_back(idx);
            }
        }
    }
    return grid;
}

void accumulate_stats(RenderStats *stats, const Prepared &prep,
                      const std::vector<PixelAccum> &pixels) {
    if (stats == nullptr) {
        return;
    }
    stats->skipped_singular += prep.skipped;
    for (const auto &acc : pixels) {
        stats->contributions += acc.contributions;
        stats->clamped += acc.clamped;
        stats->early_stopped += acc.stopped ? 1 : 0;
    }
}

} // namespace

ProjectedGaussian project_gaussian(const StaticGaussian &g, const OrthoCamera &cam,
                                   const RasterConfig &cfg) {
    ProjectedGaussian out;
    const Vec3 p_cam = cam.view.apply(g.mu);
    out.center = Vec2(cam.fx * p_cam.x() + cam.cx, cam.fy * p_cam.y() + cam.cy);
    out.camera_depth = p_cam.z();
    out.opacity = g.opacity;
    out.color = g.color;

    const Mat3 sigma = covariance_from_rs(g.rotation, g.scale);
    const Mat3 sigma_cam = cam.view.rotation * sigma * cam.view.rotation.transpose();
    // J has no z column, so only the upper-left 2x2 block survives.
    Mat2 cov;
    cov(0, 0) = cam.fx * cam.fx * sigma_cam(0, 0) + cfg.blur;
    cov(0, 1) = cam.fx * cam.fy * sigma_cam(0, 1);
    cov(1, 0) = cov(0, 1);
    cov(1, 1) = cam.fy * cam.fy * sigma_cam(1, 1) + cfg.blur;
    out.cov2d = cov;

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0) || !std::isfinite(det)) {
        out.valid = false;
        return out;
    }
    out.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;

    const double rx = cfg.cutoff_sigma * std::sqrt(cov(0, 0));
    const double ry = cfg.cutoff_sigma * std::sqrt(cov(1, 1));
    // Pixels whose sample point (i + 0.5) lies inside [c - r, c + r].
    const double fx0 = std::ceil(out.center.x() - rx - 0.5);
    const double fx1 = std::floor(out.center.x() + rx - 0.5);
    const double fy0 = std::ceil(out.center.y() - ry - 0.5);
    const double fy1 = std::floor(out.center.y() + ry - 0.5);
    out.x0 = static_cast<int>(std::clamp(fx0, 0.0, double(cam.width)));
    out.x1 = static_cast<int>(std::clamp(fx1, -1.0, double(cam.width - 1)));
    out.y0 = static_cast<int>(std::clamp(fy0, 0.0, double(cam.height)));
    out.y1 = static_cast<int>(std::clamp(fy1, -1.0, double(cam.height - 1)));
    return out;
}

ImageBuffer render(std::span<const StaticGaussian> gaussians, std::span<const GaussianId> ids,
                   const OrthoCamera &cam, const RasterConfig &cfg, RenderStats *stats) {
    cam.validate();
    const Prepared prep = prepare(gaussians, ids, cam, cfg);
    if (prep.skipped > 0) {
        spdlog::warn("render: skipped {} splats with singular 2D covariance", prep.skipped);
    }
    const TileGrid grid = bin_tiles(prep, cam, cfg);
    ImageBuffer img(cam.width, cam.height);
    std::vector<PixelAccum> pixels(stats ? img.pixel_count() : 0);

    parallel_for(grid.tiles_x * grid.tiles_y, cfg.threads, [&](int tile) {
        const int tx = tile % grid.tiles_x;
        const int ty = tile / grid.tiles_x;
        const auto &list = grid.lists[tile];
        const int xe = std::min(cam.width, (tx + 1) * grid.size);
        const int ye = std::min(cam.height, (ty + 1) * grid.size);
        for (int y = ty * grid.size; y < ye; ++y) {
            for (int x = tx * grid.size; x < xe; ++x) {
                const PixelAccum acc = shade_pixel(x, y, list, prep, cfg);
                write_pixel(img, x, y, acc, cfg);
                if (stats) {
                    pixels[img.index(x, y)] = acc;
                }
            }
        }
    });
    accumulate_stats(stats, prep, pixels);
    return img;
}

ImageBuffer render(std::span<const StaticGaussian> gaussians, const OrthoCamera &cam,
                   const RasterConfig &cfg, RenderStats *stats) {
    return render(gaussians, {}, cam, cfg, stats);
}

ImageBuffer render_naive(std::span<const StaticGaussian> gaussians,
                         std::span<const GaussianId> ids, const OrthoCamera &cam,
                         const RasterConfig &cfg, RenderStats *stats) {
    cam.validate();
    const Prepared prep = prepare(gaussians, ids, cam, cfg);
    ImageBuffer img(cam.width, cam.height);
    std::vector<PixelAccum> pixels(stats ? img.pixel_count() : 0);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const PixelAccum acc = shade_pixel(x, y, prep.order, prep, cfg);
            write_pixel(img, x, y, acc, cfg);
            if (stats) {
                pixels[img.index(x, y)] = acc;
            }
        }
    }
    accumulate_stats(stats, prep, pixels);
    return img;
}

ImageBuffer render_at(std::span<const DynamicGaussian> scene, double t, const OrthoCamera &cam,
                      const RasterConfig &cfg, RenderStats *stats) {
    std::vector<StaticGaussian> statics;
    std::vector<GaussianId> ids;
    statics.reserve(scene.size());
    ids.reserve(scene.size());
    for (const auto &g : scene) {
        statics.push_back(materialize(g, t));
        ids.push_back(g.id);
    }
    return render(statics, ids, cam, cfg, stats);
}

namespace {

// d R(q) / d q_k for a unit quaternion q = (w, x, y, z).
std::array<Mat3, 4> rotation_jacobian(double w, double x, double y, double z) {
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto &m : d) {
        m *= 2.0;
    }
    return d;
}

struct SplatGradAccum {
    Vec2 center = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
};

struct Contribution {
    std::uint32_t idx;
    double alpha;       // after clamp
    double gauss;       // exp(power)
    double transmittance; // before this splat
    bool clamped;
};

} // namespace

std::vector<GaussianGrad> render_backward(std::span<const StaticGaussian> gaussians,
                                          std::span<const GaussianId> ids,
                                          const OrthoCamera &cam, const ImageGrad &grad,
                                          const RasterConfig &cfg) {
    cam.validate();
    const std::size_t npix = std::size_t(cam.width) * cam.height;
    if (grad.rgb.size() != npix * 3 || grad.depth.size() != npix || grad.alpha.size() != npix) {
        throw ShapeError("render_backward: gradient planes do not match the camera size");
    }
    const Prepared prep = prepare(gaussians, ids, cam, cfg);
    const TileGrid grid = bin_tiles(prep, cam, cfg);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;

    std::vector<SplatGradAccum> acc(gaussians.size());
    std::vector<Contribution> contribs;
    for (int tile = 0; tile < grid.tiles_x * grid.tiles_y; ++tile) {
        const int tx = tile % grid.tiles_x;
        const int ty = tile / grid.tiles_x;
        const auto &list = grid.lists[tile];
        if (list.empty()) {
            continue;
        }
        const int xe = std::min(cam.width, (tx + 1) * grid.size);
        const int ye = std::min(cam.height, (ty + 1) * grid.size);
        for (int y = ty * grid.size; y < ye; ++y) {
            for (int x = tx * grid.size; x < xe; ++x) {
                // Replay the forward pass for this pixel.
                contribs.clear();
                double T = 1.0;
                double depth_raw = 0.0;
                for (const std::uint32_t idx : list) {
                    const ProjectedGaussian &p = prep.splats[idx];
                    double power = 0.0;
                    double a = footprint_alpha(p, x, y, cutoff2, power);
                    if (a < 0.0) {
                        continue;
                    }
                    bool clamped = false;
                    if (a > cfg.max_alpha) {
                        a = cfg.max_alpha;
                        clamped = true;
                    }
                    contribs.push_back({idx, a, std::exp(power), T, clamped});
                    depth_raw += p.camera_depth * a * T;
                    T *= (1.0 - a);
                    if (T < cfg.min_transmittance) {
                        break;
                    }
                }
                if (contribs.empty()) {
                    continue;
                }
                const std::size_t pix = std::size_t(y) * cam.width + x;
                const Vec3 g_rgb(grad.rgb[pix * 3], grad.rgb[pix * 3 + 1], grad.rgb[pix * 3 + 2]);
                const double T_final = T;
                const double alpha_out = 1.0 - T_final;
                double g_depth_raw = 0.0;
                double g_alpha = grad.alpha[pix];
                if (alpha_out > cfg.min_depth_alpha) {
                    g_depth_raw = grad.depth[pix] / alpha_out;
                    g_alpha -= grad.depth[pix] * depth_raw / (alpha_out * alpha_out);
                }

                // Suffix sums over splats behind the current one.
                Vec3 suffix_color = Vec3::Zero();
                double suffix_depth = 0.0;
                for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                    const ProjectedGaussian &p = prep.splats[it->idx];
                    const double w = it->alpha * it->transmittance;
                    const double one_minus = 1.0 - it->alpha;
                    const double dL_da = it->transmittance * (g_rgb.dot(p.color) +
                                                              g_depth_raw * p.camera_depth) -
                                         (g_rgb.dot(suffix_color) + g_depth_raw * suffix_depth) /
                                             one_minus +
                                         g_alpha * T_final / one_minus;
                    SplatGradAccum &ga = acc[it->idx];
                    ga.color += g_rgb * w;
                    ga.depth += g_depth_raw * w;
                    suffix_color += p.color * w;
                    suffix_depth += p.camera_depth * w;
                    if (it->clamped) {
                        continue;
                    }
                    ga.opacity += dL_da * it->gauss;
                    const double dL_dpower = dL_da * it->alpha;
                    const Vec2 d((x + 0.5) - p.center.x(), (y + 0.5) - p.center.y());
                    // power = -1/2 d^T Q d;  d(power)/d(center) = Q d
                    ga.center += dL_dpower * (p.conic * d);
                    ga.conic += dL_dpower * (-0.5) * (d * d.transpose());
                }
            }
        }
    }

    std::vector<GaussianGrad> out(gaussians.size());
    Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
    J(0, 0) = cam.fx;
    J(1, 1) = cam.fy;
    const Mat3 &W = cam.view.rotation;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const ProjectedGaussian &p = prep.splats[i];
        const SplatGradAccum &ga = acc[i];
        GaussianGrad &g = out[i];
        if (!p.valid) {
            continue;
        }
        g.opacity = ga.opacity;
        g.color = ga.color;
        // Position: centre via J W, camera depth via the third row of W.
        g.mu = W.transpose() * (J.transpose() * ga.center) + W.row(2).transpose() * ga.depth;

        // conic = cov2d^-1  =>  dL/dcov2d = -Q dL/dQ Q
        const Mat2 g_cov2d = -p.conic * ga.conic * p.conic;
        const Mat3 g_sigma = W.transpose() * (J.transpose() * g_cov2d * J) * W;

        const StaticGaussian &src = gaussians[i];
        const double qn = src.rotation.norm();
        const double qw = src.rotation.w / qn, qx = src.rotation.x / qn, qy = src.rotation.y / qn,
                     qz = src.rotation.z / qn;
        const Mat3 R = src.rotation.rotation();
        const Mat3 M = R * src.scale.asDiagonal();
        const Mat3 g_M = (g_sigma + g_sigma.transpose()) * M;
        for (int j = 0; j < 3; ++j) {
            g.scale[j] = g_M.col(j).dot(R.col(j));
        }
        const Mat3 g_R = g_M * src.scale.asDiagonal();
        const auto dR = rotation_jacobian(qw, qx, qy, qz);
        Eigen::Vector4d g_unit;
        for (int k = 0; k < 4; ++k) {
            g_unit[k] = (g_R.array() * dR[k].array()).sum();
        }
        const Eigen::Vector4d q_unit(qw, qx, qy, qz);
        g.rotation = (g_unit - q_unit * q_unit.dot(g_unit)) / qn;
    }
    return out;
}

DynamicGaussianGrad chain_materialize(const DynamicGaussian &g, double t,
                                      const GaussianGrad &at_t) {
    DynamicGaussianGrad out;
    out.base = at_t;
    out.velocity = at_t.mu * (t - g.deform.t0);
    const OpacityGrad og =
        opacity_at_grad(g.base.opacity, g.deform.gamma0, g.deform.gamma1, g.deform.t0, t);
    out.base.opacity = at_t.opacity * og.d_alpha0;
    out.gamma0 = at_t.opacity * og.d_gamma0;
    out.gamma1 = at_t.opacity * og.d_gamma1;
    return out;
}

RenderGradients render_gradients(std::span<const StaticGaussian> gaussians,
                                 std::span<const GaussianId> ids, const OrthoCamera &cam,
                                 const ImageLossFn &loss, const RasterConfig &cfg) {
    RenderGradients out;
    out.image = render(gaussians, ids, cam, cfg);
    LossEval eval = loss(out.image);
    out.loss = eval.value;
    out.grads = render_backward(gaussians, ids, cam, eval.grad, cfg);
    return out;
}

} // namespace gss
