// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/fit_predictor.hpp"

#include "gsstream/deformation.hpp"
#include "gsstream/errors.hpp"
#include "gsstream/sampler.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <limits>

namespace gss {

namespace {

constexpr const char *kBackend = "fit";
constexpr int kStaticParams = 14; // offset 3, log-scale 3, quaternion 4, opacity logit 1, colour 3
constexpr int kDynamicParams = 5; // velocity 3, log gamma0 1, gamma1 1
constexpr double kMaxLogit = 12.0;
constexpr double kMaxLogScale = 2.0;
constexpr double kMinGamma0 = 1e-2;
constexpr double kMaxGamma0 = 1e3;

double logit(double p) { return std::log(p / (1.0 - p)); }

bool all_finite(const std::vector<double> &v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// splitmix64 finaliser: decorrelates the per-frame seed from the config seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Json frame_to_json(const ImageBuffer &f) {
    return Json{{"width", f.width}, {"height", f.height}, {"rgb", f.rgb}, {"depth", f.depth}};
}

ImageBuffer frame_from_json(const Json &j) {
    ImageBuffer f(j.at("width").get<int>(), j.at("height").get<int>());
    f.rgb = j.at("rgb").get<std::vector<double>>();
    f.depth = j.at("depth").get<std::vector<double>>();
    if (f.rgb.size() != f.pixel_count() * 3 || f.depth.size() != f.pixel_count()) {
        throw ParseError("fit predictor state: frame planes do not match its size");
    }
    std::fill(f.alpha.begin(), f.alpha.end(), 1.0);
    return f;
}

/// Token anchors in canonical coordinates plus the cell size.
struct TokenLayout {
    std::vector<Vec3> anchors; // (u, v, 0)
    double cell_x = 0.0;      // canonical width of one cell
    double cell_y = 0.0;
};

TokenLayout make_layout(const FitConfig &cfg, const OrthoCamera &cam) {
    const int n = cfg.n_gaussians > 0
                      ? cfg.n_gaussians
                      : std::max(1, cam.width / 16) * std::max(1, cam.height / 16);
    const auto [gw, gh] = token_grid(n, cam.width, cam.height);
    TokenLayout layout;
    const double px_w = double(cam.width) / gw;
    const double px_h = double(cam.height) / gh;
    layout.cell_x = px_w / cam.fx;
    layout.cell_y = px_h / cam.fy;
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            const double px = (gx + 0.5) * px_w;
            const double py = (gy + 0.5) * px_h;
            layout.anchors.emplace_back((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 0.0);
        }
    }
    return layout;
}

StaticGaussian static_from_params(const double *p, const Vec3 &anchor) {
    StaticGaussian g;
    g.mu = pixel_aligned_position(anchor.x(), anchor.y(), Vec3(p[0], p[1], p[2]));
    g.scale = Vec3(std::exp(p[3]), std::exp(p[4]), std::exp(p[5])).cwiseMax(kMinScale);
    g.rotation = Quaternion{p[6], p[7], p[8], p[9]};
    g.opacity = sigmoid(p[10]);
    g.color = Vec3(p[11], p[12], p[13]);
    return g;
}

void static_grad_to_params(const GaussianGrad &gg, const double *p, double *out) {
    out[0] = gg.mu.x();
    out[1] = gg.mu.y();
    out[2] = gg.mu.z() * depth_map_derivative(p[2]);
    for (int a = 0; a < 3; ++a) {
        const double s = std::exp(p[3 + a]);
        out[3 + a] = s > kMinScale ? gg.scale[a] * s : 0.0;
    }
    for (int a = 0; a < 4; ++a) {
        out[6 + a] = gg.rotation[a];
    }
    const double o = sigmoid(p[10]);
    out[10] = gg.opacity * o * (1.0 - o);
    for (int a = 0; a < 3; ++a) {
        out[11 + a] = gg.color[a];
    }
}

void project_static(std::vector<double> &x) {
    const double min_log_scale = std::log(kMinScale);
    for (std::size_t base = 0; base < x.size(); base += kStaticParams) {
        double *p = &x[base];
        for (int a = 0; a < 3; ++a) {
            p[a] = std::clamp(p[a], -1.0, 1.0);
            p[3 + a] = std::clamp(p[3 + a], min_log_scale, kMaxLogScale);
            p[11 + a] = std::clamp(p[11 + a], 0.0, 1.0);
        }
        const double n = std::sqrt(p[6] * p[6] + p[7] * p[7] + p[8] * p[8] + p[9] * p[9]);
        if (n > 1e-8) {
            for (int a = 6; a < 10; ++a) {
                p[a] /= n;
            }
        } else {
            p[6] = 1.0;
            p[7] = p[8] = p[9] = 0.0;
        }
        p[10] = std::clamp(p[10], -kMaxLogit, kMaxLogit);
    }
}

void project_dynamic(std::vector<double> &x) {
    for (std::size_t base = 0; base < x.size(); base += kDynamicParams) {
        double *p = &x[base];
        for (int a = 0; a < 3; ++a) {
            p[a] = std::clamp(p[a], -1.0, 1.0);
        }
        p[3] = std::clamp(p[3], std::log(kMinGamma0), std::log(kMaxGamma0));
        p[4] = std::clamp(p[4], 0.0, 1.0);
    }
}

DeformationParams deform_from_params(const double *p, double t0) {
    DeformationParams d;
    d.velocity = Vec3(p[0], p[1], p[2]);
    d.gamma0 = std::exp(p[3]);
    d.gamma1 = p[4];
    d.t0 = t0;
    return d;
}

/// The adaptive depth weight is detached; it is evaluated once at the initial
/// iterate and then held fixed so the line search sees a single objective.
LossWeights freeze_depth_weight(const LossWeights &w, const LossBreakdown &initial) {
    LossWeights out = w;
    out.frozen_depth_weight.reset();
    out.frozen_depth_weight =
        initial.depth_valid ? initial.depth_weight : adaptive_depth_weight(w, 0.0);
    return out;
}

void check_frame(const ImageBuffer &frame, const OrthoCamera &cam) {
    if (frame.width != cam.width || frame.height != cam.height) {
        throw ShapeError(fmt::format("frame is {}x{} but the camera expects {}x{}", frame.width,
                                     frame.height, cam.width, cam.height));
    }
    for (const double d : frame.depth) {
        if (!std::isfinite(d)) {
            throw ShapeError("frame depth plane contains non-finite values");
        }
    }
}

} // namespace

void FitConfig::validate() const {
    if (n_gaussians < 0) {
        throw Error("fit: n_gaussians must be positive (or 0 for the default grid)");
    }
    if (iterations <= 0 || decode_iterations <= 0) {
        throw Error("fit: iteration caps must be positive");
    }
    if (candidates < 1) {
        throw Error("fit: need at least one sampling candidate");
    }
    if (!(step_size > 0.0) || !(tolerance >= 0.0) || patience < 1) {
        throw Error("fit: step size must be positive and tolerance non-negative");
    }
    if (!(offset_std_xy > 0.0) || !(offset_std_z > 0.0)) {
        throw Error("fit: offset standard deviations must be positive");
    }
    if (!(init_opacity > 0.0 && init_opacity < 1.0)) {
        throw Error("fit: init_opacity must lie in (0, 1)");
    }
    if (!(init_gamma0 > 0.0) || init_gamma1 < 0.0 || init_gamma1 > 1.0) {
        throw Error("fit: invalid initial lifecycle coefficients");
    }
    weights.validate();
}

std::pair<int, int> token_grid(int n, int width, int height) {
    if (n <= 0 || width <= 0 || height <= 0) {
        throw Error("token_grid: arguments must be positive");
    }
    const double aspect = double(width) / double(height);
    int best_w = n;
    double best_err = std::numeric_limits<double>::infinity();
    for (int w = 1; w <= n; ++w) {
        if (n % w != 0) {
            continue;
        }
        const double err = std::abs(std::log(double(w) / double(n / w) / aspect));
        if (err < best_err - 1e-12) {
            best_err = err;
            best_w = w;
        }
    }
    return {best_w, n / best_w};
}

FitReport Minimizer::run(std::vector<double> &x, const std::vector<double> &rates,
                         const Eval &eval, const Project &project) const {
    if (rates.size() != x.size()) {
        throw ShapeError("minimizer: one rate per parameter required");
    }
    FitReport report;
    const auto evaluate = [&](const std::vector<double> &p, std::vector<double> *g) {
        const LossBreakdown b = eval(p, g);
        ++report.evaluations;
        if (!std::isfinite(b.total) || (g && !all_finite(*g))) {
            throw FitDiverged("optimisation produced a non-finite loss or gradient");
        }
        return b;
    };

    project(x);
    std::vector<double> grad(x.size(), 0.0);
    LossBreakdown cur = evaluate(x, &grad);
    report.curve.push_back({0, cur});

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-12;
    std::vector<double> m(x.size(), 0.0), v(x.size(), 0.0), dir(x.size(), 0.0);
    std::vector<double> trial(x.size()), trial_grad(x.size());
    std::vector<double> best_x(x.size()), best_grad(x.size());
    double eta = step_size;
    double b1 = 1.0, b2 = 1.0;
    Rng rng(seed);

    for (int it = 1; it <= iterations; ++it) {
        b1 *= beta1;
        b2 *= beta2;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mh = m[i] / (1.0 - b1);
            const double vh = v[i] / (1.0 - b2);
            dir[i] = rates[i] * mh / (std::sqrt(vh) + eps);
        }
        // Best trial of this iteration across the searches below.
        bool accepted = false;
        LossBreakdown best;
        double best_eta = 0.0;
        const auto line_search = [&](const std::vector<double> &d, double eta0, int halvings) {
            double e = eta0;
            for (int h = 0; h <= halvings; ++h) {
                for (std::size_t i = 0; i < x.size(); ++i) {
                    trial[i] = x[i] - e * d[i];
                }
                project(trial);
                const LossBreakdown next = evaluate(trial, &trial_grad);
                if (next.total <= cur.total) {
                    if (!accepted || next.total < best.total) {
                        accepted = true;
                        best = next;
                        best_eta = e;
                        best_x.swap(trial);
                        best_grad.swap(trial_grad);
                    }
                    return true;
                }
                e *= 0.5;
            }
            return false;
        };
        if (!line_search(dir, eta, max_halvings)) {
            // The momentum direction need not descend; retry along the
            // preconditioned current gradient with the momentum reset.
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = grad[i] * (1.0 - b1);
                const double vh = v[i] / (1.0 - b2);
                dir[i] = rates[i] * grad[i] / (std::sqrt(vh) + eps);
            }
            line_search(dir, step_size, max_halvings);
        }
        // No descent, or descent only with a collapsed step: some parameters
        // sit against a discontinuity of the loss (a footprint edge). Let
        // random subsets of the blocks take a full-size step instead.
        const bool creeping = !accepted || best_eta < step_size / 32.0;
        if (creeping && block_size > 0 && x.size() > block_size) {
            const std::size_t blocks = x.size() / block_size;
            std::vector<double> sub(x.size());
            for (int a = 0; a < subset_attempts; ++a) {
                // Keep each block with probability 1/2, then 1/4, ...
                const std::uint64_t keep_one_in = std::uint64_t(2) << (a / 2);
                for (std::size_t b = 0; b < blocks; ++b) {
                    const bool keep = rng.next() % keep_one_in == 0;
                    for (std::size_t i = b * block_size; i < (b + 1) * block_size; ++i) {
                        sub[i] = keep ? dir[i] : 0.0;
                    }
                }
                line_search(sub, step_size, 4);
            }
        }
        if (!accepted) {
            report.converged = true;
            report.stop_reason = "no_descent";
            break;
        }
        x.swap(best_x);
        grad.swap(best_grad);
        cur = best;
        report.curve.push_back({it, cur});
        eta = std::min(best_eta * 2.0, max_step * step_size);

        const std::size_t n = report.curve.size();
        if (n > std::size_t(patience)) {
            const double old = report.curve[n - 1 - patience].loss.total;
            if (old - cur.total <= tolerance * old) {
                report.converged = true;
                report.stop_reason = "tolerance";
                break;
            }
        }
    }
    double sum = 0.0;
    for (const auto &c : report.curve) {
        sum += c.loss.depth_weight;
    }
    report.mean_depth_weight = sum / double(report.curve.size());
    return report;
}

FitPredictor::FitPredictor(OrthoCamera camera, FitConfig cfg)
    : camera_(std::move(camera)), cfg_(std::move(cfg)) {
    camera_.validate();
    cfg_.validate();
}

std::vector<DynamicGaussian> FitPredictor::state_gaussians(const PredictorState &s) {
    if (s.backend != kBackend) {
        throw PredictorError(fmt::format("fit predictor cannot use '{}' state", s.backend));
    }
    return scene_from_json(s.payload.at("scene")).gaussians;
}

ImageBuffer FitPredictor::state_frame(const PredictorState &s) {
    if (s.backend != kBackend) {
        throw PredictorError(fmt::format("fit predictor cannot use '{}' state", s.backend));
    }
    return frame_from_json(s.payload.at("frame"));
}

namespace {

struct StaticProblem {
    const OrthoCamera &cam;
    const FitConfig &cfg;
    const ImageBuffer &target;
    TokenLayout layout;
    std::vector<GaussianId> ids;
    LossWeights weights;

    std::vector<StaticGaussian> gaussians(const std::vector<double> &x) const {
        std::vector<StaticGaussian> out;
        out.reserve(layout.anchors.size());
        for (std::size_t i = 0; i < layout.anchors.size(); ++i) {
            out.push_back(static_from_params(&x[i * kStaticParams], layout.anchors[i]));
        }
        return out;
    }

    LossBreakdown loss(const std::vector<double> &x, std::vector<double> *grad) const {
        const auto gs = gaussians(x);
        if (!grad) {
            const ImageBuffer img = render(gs, ids, cam, cfg.raster);
            return total_static_loss(img, target, weights, DepthPolicy::SkipDegenerate);
        }
        LossBreakdown b;
        const RenderGradients rg = render_gradients(
            gs, ids, cam,
            [&](const ImageBuffer &img) {
                LossEval e;
                b = total_static_loss(img, target, weights, DepthPolicy::SkipDegenerate, &e.grad);
                e.value = b.total;
                return e;
            },
            cfg.raster);
        grad->assign(x.size(), 0.0);
        for (std::size_t i = 0; i < gs.size(); ++i) {
            static_grad_to_params(rg.grads[i], &x[i * kStaticParams],
                                  &(*grad)[i * kStaticParams]);
        }
        return b;
    }
};

std::vector<double> static_rates(const TokenLayout &layout, const OrthoCamera &cam) {
    std::vector<double> r(layout.anchors.size() * kStaticParams);
    for (std::size_t base = 0; base < r.size(); base += kStaticParams) {
        r[base + 0] = 0.2 / cam.fx; // a fifth of a pixel per unit step
        r[base + 1] = 0.2 / cam.fy;
        r[base + 2] = 0.01;
        for (int a = 3; a < 6; ++a) {
            r[base + a] = 0.01;
        }
        for (int a = 6; a < 10; ++a) {
            r[base + a] = 0.005;
        }
        r[base + 10] = 0.05;
        for (int a = 11; a < 14; ++a) {
            r[base + a] = 0.01;
        }
    }
    return r;
}

std::vector<double> initial_params(const StaticProblem &prob, std::uint32_t frame_index) {
    const FitConfig &cfg = prob.cfg;
    const OrthoCamera &cam = prob.cam;
    const std::size_t n = prob.layout.anchors.size();
    // Per-token offset distribution: centred on the anchor in x, y and on the
    // observed depth under the anchor in inverse-depth units (0 when missing).
    const Vec3 offset_std(cfg.offset_std_xy * prob.layout.cell_x,
                          cfg.offset_std_xy * prob.layout.cell_y, cfg.offset_std_z);
    const auto offsets = [&](std::size_t i) {
        const Vec3 &anc = prob.layout.anchors[i];
        const int px = std::clamp(int(std::floor(cam.fx * anc.x() + cam.cx)), 0, cam.width - 1);
        const int py = std::clamp(int(std::floor(cam.fy * anc.y() + cam.cy)), 0, cam.height - 1);
        const double d = prob.target.depth[std::size_t(py) * cam.width + px];
        const double z = d > 0.0 ? std::clamp(inverse_depth_map(d), -1.0, 1.0) : 0.0;
        return TruncNormalParams{Vec3(0.0, 0.0, z), offset_std};
    };
    const Vec3 scale(0.5 * prob.layout.cell_x, 0.5 * prob.layout.cell_y,
                     0.5 * prob.layout.cell_x);
    std::vector<double> x(n * kStaticParams, 0.0);
    // Offsets are written together with the colour of the pixel the Gaussian
    // now sits on, so every candidate starts pixel-aligned in colour too.
    const auto set_offset = [&](std::size_t i, const Vec3 &o) {
        double *p = &x[i * kStaticParams];
        for (int a = 0; a < 3; ++a) {
            p[a] = std::clamp(o[a], -1.0, 1.0);
        }
        const Vec3 &anc = prob.layout.anchors[i];
        const double u = cam.fx * (anc.x() + p[0]) + cam.cx;
        const double v = cam.fy * (anc.y() + p[1]) + cam.cy;
        const int px = std::clamp(int(std::floor(u)), 0, cam.width - 1);
        const int py = std::clamp(int(std::floor(v)), 0, cam.height - 1);
        const std::size_t pix = std::size_t(py) * cam.width + px;
        for (int a = 0; a < 3; ++a) {
            p[11 + a] = std::clamp(prob.target.rgb[pix * 3 + a], 0.0, 1.0);
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        double *p = &x[i * kStaticParams];
        for (int a = 0; a < 3; ++a) {
            p[3 + a] = std::log(std::max(scale[a], kMinScale));
        }
        p[6] = 1.0;
        p[10] = logit(cfg.init_opacity);
    }
    if (cfg.deterministic_init) {
        for (std::size_t i = 0; i < n; ++i) {
            set_offset(i, deterministic_offset(offsets(i)));
        }
        project_static(x);
        return x;
    }

    // Probabilistic init: a first draw for every token, then K-1 further draws
    // per token, each kept only if it lowers the loss with the others fixed.
    Rng rng(mix_seed(cfg.seed, frame_index));
    for (std::size_t i = 0; i < n; ++i) {
        set_offset(i, sample_truncnorm(offsets(i), rng));
    }
    project_static(x);
    if (cfg.candidates > 1) {
        double best = prob.loss(x, nullptr).total;
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 best_offset(x[i * kStaticParams], x[i * kStaticParams + 1],
                             x[i * kStaticParams + 2]);
            for (int k = 1; k < cfg.candidates; ++k) {
                set_offset(i, sample_truncnorm(offsets(i), rng));
                const double l = prob.loss(x, nullptr).total;
                if (!std::isfinite(l)) {
                    throw FitDiverged("non-finite loss while sampling initial offsets");
                }
                if (l < best) {
                    best = l;
                    best_offset = Vec3(x[i * kStaticParams], x[i * kStaticParams + 1],
                                       x[i * kStaticParams + 2]);
                }
            }
            set_offset(i, best_offset);
        }
    }
    return x;
}

StaticProblem make_static_problem(const OrthoCamera &cam, const FitConfig &cfg,
                                  const ImageBuffer &frame, std::uint32_t frame_index) {
    StaticProblem prob{cam, cfg, frame, make_layout(cfg, cam), {}, cfg.weights};
    prob.weights.skip_missing_depth = cfg.skip_missing_depth;
    prob.weights.coverage_weighted_depth = cfg.coverage_weighted_depth;
    for (std::size_t i = 0; i < prob.layout.anchors.size(); ++i) {
        prob.ids.push_back({frame_index, static_cast<std::uint32_t>(i)});
    }
    return prob;
}

} // namespace

std::vector<StaticGaussian> FitPredictor::initial_gaussians(const ImageBuffer &frame,
                                                            std::uint32_t frame_index) const {
    check_frame(frame, camera_);
    const StaticProblem prob = make_static_problem(camera_, cfg_, frame, frame_index);
    return prob.gaussians(initial_params(prob, frame_index));
}

EncodeResult FitPredictor::encode(const ImageBuffer &frame, std::uint32_t frame_index) {
    check_frame(frame, camera_);
    StaticProblem prob = make_static_problem(camera_, cfg_, frame, frame_index);
    std::vector<double> x = initial_params(prob, frame_index);
    prob.weights = freeze_depth_weight(prob.weights, prob.loss(x, nullptr));

    Minimizer opt;
    opt.iterations = cfg_.iterations;
    opt.step_size = cfg_.step_size;
    opt.tolerance = cfg_.tolerance;
    opt.patience = cfg_.patience;
    opt.block_size = kStaticParams;
    opt.seed = mix_seed(cfg_.seed, frame_index);
    encode_report_ = opt.run(
        x, static_rates(prob.layout, camera_),
        [&](const std::vector<double> &p, std::vector<double> *g) { return prob.loss(p, g); },
        project_static);
    spdlog::debug("fit encode frame {}: loss {:.6g} -> {:.6g} in {} iterations", frame_index,
                  encode_report_.curve.front().loss.total, encode_report_.curve.back().loss.total,
                  encode_report_.curve.back().iter);

    EncodeResult out;
    out.gaussians = prob.gaussians(x);
    out.ids = prob.ids;
    Scene scene{double(frame_index), {}};
    for (std::size_t i = 0; i < out.gaussians.size(); ++i) {
        scene.gaussians.push_back({out.gaussians[i], identity_deformation(0.0), out.ids[i]});
    }
    out.state.backend = kBackend;
    out.state.frame_index = frame_index;
    out.state.payload = Json{{"scene", scene_to_json(scene)}, {"frame", frame_to_json(frame)}};
    return out;
}

PredictorOutput FitPredictor::decode(const PredictorState &prev, const PredictorState &cur,
                                     const DecodeContext &ctx) {
    const auto prev_g = state_gaussians(prev);
    const auto cur_g = state_gaussians(cur);
    const ImageBuffer prev_frame = state_frame(prev);
    const ImageBuffer cur_frame = state_frame(cur);
    check_frame(prev_frame, camera_);
    check_frame(cur_frame, camera_);

    // Supervision times in local interval coordinates.
    std::vector<double> times{0.0};
    std::vector<ImageBuffer> targets{prev_frame};
    std::vector<Plane> masks;
    const bool use_masks =
        ctx.mask_prev && ctx.mask_cur &&
        std::all_of(ctx.intermediates.begin(), ctx.intermediates.end(),
                    [](const TimedFrame &f) { return f.mask.has_value(); });
    if (use_masks) {
        masks.push_back(*ctx.mask_prev);
    }
    for (const auto &f : ctx.intermediates) {
        if (!(f.t > 0.0 && f.t < 1.0)) {
            throw Error(fmt::format("intermediate frame time {} outside (0, 1)", f.t));
        }
        check_frame(f.frame, camera_);
        times.push_back(f.t);
        targets.push_back(f.frame);
        if (use_masks) {
            masks.push_back(*f.mask);
        }
    }
    times.push_back(1.0);
    targets.push_back(cur_frame);
    if (use_masks) {
        masks.push_back(*ctx.mask_cur);
    }

    const std::size_t np = prev_g.size();
    const std::size_t nc = cur_g.size();
    // Phase masks: which of the two sets is rendered (and optimised).
    struct Phase {
        bool prev;
        bool cur;
    };
    Phase phase{true, true};
    const auto active = [&](std::size_t i) { return i < np ? phase.prev : phase.cur; };

    const auto dynamic_set = [&](const std::vector<double> &x) {
        std::vector<DynamicGaussian> set;
        std::vector<std::size_t> index;
        std::vector<GaussianId> set_ids;
        for (std::size_t i = 0; i < np + nc; ++i) {
            if (!active(i)) {
                continue;
            }
            const bool is_prev = i < np;
            const DynamicGaussian &src = is_prev ? prev_g[i] : cur_g[i - np];
            set.push_back({src.base, deform_from_params(&x[i * kDynamicParams], is_prev ? 0.0 : 1.0),
                           src.id});
            index.push_back(i);
            set_ids.push_back(src.id);
        }
        return std::tuple{set, index, set_ids};
    };

    LossWeights weights = cfg_.weights;
    weights.skip_missing_depth = cfg_.skip_missing_depth;
    weights.coverage_weighted_depth = cfg_.coverage_weighted_depth;
    const auto eval = [&](const std::vector<double> &x, std::vector<double> *grad) {
        const auto [set, index, set_ids] = dynamic_set(x);
        std::vector<std::vector<StaticGaussian>> at_t;
        std::vector<ImageBuffer> rendered;
        for (const double t : times) {
            std::vector<StaticGaussian> gs;
            gs.reserve(set.size());
            for (const auto &g : set) {
                gs.push_back(materialize(g, t));
            }
            rendered.push_back(render(gs, set_ids, camera_, cfg_.raster));
            at_t.push_back(std::move(gs));
        }
        std::vector<ImageGrad> image_grads;
        const LossBreakdown b =
            total_dynamic_loss(rendered, targets, weights, masks, DepthPolicy::SkipDegenerate,
                               grad ? &image_grads : nullptr);
        if (grad) {
            grad->assign(x.size(), 0.0);
            for (std::size_t ti = 0; ti < times.size(); ++ti) {
                const auto gg =
                    render_backward(at_t[ti], set_ids, camera_, image_grads[ti], cfg_.raster);
                for (std::size_t k = 0; k < set.size(); ++k) {
                    const DynamicGaussianGrad dg = chain_materialize(set[k], times[ti], gg[k]);
                    double *out = &(*grad)[index[k] * kDynamicParams];
                    out[0] += dg.velocity.x();
                    out[1] += dg.velocity.y();
                    out[2] += dg.velocity.z();
                    out[3] += dg.gamma0 * set[k].deform.gamma0;
                    out[4] += dg.gamma1;
                }
            }
        }
        return b;
    };

    std::vector<double> x((np + nc) * kDynamicParams, 0.0);
    for (std::size_t i = 0; i < np + nc; ++i) {
        double *p = &x[i * kDynamicParams];
        p[3] = std::log(cfg_.init_gamma0);
        p[4] = cfg_.init_gamma1;
    }
    project_dynamic(x);

    // Each field is first fitted on its own (the previous set deformed towards
    // the later frames, the current set towards the earlier ones), then both
    // are refined together on the fused set. Fitting the fused set directly
    // from v = 0 tends to settle on a cross-fade of two half-moved copies.
    const std::array<Phase, 3> phases{Phase{true, false}, Phase{false, true}, Phase{true, true}};
    decode_report_ = FitReport{};
    double weight_sum = 0.0;
    for (const Phase &ph : phases) {
        phase = ph;
        if ((ph.prev && !ph.cur && np == 0) || (ph.cur && !ph.prev && nc == 0)) {
            continue;
        }
        std::vector<double> rates(x.size(), 0.0);
        for (std::size_t i = 0; i < np + nc; ++i) {
            if (!active(i)) {
                continue;
            }
            double *r = &rates[i * kDynamicParams];
            r[0] = 0.2 / camera_.fx;
            r[1] = 0.2 / camera_.fy;
            r[2] = 0.002;
            r[3] = 0.05;
            r[4] = 0.02;
        }
        weights = cfg_.weights;
        weights.skip_missing_depth = cfg_.skip_missing_depth;
    weights.coverage_weighted_depth = cfg_.coverage_weighted_depth;
        weights = freeze_depth_weight(weights, eval(x, nullptr));

        Minimizer opt;
        opt.iterations = cfg_.decode_iterations;
        opt.step_size = cfg_.step_size;
        opt.tolerance = cfg_.tolerance;
        opt.patience = cfg_.patience;
        opt.block_size = kDynamicParams;
        opt.seed = mix_seed(cfg_.seed, (std::uint64_t(prev.frame_index) << 32) | cur.frame_index);
        const FitReport r = opt.run(x, rates, eval, project_dynamic);
        const int offset = decode_report_.curve.empty() ? 0 : decode_report_.curve.back().iter + 1;
        for (auto c : r.curve) {
            c.iter += offset;
            decode_report_.curve.push_back(c);
        }
        decode_report_.evaluations += r.evaluations;
        decode_report_.converged = r.converged;
        weight_sum += r.mean_depth_weight * double(r.curve.size());
    }
    if (!decode_report_.curve.empty()) {
        decode_report_.mean_depth_weight = weight_sum / double(decode_report_.curve.size());
        spdlog::debug("fit decode {}->{}: final loss {:.6g}", prev.frame_index, cur.frame_index,
                      decode_report_.curve.back().loss.total);
    }

    PredictorOutput out;
    for (std::size_t i = 0; i < np; ++i) {
        out.forward_deform[prev_g[i].id] = deform_from_params(&x[i * kDynamicParams], 0.0);
    }
    for (std::size_t i = 0; i < nc; ++i) {
        out.current_static.push_back(cur_g[i].base);
        out.current_ids.push_back(cur_g[i].id);
        out.backward_deform.push_back(deform_from_params(&x[(np + i) * kDynamicParams], 1.0));
    }
    return out;
}

} // namespace gss
