// SPDX-License-Identifier: Apache-2.0

#include "sfl/splat/fit.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/error.hpp"

namespace sfl::splat {

namespace {

constexpr int kFields = 14;  // mu3 + scale3 + quat4 + sigma + color3

void flatten(const GaussianPrimitive& p, double* out) {
    out[0] = p.mu[0];
    out[1] = p.mu[1];
    out[2] = p.mu[2];
    out[3] = p.scale[0];
    out[4] = p.scale[1];
    out[5] = p.scale[2];
    out[6] = p.quat[0];
    out[7] = p.quat[1];
    out[8] = p.quat[2];
    out[9] = p.quat[3];
    out[10] = p.sigma;
    out[11] = p.color[0];
    out[12] = p.color[1];
    out[13] = p.color[2];
}

void flatten_grad(const PrimitiveGrad& g, double* out) {
    out[0] = g.mu[0];
    out[1] = g.mu[1];
    out[2] = g.mu[2];
    out[3] = g.scale[0];
    out[4] = g.scale[1];
    out[5] = g.scale[2];
    out[6] = g.quat[0];
    out[7] = g.quat[1];
    out[8] = g.quat[2];
    out[9] = g.quat[3];
    out[10] = g.sigma;
    out[11] = g.color[0];
    out[12] = g.color[1];
    out[13] = g.color[2];
}

void unflatten(const double* in, double extent, GaussianPrimitive& p) {
    p.mu = {std::clamp(in[0], -2.0 * extent, 2.0 * extent), std::clamp(in[1], -2.0 * extent, 2.0 * extent),
            std::clamp(in[2], -2.0 * extent, 2.0 * extent)};
    double min_scale = 1e-4 * extent;
    p.scale = {std::max(in[3], min_scale), std::max(in[4], min_scale), std::max(in[5], min_scale)};
    double qn = std::sqrt(in[6] * in[6] + in[7] * in[7] + in[8] * in[8] + in[9] * in[9]);
    if (qn < 1e-12) {
        p.quat = {1, 0, 0, 0};
    } else {
        p.quat = {in[6] / qn, in[7] / qn, in[8] / qn, in[9] / qn};
    }
    p.sigma = std::clamp(in[10], 0.0, 1.0);
    p.color = {std::clamp(in[11], 0.0, 1.0), std::clamp(in[12], 0.0, 1.0), std::clamp(in[13], 0.0, 1.0)};
}

}  // namespace

double photometric_loss(const Scene& scene, const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& frames) {
    double acc = 0.0;
    int64_t count = 0;
    for (const auto& [target, pose] : frames) {
        Rendering r = render(scene, pose);
        for (size_t i = 0; i < r.rgb.data.size(); ++i) {
            double d = r.rgb.data[i] - target.data[i];
            acc += d * d;
        }
        count += static_cast<int64_t>(r.rgb.data.size());
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

FitResult fit_scene(const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& frames, const Scene& init,
                    int steps, double lr) {
    if (frames.empty()) throw std::invalid_argument("fit_scene: need at least one frame");
    if (steps < 0) throw std::invalid_argument("fit_scene: steps must be nonnegative");
    for (const auto& [target, pose] : frames) {
        if (target.height != pose.height || target.width != pose.width) {
            throw std::invalid_argument("fit_scene: frame extents do not match its camera");
        }
    }

    FitResult result;
    result.scene = init;
    result.initial_loss = photometric_loss(init, frames);
    result.final_loss = result.initial_loss;
    if (steps == 0) return result;

    size_t n = init.primitives.size() * kFields;
    std::vector<double> theta(n), grad(n), m(n, 0.0), v(n, 0.0);
    for (size_t i = 0; i < init.primitives.size(); ++i) flatten(result.scene.primitives[i], &theta[i * kFields]);

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int64_t total = 0;
    for (const auto& [target, pose] : frames) total += static_cast<int64_t>(target.data.size());

    for (int step = 1; step <= steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (const auto& [target, pose] : frames) {
            Rendering r = render(result.scene, pose);
            io::ImageRGB d_rgb(pose.height, pose.width);
            io::ImageGray d_op(pose.height, pose.width);
            for (size_t i = 0; i < r.rgb.data.size(); ++i) {
                double d = r.rgb.data[i] - target.data[i];
                loss += d * d;
                d_rgb.data[i] = 2.0 * d / static_cast<double>(total);
            }
            auto pgrads = render_backward(result.scene, pose, d_rgb, d_op);
            for (size_t i = 0; i < pgrads.size(); ++i) {
                double tmp[kFields];
                flatten_grad(pgrads[i], tmp);
                for (int f = 0; f < kFields; ++f) grad[i * kFields + f] += tmp[f];
            }
        }
        loss /= static_cast<double>(total);
        if (!std::isfinite(loss)) {
            throw NumericalError("fit_scene: non-finite loss at step " + std::to_string(step));
        }
        double bc1 = 1.0 - std::pow(b1, step), bc2 = 1.0 - std::pow(b2, step);
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
        for (size_t i = 0; i < result.scene.primitives.size(); ++i) {
            unflatten(&theta[i * kFields], result.scene.extent, result.scene.primitives[i]);
            // Clamps may adjust the raw parameters; keep both copies in sync.
            flatten(result.scene.primitives[i], &theta[i * kFields]);
        }
    }
    result.final_loss = photometric_loss(result.scene, frames);
    return result;
}

}  // namespace sfl::splat
