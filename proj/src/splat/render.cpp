// SPDX-License-Identifier: Apache-2.0

#include "sfl/splat/render.hpp"

#include <algorithm>
#include <cmath>

namespace sfl::splat {

namespace {

using geo::Mat3;
using geo::Vec3;

struct Ctx {
    bool in_front = false;
    Projected proj;
    Vec3 p_cam;        // camera-frame position
    Mat3 w;            // cam-from-world rotation (R^T)
    Mat3 rq;           // orientation matrix of the normalized quaternion
    std::array<double, 4> qhat;
    double qnorm = 1.0;
    Vec3 s2;           // squared scales
    Mat3 sigma_world;  // R_q diag(s^2) R_q^T
    double jac[6];     // row-major 2x3 projection Jacobian
    double m[6];       // row-major 2x3, J * W
};

Mat3 quat_to_mat(const std::array<double, 4>& q) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Ctx project_ctx(const GaussianPrimitive& prim, const geo::CameraPose& cam) {
    Ctx c;
    c.w = geo::mat_transpose(cam.R);
    c.p_cam = geo::mat_vec(c.w, geo::sub(prim.mu, cam.t));
    double z = c.p_cam[2];
    if (z <= kNearPlane) return c;
    c.in_front = true;

    double qn = 0.0;
    for (double v : prim.quat) qn += v * v;
    c.qnorm = std::sqrt(qn);
    for (int i = 0; i < 4; ++i) c.qhat[static_cast<size_t>(i)] = prim.quat[static_cast<size_t>(i)] / c.qnorm;
    c.rq = quat_to_mat(c.qhat);
    c.s2 = {prim.scale[0] * prim.scale[0], prim.scale[1] * prim.scale[1], prim.scale[2] * prim.scale[2]};
    // sigma_world = Rq * diag(s2) * Rq^T
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += c.rq[i * 3 + k] * c.s2[static_cast<size_t>(k)] * c.rq[j * 3 + k];
            c.sigma_world[i * 3 + j] = acc;
        }
    }

    double x = c.p_cam[0], y = c.p_cam[1];
    c.proj.depth = z;
    c.proj.mean2d[0] = cam.fx * x / z + cam.cx;
    c.proj.mean2d[1] = cam.fy * y / z + cam.cy;
    c.jac[0] = cam.fx / z;
    c.jac[1] = 0.0;
    c.jac[2] = -cam.fx * x / (z * z);
    c.jac[3] = 0.0;
    c.jac[4] = cam.fy / z;
    c.jac[5] = -cam.fy * y / (z * z);
    // m = J * W (2x3)
    for (int r = 0; r < 2; ++r) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += c.jac[r * 3 + k] * c.w[k * 3 + j];
            c.m[r * 3 + j] = acc;
        }
    }
    // cov2d = M * Sigma * M^T + regularizer
    double ms[6];  // M * Sigma, 2x3
    for (int r = 0; r < 2; ++r) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += c.m[r * 3 + k] * c.sigma_world[k * 3 + j];
            ms[r * 3 + j] = acc;
        }
    }
    double a = 0.0, b = 0.0, d = 0.0;
    for (int k = 0; k < 3; ++k) {
        a += ms[k] * c.m[k];
        b += ms[k] * c.m[3 + k];
        d += ms[3 + k] * c.m[3 + k];
    }
    c.proj.cov2d[0] = a + kCovRegularizer;
    c.proj.cov2d[1] = b;
    c.proj.cov2d[2] = d + kCovRegularizer;
    return c;
}

struct Contribution {
    int order_pos;  // index into the sorted order
    double alpha;
    double gauss;
    double dx, dy;       // pixel center minus mean2d
    double t_before;     // transmittance before compositing this splat
    bool clamped;        // alpha hit kAlphaMax
};

// Walks the sorted splat list for one pixel, invoking fn per composited splat.
// Returns accumulated (rgb, opacity).
template <typename Fn>
void composite_pixel(const std::vector<const Ctx*>& order, const std::vector<const GaussianPrimitive*>& prims,
                     double px, double py, Fn&& fn) {
    double transmit = 1.0;
    for (size_t oi = 0; oi < order.size(); ++oi) {
        const Ctx& c = *order[oi];
        const GaussianPrimitive& p = *prims[oi];
        double dx = px - c.proj.mean2d[0];
        double dy = py - c.proj.mean2d[1];
        double a = c.proj.cov2d[0], b = c.proj.cov2d[1], d = c.proj.cov2d[2];
        double det = a * d - b * b;
        double q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        if (q > kMahalanobisMax) continue;  // 3-sigma footprint
        double g = std::exp(-0.5 * q);
        double raw = p.sigma * g;
        bool clamped = raw > kAlphaMax;
        double alpha = clamped ? kAlphaMax : raw;
        if (alpha < kAlphaMin) continue;
        Contribution contrib{static_cast<int>(oi), alpha, g, dx, dy, transmit, clamped};
        fn(contrib, p);
        transmit *= 1.0 - alpha;
        if (transmit < kTransmitMin) break;
    }
}

}  // namespace

std::optional<Projected> project(const GaussianPrimitive& prim, const geo::CameraPose& camera) {
    geo::require_valid_pose(camera, "project");
    Ctx c = project_ctx(prim, camera);
    if (!c.in_front) return std::nullopt;
    return c.proj;
}

Rendering render(const Scene& scene, const geo::CameraPose& camera) {
    geo::require_valid_pose(camera, "render");
    Rendering out;
    out.rgb = io::ImageRGB(camera.height, camera.width);
    out.opacity = io::ImageGray(camera.height, camera.width);

    std::vector<Ctx> ctxs(scene.primitives.size());
    std::vector<std::pair<double, size_t>> depth_index;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        ctxs[i] = project_ctx(scene.primitives[i], camera);
        if (ctxs[i].in_front) depth_index.emplace_back(ctxs[i].proj.depth, i);
    }
    std::sort(depth_index.begin(), depth_index.end());
    out.depth_order_len = static_cast<int64_t>(depth_index.size());

    std::vector<const Ctx*> order;
    std::vector<const GaussianPrimitive*> prims;
    for (auto [depth, idx] : depth_index) {
        order.push_back(&ctxs[idx]);
        prims.push_back(&scene.primitives[idx]);
    }

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double* rgb = out.rgb.px(y, x);
            double& op = out.opacity.at(y, x);
            composite_pixel(order, prims, x + 0.5, y + 0.5, [&](const Contribution& c, const GaussianPrimitive& p) {
                double w = c.t_before * c.alpha;
                rgb[0] += w * p.color[0];
                rgb[1] += w * p.color[1];
                rgb[2] += w * p.color[2];
                op += w;
            });
        }
    }
    return out;
}

std::vector<PrimitiveGrad> render_backward(const Scene& scene, const geo::CameraPose& camera,
                                           const io::ImageRGB& d_rgb, const io::ImageGray& d_opacity) {
    geo::require_valid_pose(camera, "render_backward");
    if (d_rgb.height != camera.height || d_rgb.width != camera.width || d_opacity.height != camera.height ||
        d_opacity.width != camera.width) {
        throw std::invalid_argument("render_backward: gradient image extents do not match the camera");
    }

    std::vector<Ctx> ctxs(scene.primitives.size());
    std::vector<std::pair<double, size_t>> depth_index;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        ctxs[i] = project_ctx(scene.primitives[i], camera);
        if (ctxs[i].in_front) depth_index.emplace_back(ctxs[i].proj.depth, i);
    }
    std::sort(depth_index.begin(), depth_index.end());

    std::vector<const Ctx*> order;
    std::vector<const GaussianPrimitive*> prims;
    std::vector<size_t> order_to_scene;
    for (auto [depth, idx] : depth_index) {
        order.push_back(&ctxs[idx]);
        prims.push_back(&scene.primitives[idx]);
        order_to_scene.push_back(idx);
    }

    // Projection-space gradients per composited primitive.
    struct ProjGrad {
        double mean2d[2] = {0, 0};
        double cov[4] = {0, 0, 0, 0};  // full 2x2, row-major
        double sigma = 0;
        Vec3 color = {0, 0, 0};
    };
    std::vector<ProjGrad> pg(order.size());
    std::vector<Contribution> contribs;

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const double* dc = d_rgb.px(y, x);
            double dop = d_opacity.at(y, x);
            if (dc[0] == 0.0 && dc[1] == 0.0 && dc[2] == 0.0 && dop == 0.0) continue;
            contribs.clear();
            composite_pixel(order, prims, x + 0.5, y + 0.5,
                            [&](const Contribution& c, const GaussianPrimitive&) { contribs.push_back(c); });
            // Reverse walk with suffix sums of downstream contributions.
            Vec3 suffix_rgb = {0, 0, 0};
            double suffix_op = 0.0;
            for (size_t ri = contribs.size(); ri-- > 0;) {
                const Contribution& c = contribs[ri];
                const GaussianPrimitive& p = *prims[static_cast<size_t>(c.order_pos)];
                ProjGrad& g = pg[static_cast<size_t>(c.order_pos)];
                double w = c.t_before * c.alpha;
                // color
                g.color[0] += w * dc[0];
                g.color[1] += w * dc[1];
                g.color[2] += w * dc[2];
                // alpha: own contribution plus attenuation of everything behind
                double dalpha = c.t_before * (p.color[0] * dc[0] + p.color[1] * dc[1] + p.color[2] * dc[2] + dop);
                dalpha -= (suffix_rgb[0] * dc[0] + suffix_rgb[1] * dc[1] + suffix_rgb[2] * dc[2] + suffix_op * dop) /
                          (1.0 - c.alpha);
                suffix_rgb[0] += w * p.color[0];
                suffix_rgb[1] += w * p.color[1];
                suffix_rgb[2] += w * p.color[2];
                suffix_op += w;
                if (c.clamped) continue;  // alpha pinned at kAlphaMax
                g.sigma += c.gauss * dalpha;
                double dgauss = p.sigma * dalpha;
                double dq = -0.5 * c.gauss * dgauss;
                const Ctx& ctx = *order[static_cast<size_t>(c.order_pos)];
                double a = ctx.proj.cov2d[0], b = ctx.proj.cov2d[1], d = ctx.proj.cov2d[2];
                double det = a * d - b * b;
                double adx = (d * c.dx - b * c.dy) / det;  // (A * delta)_x
                double ady = (a * c.dy - b * c.dx) / det;  // (A * delta)_y
                // q = delta^T A delta: d(delta) = 2 A delta, d(S) = -(A d)(A d)^T
                g.mean2d[0] -= dq * 2.0 * adx;
                g.mean2d[1] -= dq * 2.0 * ady;
                g.cov[0] -= dq * adx * adx;
                g.cov[1] -= dq * adx * ady;
                g.cov[2] -= dq * ady * adx;
                g.cov[3] -= dq * ady * ady;
            }
        }
    }

    // Projection backward per primitive.
    std::vector<PrimitiveGrad> grads(scene.primitives.size());
    for (size_t oi = 0; oi < order.size(); ++oi) {
        const Ctx& c = *order[oi];
        const GaussianPrimitive& p = *prims[oi];
        const ProjGrad& g = pg[oi];
        PrimitiveGrad& out = grads[order_to_scene[oi]];

        out.sigma += g.sigma;
        out.color[0] += g.color[0];
        out.color[1] += g.color[1];
        out.color[2] += g.color[2];

        // dSigma = M^T G M (3x3), dM = (G + G^T) M Sigma
        double gm[6];  // G * M, 2x3
        for (int r = 0; r < 2; ++r) {
            for (int j = 0; j < 3; ++j) {
                gm[r * 3 + j] = g.cov[r * 2 + 0] * c.m[j] + g.cov[r * 2 + 1] * c.m[3 + j];
            }
        }
        Mat3 dsigma;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                dsigma[i * 3 + j] = c.m[i] * gm[j] + c.m[3 + i] * gm[3 + j];
            }
        }
        double msig[6];  // M * Sigma, 2x3
        for (int r = 0; r < 2; ++r) {
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += c.m[r * 3 + k] * c.sigma_world[k * 3 + j];
                msig[r * 3 + j] = acc;
            }
        }
        double dm[6];
        for (int r = 0; r < 2; ++r) {
            for (int j = 0; j < 3; ++j) {
                double gsym0 = g.cov[r * 2 + 0] + g.cov[0 * 2 + r];
                double gsym1 = g.cov[r * 2 + 1] + g.cov[1 * 2 + r];
                dm[r * 3 + j] = gsym0 * msig[j] + gsym1 * msig[3 + j];
            }
        }
        // dJ = dM * W^T
        double dj[6];
        for (int r = 0; r < 2; ++r) {
            for (int jcol = 0; jcol < 3; ++jcol) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += dm[r * 3 + k] * c.w[jcol * 3 + k];
                dj[r * 3 + jcol] = acc;
            }
        }
        // p_cam gradients through J and mean2d
        double xc = c.p_cam[0], yc = c.p_cam[1], zc = c.p_cam[2];
        double fx = camera.fx, fy = camera.fy;
        Vec3 dp = {0, 0, 0};
        dp[0] += dj[2] * (-fx / (zc * zc));
        dp[1] += dj[5] * (-fy / (zc * zc));
        dp[2] += dj[0] * (-fx / (zc * zc)) + dj[4] * (-fy / (zc * zc)) + dj[2] * (2.0 * fx * xc / (zc * zc * zc)) +
                 dj[5] * (2.0 * fy * yc / (zc * zc * zc));
        dp[0] += g.mean2d[0] * fx / zc;
        dp[1] += g.mean2d[1] * fy / zc;
        dp[2] += -g.mean2d[0] * fx * xc / (zc * zc) - g.mean2d[1] * fy * yc / (zc * zc);
        // mu = world point: p_cam = W (mu - t), dmu = W^T dp = R dp
        Vec3 dmu = geo::mat_vec(camera.R, dp);
        out.mu[0] += dmu[0];
        out.mu[1] += dmu[1];
        out.mu[2] += dmu[2];

        // Sigma = Rq diag(s2) Rq^T; dsigma is symmetric by construction.
        // dRq = 2 dSigma Rq D, dD_jj = (Rq^T dSigma Rq)_jj, ds_j = 2 s_j dD_jj
        Mat3 drq;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += 2.0 * dsigma[i * 3 + k] * c.rq[k * 3 + j];
                drq[i * 3 + j] = acc * c.s2[static_cast<size_t>(j)];
            }
        }
        for (int j = 0; j < 3; ++j) {
            double dd = 0.0;
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 3; ++k) dd += c.rq[i * 3 + j] * dsigma[i * 3 + k] * c.rq[k * 3 + j];
            }
            out.scale[static_cast<size_t>(j)] += 2.0 * p.scale[static_cast<size_t>(j)] * dd;
        }

        // Quaternion backward through the rotation matrix and normalization.
        double w = c.qhat[0], x = c.qhat[1], y = c.qhat[2], z = c.qhat[3];
        auto gr = [&](int i, int j) { return drq[i * 3 + j]; };
        double dw = 2.0 * (gr(0, 1) * -z + gr(0, 2) * y + gr(1, 0) * z + gr(1, 2) * -x + gr(2, 0) * -y + gr(2, 1) * x);
        double dx = 2.0 * (gr(0, 1) * y + gr(0, 2) * z + gr(1, 0) * y + gr(1, 1) * -2.0 * x + gr(1, 2) * -w +
                           gr(2, 0) * z + gr(2, 1) * w + gr(2, 2) * -2.0 * x);
        double dy = 2.0 * (gr(0, 0) * -2.0 * y + gr(0, 1) * x + gr(0, 2) * w + gr(1, 0) * x + gr(1, 2) * z +
                           gr(2, 0) * -w + gr(2, 1) * z + gr(2, 2) * -2.0 * y);
        double dz = 2.0 * (gr(0, 0) * -2.0 * z + gr(0, 1) * -w + gr(0, 2) * x + gr(1, 0) * w + gr(1, 1) * -2.0 * z +
                           gr(1, 2) * y + gr(2, 0) * x + gr(2, 1) * y);
        std::array<double, 4> dqhat = {dw, dx, dy, dz};
        double radial = 0.0;
        for (int i = 0; i < 4; ++i) radial += dqhat[static_cast<size_t>(i)] * c.qhat[static_cast<size_t>(i)];
        for (int i = 0; i < 4; ++i) {
            out.quat[static_cast<size_t>(i)] +=
                (dqhat[static_cast<size_t>(i)] - radial * c.qhat[static_cast<size_t>(i)]) / c.qnorm;
        }
    }
    return grads;
}

double peak_alpha(const GaussianPrimitive& prim, const geo::CameraPose& camera) {
    Ctx c = project_ctx(prim, camera);
    if (!c.in_front) return 0.0;
    double a = c.proj.cov2d[0], b = c.proj.cov2d[1], d = c.proj.cov2d[2];
    double det = a * d - b * b;
    double best = 0.0;
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double dx = x + 0.5 - c.proj.mean2d[0];
            double dy = y + 0.5 - c.proj.mean2d[1];
            double q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
            if (q > kMahalanobisMax) continue;
            double alpha = std::min(prim.sigma * std::exp(-0.5 * q), kAlphaMax);
            best = std::max(best, alpha);
        }
    }
    return best;
}

}  // namespace sfl::splat
