// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "sfl/io/image.hpp"
#include "sfl/splat/scene.hpp"

namespace sfl::splat {

// Compositing constants shared by the renderer and its test oracles.
inline constexpr double kAlphaMax = 0.999;   // keeps transmittance positive
inline constexpr double kAlphaMin = 1e-4;    // below this a splat is skipped
inline constexpr double kTransmitMin = 1e-4; // early stop once this opaque
inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovRegularizer = 0.3;  // px^2 added to cov2d diagonal
inline constexpr double kMahalanobisMax = 9.0;  // 3-sigma evaluation cutoff (squared)

struct Projected {
    double mean2d[2] = {0, 0};
    double cov2d[3] = {0, 0, 0};  // (xx, xy, yy) after +kCovRegularizer*I
    double depth = 0;
};

/// EWA projection of one primitive: perspective-projected mean and
/// J W Sigma W^T J^T covariance. Empty when the primitive is behind the
/// near plane (excluded, not fatal).
std::optional<Projected> project(const GaussianPrimitive& prim, const geo::CameraPose& camera);

struct Rendering {
    io::ImageRGB rgb;
    io::ImageGray opacity;  // accumulated alpha per pixel
    int64_t depth_order_len = 0;  // primitives entering the composite order
};

/// Front-to-back alpha compositing over a black background, per-pixel
/// alpha_i = clamp(sigma_i * exp(-0.5 d^T cov2d^-1 d), 0, kAlphaMax).
Rendering render(const Scene& scene, const geo::CameraPose& camera);

/// Per-primitive gradients, same field layout as GaussianPrimitive.
struct PrimitiveGrad {
    geo::Vec3 mu = {0, 0, 0};
    geo::Vec3 scale = {0, 0, 0};
    std::array<double, 4> quat = {0, 0, 0, 0};
    double sigma = 0.0;
    geo::Vec3 color = {0, 0, 0};
};

/// Reverse-mode pass of render: given dL/drgb and dL/dopacity images,
/// accumulates gradients for every primitive field. The forward compositing
/// rules (skip and early-stop thresholds) are replayed exactly.
std::vector<PrimitiveGrad> render_backward(const Scene& scene, const geo::CameraPose& camera,
                                           const io::ImageRGB& d_rgb, const io::ImageGray& d_opacity);

/// Peak pre-compositing alpha of one primitive over the pixel grid
/// (frustum-limited, ignores occlusion); the degrade visibility measure.
double peak_alpha(const GaussianPrimitive& prim, const geo::CameraPose& camera);

}  // namespace sfl::splat
