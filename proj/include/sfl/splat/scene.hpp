// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "sfl/geo/camera.hpp"
#include "sfl/num/rng.hpp"

namespace sfl::splat {

/// Anisotropic 3D Gaussian: covariance is R_q diag(scale^2) R_q^T, opacity
/// sigma and view-independent RGB color, all in world units.
struct GaussianPrimitive {
    geo::Vec3 mu = {0, 0, 0};
    geo::Vec3 scale = {1, 1, 1};                 // positive axis scales
    std::array<double, 4> quat = {1, 0, 0, 0};   // (w, x, y, z), unit norm
    double sigma = 1.0;                          // opacity in [0, 1]
    geo::Vec3 color = {1, 1, 1};                 // rgb in [0, 1]
};

struct Scene {
    std::vector<GaussianPrimitive> primitives;
    double extent = 1.0;  // bounding-box half-width; primitives stay within 2x
};

bool is_valid_primitive(const GaussianPrimitive& p, double tol = 1e-9);
void require_valid_scene(const Scene& s, const std::string& who);

/// n random content primitives in the [-extent, extent]^3 box plus 6 large
/// wall primitives near +-1.9*extent so every inward view has background.
Scene gen_scene(num::Rng& rng, int n_primitives, double extent);

struct DegradeParams {
    double tau_vis = 0.05;   // peak-alpha visibility threshold
    double eta = 0.02;       // position jitter std, in units of extent
    bool sigma_jitter = true;  // multiply surviving opacities by U[0.5, 1]
};

/// Simulates a sparse reconstruction: drops every primitive whose rendered
/// peak alpha is below tau_vis in all input cameras, then jitters survivors'
/// positions and dampens their opacities. Deterministic given the rng.
Scene degrade(const Scene& scene, const std::vector<geo::CameraPose>& input_cameras, num::Rng& rng,
              const DegradeParams& params);

// Scene file: JSON list of primitives plus the extent.
std::string scene_to_json(const Scene& s);
Scene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const Scene& s);
Scene load_scene(const std::string& path);

}  // namespace sfl::splat
