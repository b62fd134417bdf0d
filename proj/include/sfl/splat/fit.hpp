// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "sfl/io/image.hpp"
#include "sfl/splat/render.hpp"

namespace sfl::splat {

struct FitResult {
    Scene scene;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Photometric scene fitting: Adam on all primitive fields against the mean
/// squared error of render(scene, pose) vs each target frame. Invariants
/// (positive scales, unit quaternion, [0,1] opacity/color) are restored after
/// every step. Throws NumericalError naming the step on non-finite loss.
FitResult fit_scene(const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& frames, const Scene& init,
                    int steps, double lr);

/// Mean squared photometric error of a scene against target frames.
double photometric_loss(const Scene& scene, const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& frames);

}  // namespace sfl::splat
