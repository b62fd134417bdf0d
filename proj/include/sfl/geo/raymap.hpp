// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sfl/geo/camera.hpp"

namespace sfl::geo {

/// Per-pixel ray in Plücker form: unit world direction d and moment
/// m = o x d about the camera center o. Layout H x W x 6 as (d, m).
struct RayMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // h*w*6

    double* at(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * 6; }
    const double* at(int y, int x) const { return data.data() + (static_cast<size_t>(y) * width + x) * 6; }
};

/// Unprojects each pixel center (u+0.5, v+0.5) through the intrinsics, rotates
/// to world, normalizes, and attaches the moment about the camera center.
RayMap plucker_raymap(const CameraPose& pose);

}  // namespace sfl::geo
