// SPDX-License-Identifier: Apache-2.0

#include "sfl/geo/raymap.hpp"

namespace sfl::geo {

RayMap plucker_raymap(const CameraPose& pose) {
    require_valid_pose(pose, "plucker_raymap");
    RayMap rm;
    rm.height = pose.height;
    rm.width = pose.width;
    rm.data.assign(static_cast<size_t>(pose.height) * pose.width * 6, 0.0);
    for (int v = 0; v < pose.height; ++v) {
        for (int u = 0; u < pose.width; ++u) {
            Vec3 cam_dir = {(u + 0.5 - pose.cx) / pose.fx, (v + 0.5 - pose.cy) / pose.fy, 1.0};
            Vec3 d = normalized(mat_vec(pose.R, cam_dir));
            Vec3 m = cross(pose.t, d);
            double* px = rm.at(v, u);
            px[0] = d[0];
            px[1] = d[1];
            px[2] = d[2];
            px[3] = m[0];
            px[4] = m[1];
            px[5] = m[2];
        }
    }
    return rm;
}

}  // namespace sfl::geo
