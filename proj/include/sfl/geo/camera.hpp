// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sfl::geo {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

Vec3 add(const Vec3& a, const Vec3& b);
Vec3 sub(const Vec3& a, const Vec3& b);
Vec3 scale(const Vec3& a, double c);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

Mat3 mat_mul(const Mat3& a, const Mat3& b);
Mat3 mat_transpose(const Mat3& a);
Vec3 mat_vec(const Mat3& a, const Vec3& v);
double mat_det(const Mat3& a);
Mat3 mat_identity();

/// Pinhole camera. R is the world-from-camera rotation (columns are the
/// camera axes in world coordinates: x = image u, y = image v, z = forward)
/// and t is the camera center in world units.
struct CameraPose {
    Mat3 R = mat_identity();
    Vec3 t = {0.0, 0.0, 0.0};
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
};

/// RtR = I and det(R) = +1, both to 1e-9; positive focals; extents >= 1.
bool is_valid_pose(const CameraPose& p, double tol = 1e-9);
void require_valid_pose(const CameraPose& p, const std::string& who);

/// Camera at eye looking toward target, image v pointing along world -up.
CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width,
                   int height);

/// Rotation by angle (radians) about a unit axis.
Mat3 axis_angle(const Vec3& axis, double angle);

/// SO(3) geodesic angle in [0, pi]: arccos(clamp((trace(Ri^T Rj) - 1)/2, -1, 1)).
double so3_geodesic(const Mat3& ri, const Mat3& rj);

/// Variant used by the appendix sampling algorithm: ||Ri - Rj||_F + ||ti - tj||_2.
double frobenius_pose_distance(const CameraPose& a, const CameraPose& b);

/// theta/pi + lambda_t * ||ti - tj|| / r_bar. r_bar must be positive.
double pose_distance(const CameraPose& a, const CameraPose& b, double lambda_t, double r_bar);

/// Mean L2 norm of the camera centers; rejects empty input.
double mean_radius(const std::vector<CameraPose>& poses);

// Pose manifest: JSON array of {R, t, fx, fy, cx, cy, width, height}.
std::string poses_to_json(const std::vector<CameraPose>& poses);
std::vector<CameraPose> poses_from_json(const std::string& text);
void save_poses(const std::string& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> load_poses(const std::string& path);

}  // namespace sfl::geo
