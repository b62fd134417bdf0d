// SPDX-License-Identifier: Apache-2.0

#include "sfl/geo/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sfl::geo {

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 scale(const Vec3& a, double c) { return {a[0] * c, a[1] * c, a[2] * c}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
    double n = norm(a);
    if (n == 0.0) throw std::invalid_argument("normalized: zero vector");
    return scale(a, 1.0 / n);
}

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 out{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            out[i * 3 + j] = s;
        }
    }
    return out;
}

Mat3 mat_transpose(const Mat3& a) {
    return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

Vec3 mat_vec(const Mat3& a, const Vec3& v) {
    return {a[0] * v[0] + a[1] * v[1] + a[2] * v[2], a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
            a[6] * v[0] + a[7] * v[1] + a[8] * v[2]};
}

double mat_det(const Mat3& a) {
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 mat_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

bool is_valid_pose(const CameraPose& p, double tol) {
    Mat3 gram = mat_mul(mat_transpose(p.R), p.R);
    Mat3 eye = mat_identity();
    for (int i = 0; i < 9; ++i) {
        if (std::abs(gram[i] - eye[i]) > tol) return false;
    }
    if (std::abs(mat_det(p.R) - 1.0) > tol) return false;
    return p.width >= 1 && p.height >= 1 && p.fx > 0.0 && p.fy > 0.0;
}

void require_valid_pose(const CameraPose& p, const std::string& who) {
    if (!is_valid_pose(p)) throw std::invalid_argument(who + ": input is not a valid camera pose");
}

CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width,
                   int height) {
    Vec3 fwd = normalized(sub(target, eye));
    Vec3 down = scale(normalized(up), -1.0);
    Vec3 right = cross(down, fwd);
    double rn = norm(right);
    if (rn < 1e-12) {
        // Viewing direction parallel to up: fall back to an arbitrary lateral axis.
        right = cross(Vec3{1.0, 0.0, 0.0}, fwd);
        rn = norm(right);
        if (rn < 1e-12) {
            right = cross(Vec3{0.0, 0.0, 1.0}, fwd);
            rn = norm(right);
        }
    }
    right = scale(right, 1.0 / rn);
    Vec3 v_axis = cross(fwd, right);
    CameraPose p;
    // Columns of R are the camera axes (u, v, forward) in world coordinates.
    p.R = {right[0], v_axis[0], fwd[0], right[1], v_axis[1], fwd[1], right[2], v_axis[2], fwd[2]};
    p.t = eye;
    p.fx = fx;
    p.fy = fy;
    p.cx = width / 2.0;
    p.cy = height / 2.0;
    p.width = width;
    p.height = height;
    return p;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
    Vec3 u = normalized(axis);
    double c = std::cos(angle), s = std::sin(angle), ic = 1.0 - c;
    return {c + u[0] * u[0] * ic,        u[0] * u[1] * ic - u[2] * s, u[0] * u[2] * ic + u[1] * s,
            u[1] * u[0] * ic + u[2] * s, c + u[1] * u[1] * ic,        u[1] * u[2] * ic - u[0] * s,
            u[2] * u[0] * ic - u[1] * s, u[2] * u[1] * ic + u[0] * s, c + u[2] * u[2] * ic};
}

double so3_geodesic(const Mat3& ri, const Mat3& rj) {
    CameraPose a, b;
    a.R = ri;
    b.R = rj;
    require_valid_pose(a, "so3_geodesic");
    require_valid_pose(b, "so3_geodesic");
    if (ri == rj) return 0.0;  // identical rotations map to exactly zero
    Mat3 rel = mat_mul(mat_transpose(ri), rj);
    double tr = rel[0] + rel[4] + rel[8];
    double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

double frobenius_pose_distance(const CameraPose& a, const CameraPose& b) {
    double fro = 0.0;
    for (int i = 0; i < 9; ++i) fro += (a.R[i] - b.R[i]) * (a.R[i] - b.R[i]);
    return std::sqrt(fro) + norm(sub(a.t, b.t));
}

double pose_distance(const CameraPose& a, const CameraPose& b, double lambda_t, double r_bar) {
    if (r_bar <= 0.0) {
        throw std::invalid_argument("pose_distance: r_bar must be positive, got " + std::to_string(r_bar));
    }
    double theta = so3_geodesic(a.R, b.R);
    double pi = std::acos(-1.0);
    return theta / pi + lambda_t * norm(sub(a.t, b.t)) / r_bar;
}

double mean_radius(const std::vector<CameraPose>& poses) {
    if (poses.empty()) throw std::invalid_argument("mean_radius: need at least one pose");
    double acc = 0.0;
    for (const auto& p : poses) acc += norm(p.t);
    return acc / static_cast<double>(poses.size());
}

std::string poses_to_json(const std::vector<CameraPose>& poses) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : poses) {
        nlohmann::json j;
        j["R"] = p.R;
        j["t"] = p.t;
        j["fx"] = p.fx;
        j["fy"] = p.fy;
        j["cx"] = p.cx;
        j["cy"] = p.cy;
        j["width"] = p.width;
        j["height"] = p.height;
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

std::vector<CameraPose> poses_from_json(const std::string& text) {
    nlohmann::json arr = nlohmann::json::parse(text);
    if (!arr.is_array()) throw std::runtime_error("pose manifest: expected a JSON array");
    std::vector<CameraPose> out;
    for (const auto& j : arr) {
        CameraPose p;
        auto r = j.at("R");
        auto t = j.at("t");
        if (r.size() != 9 || t.size() != 3) throw std::runtime_error("pose manifest: bad R/t arity");
        for (int i = 0; i < 9; ++i) p.R[static_cast<size_t>(i)] = r[static_cast<size_t>(i)].get<double>();
        for (int i = 0; i < 3; ++i) p.t[static_cast<size_t>(i)] = t[static_cast<size_t>(i)].get<double>();
        p.fx = j.at("fx").get<double>();
        p.fy = j.at("fy").get<double>();
        p.cx = j.at("cx").get<double>();
        p.cy = j.at("cy").get<double>();
        p.width = j.at("width").get<int>();
        p.height = j.at("height").get<int>();
        require_valid_pose(p, "pose manifest");
        out.push_back(p);
    }
    return out;
}

void save_poses(const std::string& path, const std::vector<CameraPose>& poses) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_poses: cannot open " + path);
    os << poses_to_json(poses) << "\n";
}

std::vector<CameraPose> load_poses(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_poses: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return poses_from_json(ss.str());
}

}  // namespace sfl::geo
