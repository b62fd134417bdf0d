// SPDX-License-Identifier: Apache-2.0

#include "sfl/splat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sfl/splat/render.hpp"

namespace sfl::splat {

bool is_valid_primitive(const GaussianPrimitive& p, double tol) {
    for (double s : p.scale) {
        if (!(s > 0.0)) return false;
    }
    double qn = 0.0;
    for (double q : p.quat) qn += q * q;
    if (std::abs(std::sqrt(qn) - 1.0) > tol) return false;
    if (p.sigma < 0.0 || p.sigma > 1.0) return false;
    for (double c : p.color) {
        if (c < 0.0 || c > 1.0) return false;
    }
    return true;
}

void require_valid_scene(const Scene& s, const std::string& who) {
    for (size_t i = 0; i < s.primitives.size(); ++i) {
        const auto& p = s.primitives[i];
        if (!is_valid_primitive(p)) {
            throw std::invalid_argument(who + ": primitive " + std::to_string(i) + " violates invariants");
        }
        for (double c : p.mu) {
            if (std::abs(c) > 2.0 * s.extent + 1e-9) {
                throw std::invalid_argument(who + ": primitive " + std::to_string(i) + " outside 2x extent");
            }
        }
    }
}

namespace {

std::array<double, 4> random_unit_quat(num::Rng& rng) {
    std::array<double, 4> q;
    double n = 0.0;
    for (auto& c : q) c = rng.normal();
    for (double c : q) n += c * c;
    n = std::sqrt(n);
    for (auto& c : q) c /= n;
    return q;
}

GaussianPrimitive make_wall(int axis, double sign, double extent, num::Rng& rng) {
    GaussianPrimitive w;
    w.mu = {0, 0, 0};
    w.mu[static_cast<size_t>(axis)] = sign * 1.6 * extent;
    // Panels rather than full planes: views keep background without every
    // ray terminating on a wall, so sparse-input culling leaves real holes.
    w.scale = {0.9 * extent, 0.9 * extent, 0.9 * extent};
    w.scale[static_cast<size_t>(axis)] = 0.04 * extent;
    w.quat = {1, 0, 0, 0};
    w.sigma = 0.85;
    // Muted per-wall tint so backgrounds are distinguishable across views.
    w.color = {0.25 + 0.3 * rng.uniform(), 0.25 + 0.3 * rng.uniform(), 0.25 + 0.3 * rng.uniform()};
    return w;
}

}  // namespace

Scene gen_scene(num::Rng& rng, int n_primitives, double extent) {
    if (n_primitives < 1) throw std::invalid_argument("gen_scene: need at least one primitive");
    Scene s;
    s.extent = extent;
    s.primitives.reserve(static_cast<size_t>(n_primitives) + 6);
    for (int i = 0; i < n_primitives; ++i) {
        GaussianPrimitive p;
        p.mu = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
        double lo = std::log(0.04 * extent), hi = std::log(0.14 * extent);
        p.scale = {std::exp(rng.uniform(lo, hi)), std::exp(rng.uniform(lo, hi)), std::exp(rng.uniform(lo, hi))};
        p.quat = random_unit_quat(rng);
        p.sigma = rng.uniform(0.3, 0.95);
        p.color = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        s.primitives.push_back(p);
    }
    for (int axis = 0; axis < 3; ++axis) {
        s.primitives.push_back(make_wall(axis, +1.0, extent, rng));
        s.primitives.push_back(make_wall(axis, -1.0, extent, rng));
    }
    return s;
}

Scene degrade(const Scene& scene, const std::vector<geo::CameraPose>& input_cameras, num::Rng& rng,
              const DegradeParams& params) {
    if (input_cameras.empty()) throw std::invalid_argument("degrade: need at least one input camera");
    Scene out;
    out.extent = scene.extent;
    for (const auto& prim : scene.primitives) {
        double peak = 0.0;
        for (const auto& cam : input_cameras) {
            peak = std::max(peak, peak_alpha(prim, cam));
            if (peak >= params.tau_vis) break;
        }
        if (peak < params.tau_vis) continue;  // unobserved content disappears
        GaussianPrimitive p = prim;
        if (params.eta > 0.0) {
            double std_dev = params.eta * scene.extent;
            for (auto& c : p.mu) c += std_dev * rng.normal();
            // Jitter may push a primitive past the 2x extent bound; clamp.
            for (auto& c : p.mu) c = std::clamp(c, -2.0 * scene.extent, 2.0 * scene.extent);
        }
        if (params.sigma_jitter) p.sigma *= rng.uniform(0.5, 1.0);
        out.primitives.push_back(p);
    }
    return out;
}

std::string scene_to_json(const Scene& s) {
    nlohmann::json j;
    j["extent"] = s.extent;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : s.primitives) {
        nlohmann::json e;
        e["mu"] = p.mu;
        e["scale"] = p.scale;
        e["quat"] = p.quat;
        e["sigma"] = p.sigma;
        e["color"] = p.color;
        arr.push_back(std::move(e));
    }
    j["primitives"] = std::move(arr);
    return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Scene s;
    s.extent = j.at("extent").get<double>();
    for (const auto& e : j.at("primitives")) {
        GaussianPrimitive p;
        for (int i = 0; i < 3; ++i) {
            p.mu[static_cast<size_t>(i)] = e.at("mu")[static_cast<size_t>(i)].get<double>();
            p.scale[static_cast<size_t>(i)] = e.at("scale")[static_cast<size_t>(i)].get<double>();
            p.color[static_cast<size_t>(i)] = e.at("color")[static_cast<size_t>(i)].get<double>();
        }
        for (int i = 0; i < 4; ++i) p.quat[static_cast<size_t>(i)] = e.at("quat")[static_cast<size_t>(i)].get<double>();
        p.sigma = e.at("sigma").get<double>();
        s.primitives.push_back(p);
    }
    return s;
}

void save_scene(const std::string& path, const Scene& s) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_scene: cannot open " + path);
    os << scene_to_json(s) << "\n";
}

Scene load_scene(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_scene: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return scene_from_json(ss.str());
}

}  // namespace sfl::splat
