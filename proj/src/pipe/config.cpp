// SPDX-License-Identifier: Apache-2.0

#include "sfl/pipe/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sfl::pipe {

void RunConfig::validate() const {
    model.validate();
    if (n_scenes < 1 || n_primitives < 1 || n_cameras < 2) {
        throw std::invalid_argument("RunConfig: scene/camera counts too small");
    }
    if (k_min < 1 || k_max < k_min) throw std::invalid_argument("RunConfig: bad curation K range");
    if (image_size != model.image_height || image_size != model.image_width) {
        throw std::invalid_argument("RunConfig: image_size must match the model extents");
    }
    if (n_cameras != model.max_frames) {
        throw std::invalid_argument("RunConfig: n_cameras must equal model.max_frames (trajectory = frames)");
    }
    if (teacher_iters < 0 || causal_init_iters < 0 || dmd_iters < 0) {
        throw std::invalid_argument("RunConfig: iteration counts must be nonnegative");
    }
    if (chunk_size < 1 || rollout_steps < 1 || window < 1 || teacher_ode_steps < 1) {
        throw std::invalid_argument("RunConfig: sampling parameters must be positive");
    }
    if (ref_train_max > model.ref_capacity || ref_test > model.ref_capacity) {
        throw std::invalid_argument("RunConfig: reference counts exceed the model's ref_capacity");
    }
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["n_scenes"] = n_scenes;
    j["n_primitives"] = n_primitives;
    j["extent"] = extent;
    j["n_cameras"] = n_cameras;
    j["orbit_radius"] = orbit_radius;
    j["orbit_height"] = orbit_height;
    j["orbit_jitter"] = orbit_jitter;
    j["focal_factor"] = focal_factor;
    j["image_size"] = image_size;
    j["k_min"] = k_min;
    j["k_max"] = k_max;
    j["tau_vis"] = tau_vis;
    j["eta"] = eta;
    j["model"] = nlohmann::json::parse(model.to_json());
    j["teacher_iters"] = teacher_iters;
    j["teacher_lr"] = teacher_lr;
    j["ref_train_max"] = ref_train_max;
    j["ref_test"] = ref_test;
    j["causal_init_iters"] = causal_init_iters;
    j["causal_init_lr"] = causal_init_lr;
    j["dmd_iters"] = dmd_iters;
    j["dmd_generator_lr"] = dmd_generator_lr;
    j["dmd_fake_lr"] = dmd_fake_lr;
    j["fake_updates_per_step"] = fake_updates_per_step;
    j["teacher_ode_steps"] = teacher_ode_steps;
    j["chunk_size"] = chunk_size;
    j["rollout_steps"] = rollout_steps;
    j["window"] = window;
    j["fit_steps"] = fit_steps;
    j["fit_lr"] = fit_lr;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    RunConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.n_scenes = j.at("n_scenes").get<int>();
    c.n_primitives = j.at("n_primitives").get<int>();
    c.extent = j.at("extent").get<double>();
    c.n_cameras = j.at("n_cameras").get<int>();
    c.orbit_radius = j.at("orbit_radius").get<double>();
    c.orbit_height = j.at("orbit_height").get<double>();
    c.orbit_jitter = j.at("orbit_jitter").get<double>();
    c.focal_factor = j.at("focal_factor").get<double>();
    c.image_size = j.at("image_size").get<int>();
    c.k_min = j.at("k_min").get<int>();
    c.k_max = j.at("k_max").get<int>();
    c.tau_vis = j.at("tau_vis").get<double>();
    c.eta = j.at("eta").get<double>();
    c.model = model::DenoiserConfig::from_json(j.at("model").dump());
    c.teacher_iters = j.at("teacher_iters").get<int>();
    c.teacher_lr = j.at("teacher_lr").get<double>();
    c.ref_train_max = j.at("ref_train_max").get<int>();
    c.ref_test = j.at("ref_test").get<int>();
    c.causal_init_iters = j.at("causal_init_iters").get<int>();
    c.causal_init_lr = j.at("causal_init_lr").get<double>();
    c.dmd_iters = j.at("dmd_iters").get<int>();
    c.dmd_generator_lr = j.at("dmd_generator_lr").get<double>();
    c.dmd_fake_lr = j.at("dmd_fake_lr").get<double>();
    c.fake_updates_per_step = j.at("fake_updates_per_step").get<int>();
    c.teacher_ode_steps = j.at("teacher_ode_steps").get<int>();
    c.chunk_size = j.at("chunk_size").get<int>();
    c.rollout_steps = j.at("rollout_steps").get<int>();
    c.window = j.at("window").get<int>();
    c.fit_steps = j.at("fit_steps").get<int>();
    c.fit_lr = j.at("fit_lr").get<double>();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("RunConfig: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("RunConfig: cannot write " + path);
    os << to_json() << "\n";
}

uint64_t fnv1a64(const std::string& data) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string RunConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json())));
    return buf;
}

}  // namespace sfl::pipe
