// SPDX-License-Identifier: Apache-2.0

#include "sfl/pipe/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sfl/num/checkpoint.hpp"
#include "sfl/splat/render.hpp"

namespace sfl::pipe {

namespace fs = std::filesystem;
using num::DType;
using num::Tensor;

std::vector<std::pair<io::ImageRGB, geo::CameraPose>> SceneData::references() const {
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;
    for (size_t idx : curation.selected1) {
        refs.emplace_back(clean[idx], poses[idx]);
    }
    return refs;
}

std::vector<size_t> SceneData::heldout_frames() const { return curation.group2; }

std::vector<geo::CameraPose> orbit_trajectory(num::Rng& rng, const RunConfig& rc) {
    std::vector<geo::CameraPose> poses;
    double two_pi = 2.0 * std::acos(-1.0);
    double focal = rc.focal_factor * rc.image_size;
    for (int i = 0; i < rc.n_cameras; ++i) {
        double angle = two_pi * i / rc.n_cameras + rc.orbit_jitter * rng.uniform(-0.5, 0.5) * two_pi / rc.n_cameras;
        double radius = rc.orbit_radius * rc.extent * (1.0 + 0.15 * rng.uniform(-1.0, 1.0));
        double height = rc.orbit_height * rc.extent * (1.0 + 0.5 * rng.uniform(-1.0, 1.0));
        geo::Vec3 eye = {radius * std::cos(angle), height, radius * std::sin(angle)};
        geo::Vec3 target = {0.1 * rc.extent * rng.uniform(-1.0, 1.0), 0.1 * rc.extent * rng.uniform(-1.0, 1.0),
                            0.1 * rc.extent * rng.uniform(-1.0, 1.0)};
        poses.push_back(geo::look_at(eye, target, {0, 1, 0}, focal, focal, rc.image_size, rc.image_size));
    }
    return poses;
}

Tensor image_to_tensor(const io::ImageRGB& img) {
    Tensor t = Tensor::zeros({img.height, img.width, 3}, DType::F32);
    for (size_t i = 0; i < img.data.size(); ++i) t.set_flat(static_cast<int64_t>(i), img.data[i]);
    return t;
}

io::ImageRGB tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 3) throw std::invalid_argument("tensor_to_image: expected (h, w, 3)");
    io::ImageRGB img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = t.flat(static_cast<int64_t>(i));
    return img;
}

Tensor gray_to_tensor(const io::ImageGray& img) {
    Tensor t = Tensor::zeros({img.height, img.width}, DType::F32);
    for (size_t i = 0; i < img.data.size(); ++i) t.set_flat(static_cast<int64_t>(i), img.data[i]);
    return t;
}

io::ImageGray tensor_to_gray(const Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("tensor_to_gray: expected (h, w)");
    io::ImageGray img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = t.flat(static_cast<int64_t>(i));
    return img;
}

namespace {

std::string frame_tag(const char* prefix, size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s/%03zu", prefix, i);
    return buf;
}

void write_scene_dir(const fs::path& dir, const SceneData& sd) {
    fs::create_directories(dir / "previews");
    geo::save_poses((dir / "poses.json").string(), sd.poses);
    {
        std::ofstream os(dir / "curation.json", std::ios::trunc);
        os << cams::curation_to_json(sd.curation) << "\n";
    }
    splat::save_scene((dir / "scene_clean.json").string(), sd.clean_scene);
    splat::save_scene((dir / "scene_degraded.json").string(), sd.degraded_scene);

    num::NamedTensors frames;
    for (size_t f = 0; f < sd.clean.size(); ++f) frames.emplace_back(frame_tag("clean", f), image_to_tensor(sd.clean[f]));
    for (size_t f = 0; f < sd.degraded.size(); ++f) {
        frames.emplace_back(frame_tag("deg", f), image_to_tensor(sd.degraded[f]));
    }
    for (size_t f = 0; f < sd.opacity.size(); ++f) frames.emplace_back(frame_tag("op", f), gray_to_tensor(sd.opacity[f]));
    num::write_checkpoint((dir / "frames.spfl").string(), frames);

    for (size_t f = 0; f < sd.clean.size(); ++f) {
        char name[48];
        std::snprintf(name, sizeof name, "clean_%03zu.png", f);
        io::write_png((dir / "previews" / name).string(), sd.clean[f]);
        std::snprintf(name, sizeof name, "deg_%03zu.png", f);
        io::write_png((dir / "previews" / name).string(), sd.degraded[f]);
    }
}

SceneData load_scene_dir(const fs::path& dir, int n_frames) {
    SceneData sd;
    sd.poses = geo::load_poses((dir / "poses.json").string());
    {
        std::ifstream is(dir / "curation.json");
        std::stringstream ss;
        ss << is.rdbuf();
        nlohmann::json j = nlohmann::json::parse(ss.str());
        sd.curation.seeds = {j.at("seeds")[0].get<size_t>(), j.at("seeds")[1].get<size_t>()};
        sd.curation.group1 = j.at("group1").get<std::vector<size_t>>();
        sd.curation.group2 = j.at("group2").get<std::vector<size_t>>();
        sd.curation.selected1 = j.at("selected1").get<std::vector<size_t>>();
        sd.curation.selected2 = j.at("selected2").get<std::vector<size_t>>();
    }
    sd.clean_scene = splat::load_scene((dir / "scene_clean.json").string());
    sd.degraded_scene = splat::load_scene((dir / "scene_degraded.json").string());

    num::NamedTensors frames = num::read_checkpoint((dir / "frames.spfl").string());
    std::map<std::string, Tensor> by_name(frames.begin(), frames.end());
    for (int f = 0; f < n_frames; ++f) {
        sd.clean.push_back(tensor_to_image(by_name.at(frame_tag("clean", static_cast<size_t>(f)))));
        sd.degraded.push_back(tensor_to_image(by_name.at(frame_tag("deg", static_cast<size_t>(f)))));
        sd.opacity.push_back(tensor_to_gray(by_name.at(frame_tag("op", static_cast<size_t>(f)))));
    }
    for (const auto& pose : sd.poses) sd.raymaps.push_back(geo::plucker_raymap(pose));
    return sd;
}

}  // namespace

Dataset gen_data(const RunConfig& rc, const std::string& out_dir) {
    rc.validate();
    Dataset ds;
    ds.config = rc;
    ds.config_hash = rc.hash();
    fs::create_directories(out_dir);

    num::Rng master(rc.seed);
    for (int i = 0; i < rc.n_scenes; ++i) {
        num::Rng scene_rng = master.fork(1000 + static_cast<uint64_t>(i));
        SceneData sd;
        sd.clean_scene = splat::gen_scene(scene_rng, rc.n_primitives, rc.extent);
        sd.poses = orbit_trajectory(scene_rng, rc);

        size_t k = static_cast<size_t>(rc.k_min) +
                   scene_rng.uniform_below(static_cast<uint64_t>(rc.k_max - rc.k_min + 1));
        sd.curation = cams::curate(sd.poses, k);

        std::vector<geo::CameraPose> input_cams;
        for (size_t idx : sd.curation.selected1) input_cams.push_back(sd.poses[idx]);
        splat::DegradeParams dp;
        dp.tau_vis = rc.tau_vis;
        dp.eta = rc.eta;
        sd.degraded_scene = splat::degrade(sd.clean_scene, input_cams, scene_rng, dp);

        for (const auto& pose : sd.poses) {
            splat::Rendering clean_r = splat::render(sd.clean_scene, pose);
            splat::Rendering deg_r = splat::render(sd.degraded_scene, pose);
            sd.clean.push_back(std::move(clean_r.rgb));
            sd.degraded.push_back(std::move(deg_r.rgb));
            sd.opacity.push_back(std::move(deg_r.opacity));
            sd.raymaps.push_back(geo::plucker_raymap(pose));
        }

        char scene_name[32];
        std::snprintf(scene_name, sizeof scene_name, "scene_%03d", i);
        write_scene_dir(fs::path(out_dir) / scene_name, sd);
        ds.scenes.push_back(std::move(sd));
    }

    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(rc.to_json());
    manifest["config_hash"] = ds.config_hash;
    manifest["seed"] = rc.seed;
    manifest["n_scenes"] = rc.n_scenes;
    manifest["frames_per_scene"] = rc.n_cameras;
    std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("gen_data: cannot write manifest in " + out_dir);
    os << manifest.dump(2) << "\n";
    return ds;
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("load_dataset: no manifest in " + dir);
    std::stringstream ss;
    ss << is.rdbuf();
    nlohmann::json manifest = nlohmann::json::parse(ss.str());
    Dataset ds;
    ds.config = RunConfig::from_json(manifest.at("config").dump());
    ds.config_hash = manifest.at("config_hash").get<std::string>();
    int n_scenes = manifest.at("n_scenes").get<int>();
    int n_frames = manifest.at("frames_per_scene").get<int>();
    for (int i = 0; i < n_scenes; ++i) {
        char scene_name[32];
        std::snprintf(scene_name, sizeof scene_name, "scene_%03d", i);
        ds.scenes.push_back(load_scene_dir(fs::path(dir) / scene_name, n_frames));
    }
    return ds;
}

}  // namespace sfl::pipe
