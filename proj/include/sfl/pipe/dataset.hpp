// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sfl/cams/curation.hpp"
#include "sfl/flow/latent.hpp"
#include "sfl/geo/raymap.hpp"
#include "sfl/pipe/config.hpp"
#include "sfl/splat/scene.hpp"

namespace sfl::pipe {

/// One scene's paired reconstruction / ground-truth data.
struct SceneData {
    std::vector<geo::CameraPose> poses;  // the trajectory; one frame per pose
    cams::CurationResult curation;
    splat::Scene clean_scene;
    splat::Scene degraded_scene;
    std::vector<io::ImageRGB> clean;     // ground-truth renders
    std::vector<io::ImageRGB> degraded;  // degraded-scene renders
    std::vector<io::ImageGray> opacity;  // degraded-scene opacity maps
    std::vector<geo::RayMap> raymaps;    // per pose, derived at load

    /// Reference views: clean renders at the group-1 selected cameras.
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> references() const;
    /// Frame indices whose camera belongs to group 2 (held-out targets).
    std::vector<size_t> heldout_frames() const;
};

struct Dataset {
    RunConfig config;
    std::string config_hash;
    std::vector<SceneData> scenes;
};

/// Randomized inward-facing orbit: one camera per frame, radius/height/angle
/// jittered around a circle looking near the origin.
std::vector<geo::CameraPose> orbit_trajectory(num::Rng& rng, const RunConfig& rc);

/// Generates and serializes the paired dataset; byte-identical per (config,
/// seed). Returns the in-memory dataset.
Dataset gen_data(const RunConfig& rc, const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

// Image <-> f32 tensor conversions used by dataset and variant serialization.
num::Tensor image_to_tensor(const io::ImageRGB& img);
io::ImageRGB tensor_to_image(const num::Tensor& t);
num::Tensor gray_to_tensor(const io::ImageGray& img);
io::ImageGray tensor_to_gray(const num::Tensor& t);

}  // namespace sfl::pipe
