// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "sfl/model/config.hpp"

namespace sfl::pipe {

/// Full run configuration. Every field is serialized explicitly; the config
/// hash stamped into all artifacts is the FNV-1a of the canonical JSON dump.
struct RunConfig {
    uint64_t seed = 2026;

    // synthetic scenes
    int n_scenes = 4;
    int n_primitives = 48;
    double extent = 1.0;

    // trajectory (one camera per training frame)
    int n_cameras = 8;
    double orbit_radius = 0.45;  // in units of extent; inside the content box,
                                // so sparse inputs cannot see behind themselves
    double orbit_height = 0.15;  // in units of extent
    double orbit_jitter = 0.15;
    double focal_factor = 1.1;  // focal length in units of image width; narrow
                                // enough that sparse inputs leave unseen areas
    int image_size = 32;

    // curation / degradation
    int k_min = 2;
    int k_max = 12;
    double tau_vis = 0.05;
    double eta = 0.02;

    model::DenoiserConfig model;

    // teacher training
    int teacher_iters = 7000;
    double teacher_lr = 1e-3;
    int ref_train_max = 4;
    int ref_test = 2;

    // causal conversion + distillation
    int causal_init_iters = 500;
    double causal_init_lr = 5e-4;
    int dmd_iters = 300;
    double dmd_generator_lr = 5e-5;
    double dmd_fake_lr = 1e-5;  // generator:fake step size 5:1
    int fake_updates_per_step = 5;

    // sampling
    int teacher_ode_steps = 32;
    int chunk_size = 2;
    int rollout_steps = 4;
    int window = 8;

    // 3D re-distillation
    int fit_steps = 300;
    double fit_lr = 0.01;

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    /// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
    std::string hash() const;
};

uint64_t fnv1a64(const std::string& data);

}  // namespace sfl::pipe
