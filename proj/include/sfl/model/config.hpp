// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "sfl/num/tensor.hpp"

namespace sfl::model {

/// Denoiser geometry and sizing. The latent voxel patch is fixed at
/// (t, h, w) = (1, 2, 2).
struct DenoiserConfig {
    int embed_dim = 128;
    int n_heads = 4;
    int n_blocks = 4;
    int max_frames = 8;   // frame positions wrap modulo this for long rollouts
    int s = 4;            // latent spatial factor (pixels per cell per axis)
    int image_height = 32;
    int image_width = 32;
    int ref_capacity = 4;
    int ffn_mult = 4;
    int pose_hidden = 32;  // relative-pose encoder width
    num::DType dtype = num::DType::F32;
    uint64_t init_seed = 0x5EED0401;

    int latent_channels() const { return 3 * s * s; }
    int hl() const { return image_height / s; }
    int wl() const { return image_width / s; }
    int tokens_per_frame() const { return (hl() / 2) * (wl() / 2); }
    int patch_dim() const { return 4 * latent_channels(); }    // (1,2,2) voxels
    int ray_token_dim() const { return 4 * 6 * s * s; }        // space-to-depth raymap per token
    int opacity_token_dim() const { return 4 * s * s; }
    int ffn_dim() const { return ffn_mult * embed_dim; }

    void validate() const;

    std::string to_json() const;
    static DenoiserConfig from_json(const std::string& text);
};

/// Closed-form trainable parameter count for a config.
int64_t param_count(const DenoiserConfig& cfg);

}  // namespace sfl::model
