// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "sfl/geo/raymap.hpp"
#include "sfl/io/image.hpp"
#include "sfl/model/config.hpp"
#include "sfl/num/rng.hpp"
#include "sfl/num/tensor.hpp"

namespace sfl::model {

/// Per-sequence conditioning: one raymap and opacity map per target frame,
/// target cameras for relative-pose encoding, and up to ref_capacity clean
/// reference views.
struct ConditioningBundle {
    std::vector<geo::RayMap> raymaps;
    std::vector<io::ImageGray> opacity;
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> reference;
    std::vector<geo::CameraPose> target_cameras;
};

/// Constant per-token conditioning, precomputed once per forward set.
struct CondTokens {
    int frames = 0;
    int n_ref = 0;
    num::Tensor ray_tokens;      // (frames*tph, ray_token_dim)
    num::Tensor opacity_tokens;  // (frames*tph, opacity_token_dim)
    num::Tensor ref_patches;     // (n_ref*tph, patch_dim) raw patchified latents
    num::Tensor rel_pose;        // (frames, n_ref, 14) flattened relative extrinsics
};

/// Space-to-depth + (1,2,2) patch gather of the conditioning signals; raymaps
/// and opacity bypass the latent path entirely.
CondTokens build_cond_tokens(const DenoiserConfig& cfg, const ConditioningBundle& bundle);

/// Conditioning inputs of one training sequence before latent encoding.
struct FrameBatch {
    std::vector<io::ImageRGB> degraded_rgb;
    std::vector<io::ImageGray> opacity;
    std::vector<geo::RayMap> raymaps;
};

/// Drops the last K frames of the input (K ~ uniform{0..N}) by zeroing both
/// the RGB rendering and the opacity map while retaining the raymaps.
/// Returns K.
int frame_dropout(FrameBatch& batch, num::Rng& rng);

/// Token bookkeeping for a (frames x tokens-per-frame) grid.
struct TokenGrid {
    int frames = 0;
    int rows = 0;  // hl/2
    int cols = 0;  // wl/2
    int tokens_per_frame() const { return rows * cols; }
    int64_t index_of(int frame, int r, int c) const {
        return (static_cast<int64_t>(frame) * rows + r) * cols + c;
    }
    struct Coords {
        int frame, row, col;
    };
    Coords coords_of(int64_t token) const {
        int per = tokens_per_frame();
        return {static_cast<int>(token / per), static_cast<int>((token % per) / cols),
                static_cast<int>(token % cols)};
    }
};

}  // namespace sfl::model
