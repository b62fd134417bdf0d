// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sfl/io/image.hpp"
#include "sfl/num/rng.hpp"
#include "sfl/num/tensor.hpp"

namespace sfl::flow {

/// Latent video: a lossless space-to-depth rearrangement of pixel frames,
/// s x s x 3 blocks mapped to 3*s*s channels. Frames are padded with zeros on
/// the bottom/right to multiples of s; original extents are kept so decode
/// can crop back. Data is (frames * hl * wl, channels) row-major.
struct LatentVideo {
    int frames = 0;
    int height = 0, width = 0;  // original pixel extents
    int s = 4;
    int hl = 0, wl = 0;  // latent grid extents after padding
    int channels = 0;    // 3 * s * s
    num::Tensor data;

    int64_t cells() const { return static_cast<int64_t>(frames) * hl * wl; }
};

/// Channel order within a block: channel = (py * s + px) * 3 + rgb.
LatentVideo encode(const std::vector<io::ImageRGB>& frames, int s, num::DType dt);
std::vector<io::ImageRGB> decode(const LatentVideo& z);

/// Replaces the payload, keeping the grid geometry. Shape-checked.
LatentVideo with_data(const LatentVideo& like, num::Tensor data);

/// Blockwise max over s x s pixels, one value per latent cell, flattened to
/// (frames * hl * wl). Opacity maps are padded with zeros like the frames.
num::Tensor opacity_downscale(const std::vector<io::ImageGray>& opacity, int s, num::DType dt);

/// z_mix = O_z * z_deg + (1 - O_z) * eps with fresh standard normal eps,
/// O_z broadcast across channels.
num::Tensor opacity_mix(const LatentVideo& z_deg, const num::Tensor& o_z, num::Rng& rng);

}  // namespace sfl::flow
