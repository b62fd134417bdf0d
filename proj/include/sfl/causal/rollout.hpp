// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "sfl/flow/latent.hpp"
#include "sfl/model/denoiser.hpp"

namespace sfl::causal {

/// One frame of the conditioning stream. When has_rendering is false the
/// frame runs in dropout mode: RGB and opacity are treated as zero (so the
/// mixed source is pure noise) while the raymap keeps steering the camera.
struct FrameConditioning {
    io::ImageRGB degraded_rgb;
    io::ImageGray opacity;
    geo::RayMap raymap;
    geo::CameraPose camera;
    bool has_rendering = true;
};

struct RolloutConfig {
    int chunk_size = 2;
    int steps_per_chunk = 4;
    int window = 8;
};

/// Chunked autoregressive generation with a rolling KV cache. Per chunk:
/// build the opacity-mixed source, run steps_per_chunk Euler steps under the
/// block-causal mask reading the cache, then re-encode the finalized chunk at
/// t=1 into the cache (detached) and evict beyond the window.
///
/// When tape.grad_enabled(), gradients flow through each chunk's Euler steps
/// into the binding (the cache stays detached), which is what distillation
/// differentiates through. Returns the concatenated generated latent.
num::Var rollout_on_tape(num::Tape& tape, const model::Denoiser& generator,
                         const model::Denoiser::Binding& binding,
                         const std::vector<FrameConditioning>& stream,
                         const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& references,
                         const RolloutConfig& rc, num::Rng& rng, KVCache& cache);

/// No-grad convenience: runs rollout_on_tape on a private tape and wraps the
/// result with the latent geometry.
flow::LatentVideo rollout(const model::Denoiser& generator, const std::vector<FrameConditioning>& stream,
                          const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& references,
                          const RolloutConfig& rc, num::Rng& rng, KVCache* cache_out = nullptr);

/// Builds the conditioning stream for frames of a scene trajectory from
/// pre-rendered degraded frames/opacity (absent entries -> dropout mode).
std::vector<FrameConditioning> make_stream(const std::vector<geo::CameraPose>& trajectory,
                                           const std::vector<io::ImageRGB>* degraded_rgb,
                                           const std::vector<io::ImageGray>* opacity);

}  // namespace sfl::causal
