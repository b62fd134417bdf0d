// SPDX-License-Identifier: Apache-2.0

#include "sfl/causal/rollout.hpp"

#include <string>

#include "sfl/error.hpp"
#include "sfl/num/ops.hpp"

namespace sfl::causal {

using model::Denoiser;
using num::Tensor;
using num::Var;

Var rollout_on_tape(num::Tape& tape, const Denoiser& generator, const Denoiser::Binding& binding,
                    const std::vector<FrameConditioning>& stream,
                    const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& references,
                    const RolloutConfig& rc, num::Rng& rng, KVCache& cache) {
    const auto& cfg = generator.config();
    if (stream.empty()) throw std::invalid_argument("rollout: empty conditioning stream");
    if (rc.chunk_size < 1 || rc.steps_per_chunk < 1 || rc.window < 1) {
        throw std::invalid_argument("rollout: chunk size, steps and window must be positive");
    }
    if (cache.n_blocks() != cfg.n_blocks || cache.tokens_per_frame() != cfg.tokens_per_frame()) {
        throw std::runtime_error("rollout: cache geometry (" + std::to_string(cache.n_blocks()) + " blocks, " +
                                 std::to_string(cache.tokens_per_frame()) +
                                 " tokens/frame) does not match the generator");
    }

    int total = static_cast<int>(stream.size());
    std::vector<Var> chunk_vars;
    for (int start = 0; start < total; start += rc.chunk_size) {
        int len = std::min(rc.chunk_size, total - start);

        // Conditioning bundle for this chunk.
        model::ConditioningBundle bundle;
        std::vector<io::ImageRGB> rgb_frames;
        std::vector<io::ImageGray> op_frames;
        for (int f = start; f < start + len; ++f) {
            const FrameConditioning& fc = stream[static_cast<size_t>(f)];
            bundle.raymaps.push_back(fc.raymap);
            bundle.target_cameras.push_back(fc.camera);
            if (fc.has_rendering) {
                bundle.opacity.push_back(fc.opacity);
                rgb_frames.push_back(fc.degraded_rgb);
                op_frames.push_back(fc.opacity);
            } else {
                // Dropout mode: zero rendering and opacity, raymap retained.
                bundle.opacity.emplace_back(cfg.image_height, cfg.image_width);
                rgb_frames.emplace_back(cfg.image_height, cfg.image_width);
                op_frames.emplace_back(cfg.image_height, cfg.image_width);
            }
        }
        bundle.reference = references;
        model::CondTokens cond = model::build_cond_tokens(cfg, bundle);

        // Opacity-mixed source for the chunk.
        flow::LatentVideo z_deg = flow::encode(rgb_frames, cfg.s, cfg.dtype);
        Tensor o_z = flow::opacity_downscale(op_frames, cfg.s, cfg.dtype);
        Tensor z0 = flow::opacity_mix(z_deg, o_z, rng);

        Var z = tape.constant(std::move(z0));
        double h = 1.0 / static_cast<double>(rc.steps_per_chunk);
        for (int k = 0; k < rc.steps_per_chunk; ++k) {
            Denoiser::ForwardArgs fa;
            fa.cond = &cond;
            fa.t_frames = {static_cast<double>(k) * h};
            fa.mode = AttnMode::BlockCausal;
            fa.cache = &cache;
            fa.first_frame_index = start;
            Var v = generator.forward(tape, binding, z, fa);
            z = tape.add(z, tape.scale(v, h));
            if (!tape.value(z).all_finite()) {
                throw NumericalError("rollout: non-finite latent in chunk " + std::to_string(start / rc.chunk_size) +
                                     " at step " + std::to_string(k));
            }
        }
        chunk_vars.push_back(z);

        // Re-encode the finalized chunk (t = 1) into the cache, detached.
        Denoiser::ForwardArgs record;
        record.cond = &cond;
        record.t_frames = {1.0};
        record.mode = AttnMode::BlockCausal;
        record.cache = &cache;
        record.record_cache = true;
        record.first_frame_index = start;
        generator.forward_tensor(tape.value(z), record);
    }
    return chunk_vars.size() == 1 ? chunk_vars[0] : tape.concat_rows(chunk_vars);
}

flow::LatentVideo rollout(const Denoiser& generator, const std::vector<FrameConditioning>& stream,
                          const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& references,
                          const RolloutConfig& rc, num::Rng& rng, KVCache* cache_out) {
    const auto& cfg = generator.config();
    num::Tape tape;
    tape.set_grad_enabled(false);
    auto binding = generator.bind(tape, false);
    KVCache local(cfg.n_blocks, cfg.tokens_per_frame(), rc.window);
    KVCache& cache = cache_out ? *cache_out : local;
    Var out = rollout_on_tape(tape, generator, binding, stream, references, rc, rng, cache);

    flow::LatentVideo shape_like;
    shape_like.frames = static_cast<int>(stream.size());
    shape_like.height = cfg.image_height;
    shape_like.width = cfg.image_width;
    shape_like.s = cfg.s;
    shape_like.hl = cfg.hl();
    shape_like.wl = cfg.wl();
    shape_like.channels = cfg.latent_channels();
    return flow::with_data(shape_like, tape.value(out));
}

std::vector<FrameConditioning> make_stream(const std::vector<geo::CameraPose>& trajectory,
                                           const std::vector<io::ImageRGB>* degraded_rgb,
                                           const std::vector<io::ImageGray>* opacity) {
    std::vector<FrameConditioning> stream;
    for (size_t f = 0; f < trajectory.size(); ++f) {
        FrameConditioning fc;
        fc.camera = trajectory[f];
        fc.raymap = geo::plucker_raymap(trajectory[f]);
        bool have = degraded_rgb && opacity && f < degraded_rgb->size() && f < opacity->size();
        if (have) {
            fc.degraded_rgb = (*degraded_rgb)[f];
            fc.opacity = (*opacity)[f];
            fc.has_rendering = true;
        } else {
            fc.degraded_rgb = io::ImageRGB(trajectory[f].height, trajectory[f].width);
            fc.opacity = io::ImageGray(trajectory[f].height, trajectory[f].width);
            fc.has_rendering = false;
        }
        stream.push_back(std::move(fc));
    }
    return stream;
}

}  // namespace sfl::causal
