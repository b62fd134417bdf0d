// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sfl/model/denoiser.hpp"
#include "sfl/pipe/dataset.hpp"

namespace sfl::pipe {

/// Checkpoint = <name>.spfl (parameters + Adam moments) plus <name>.meta.json
/// (config, config hash, step, rng state, loss log).
void save_checkpoint(const std::string& path_prefix, const model::Denoiser& net, const RunConfig& rc,
                     int64_t step, const num::Rng& rng, const std::vector<double>& loss_log);

struct LoadedCheckpoint {
    std::unique_ptr<model::Denoiser> net;
    RunConfig config;
    int64_t step = 0;
    num::Rng rng{0};
    std::vector<double> loss_log;
};
LoadedCheckpoint load_checkpoint(const std::string& path_prefix);

struct TrainResult {
    std::vector<double> loss_log;
    double initial_smoothed = 0.0;
    double final_smoothed = 0.0;
};

/// Bidirectional teacher: batches of {frame dropout, 0..ref_train_max
/// references, opacity mixing, shared-t CFM} with Adam updates. Aborts via
/// NumericalError when the loss exceeds 10x its initial value for 100
/// consecutive steps. Resuming from a checkpoint continues bitwise.
/// stop_after, when nonnegative, checkpoints after that many steps instead of
/// rc.teacher_iters (a mid-run snapshot under the same config).
TrainResult train_teacher(const RunConfig& rc, const Dataset& ds, const std::string& ckpt_prefix,
                          const std::string* resume_prefix = nullptr, int64_t stop_after = -1);

struct DistillResult {
    std::vector<double> init_loss_log;
    std::vector<double> dmd_fake_loss_log;
};

/// Phase 1: causal initialization from the teacher weights (block-causal mask
/// + per-frame diffusion-forcing noise, same data protocol). Phase 2:
/// chunked autoregressive rollout with DMD against the frozen teacher and a
/// trainable fake score (update ratio fake:generator = fake_updates_per_step).
DistillResult convert_and_distill(const RunConfig& rc, const Dataset& ds, const std::string& teacher_prefix,
                                  const std::string& generator_prefix);

/// Teacher enhancement: opacity-mixed source integrated over teacher_ode_steps
/// with the bidirectional model; returns decoded frames clamped to [0,1].
std::vector<io::ImageRGB> teacher_enhance(const RunConfig& rc, const model::Denoiser& teacher,
                                          const SceneData& scene, int n_refs, uint64_t noise_stream);

/// Few-step causal generation over the scene's trajectory with references.
std::vector<io::ImageRGB> generator_rollout_frames(const RunConfig& rc, const model::Denoiser& generator,
                                                   const SceneData& scene,
                                                   const std::vector<io::ImageRGB>* cond_rgb,
                                                   const std::vector<io::ImageGray>* cond_opacity, int n_refs,
                                                   uint64_t noise_stream);

}  // namespace sfl::pipe
