// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sfl/metrics/metrics.hpp"
#include "sfl/model/denoiser.hpp"
#include "sfl/pipe/dataset.hpp"

namespace sfl::pipe {

struct VariantOutput {
    std::string name;      // direct | refit | reenhanced
    std::string producer;  // "generator" or "renderer"
    std::vector<io::ImageRGB> frames;
    std::vector<io::ImageGray> opacity;  // conditioning opacity used/produced
};

struct VariantsResult {
    VariantOutput direct;      // few-step autoregressive frames
    VariantOutput refit;       // renders of the re-distilled 3D scene
    VariantOutput reenhanced;  // generator re-applied on the refit renders
    splat::Scene refit_scene;
    double fit_initial_loss = 0.0;
    double fit_final_loss = 0.0;
};

/// The three output variants: (a) direct rollout frames; (b) scene refit on
/// those frames from the degraded-scene init, rendered natively; (c) rollout
/// re-run conditioned on the refit renders. Serializes frames (float + PNG)
/// and a manifest when out_dir is non-empty.
VariantsResult generate_variants(const RunConfig& rc, const model::Denoiser& generator, const SceneData& scene,
                                 const std::string& out_dir, uint64_t scene_stream);

std::vector<io::ImageRGB> load_variant_frames(const std::string& variant_dir);

struct EvalRow {
    std::string name;
    double psnr_all = 0.0, ssim_all = 0.0;
    double psnr_heldout = 0.0, ssim_heldout = 0.0;
};

struct EvalSummary {
    std::vector<EvalRow> rows;  // degraded-input first, then each variant
    std::string config_hash;
    uint64_t seed = 0;
};

/// Metric table for one scene: the degraded-input baseline and every variant
/// against clean renders, over all frames and the held-out (group-2) subset.
/// Writes per-row CSVs, side-by-side grids and summary.json under out_dir.
EvalSummary eval_run(const RunConfig& rc, const SceneData& scene, const VariantsResult& variants,
                     const std::string& out_dir);

std::string summary_to_json(const EvalSummary& s);

}  // namespace sfl::pipe
