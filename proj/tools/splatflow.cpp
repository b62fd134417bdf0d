// SPDX-License-Identifier: Apache-2.0
//
// splatflow: desk-scale reconstruction-conditioned video generation pipeline.
// Verbs: gen-data, sample-cameras, render, train-teacher, distill, generate,
// eval, gradcheck, selftest. Exit codes: 0 ok, 1 validation failure,
// 2 numerical abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "acceptance/acceptance.hpp"
#include "sfl/causal/rollout.hpp"
#include "sfl/error.hpp"
#include "sfl/pipe/trainer.hpp"
#include "sfl/pipe/variants.hpp"
#include "sfl/splat/render.hpp"
#include "support/model_fixtures.hpp"

namespace fs = std::filesystem;
using namespace sfl;

namespace {

pipe::RunConfig load_config_or_default(const std::string& path, uint64_t seed_override, bool has_seed) {
    pipe::RunConfig rc;
    if (!path.empty()) rc = pipe::RunConfig::load(path);
    if (has_seed) rc.seed = seed_override;
    rc.validate();
    return rc;
}

int run_generate(const pipe::RunConfig& rc, const std::string& scene_path, const std::string& traj_path,
                 const std::string& ckpt_prefix, int chunk, int steps, int window, const std::string& out_dir) {
    splat::Scene scene = splat::load_scene(scene_path);
    std::vector<geo::CameraPose> trajectory = geo::load_poses(traj_path);
    auto loaded = pipe::load_checkpoint(ckpt_prefix);

    // Condition on renderings of the provided (degraded) scene.
    std::vector<io::ImageRGB> rgb;
    std::vector<io::ImageGray> opacity;
    for (const auto& pose : trajectory) {
        splat::Rendering r = splat::render(scene, pose);
        rgb.push_back(std::move(r.rgb));
        opacity.push_back(std::move(r.opacity));
    }
    auto stream = causal::make_stream(trajectory, &rgb, &opacity);
    causal::RolloutConfig rollout_cfg{chunk, steps, window};
    num::Rng rng = num::Rng(rc.seed).fork(4000);
    flow::LatentVideo latents = causal::rollout(*loaded.net, stream, {}, rollout_cfg, rng);
    std::vector<io::ImageRGB> frames = flow::decode(latents);

    fs::create_directories(out_dir);
    for (size_t f = 0; f < frames.size(); ++f) {
        for (auto& v : frames[f].data) v = std::clamp(v, 0.0, 1.0);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.png", f);
        io::write_png((fs::path(out_dir) / name).string(), frames[f]);
        std::snprintf(name, sizeof name, "frame_%03zu.ppm", f);
        io::write_ppm((fs::path(out_dir) / name).string(), frames[f]);
    }
    std::ofstream os(fs::path(out_dir) / "run_manifest.json", std::ios::trunc);
    os << "{\n  \"config_hash\": \"" << rc.hash() << "\",\n  \"seed\": " << rc.seed
       << ",\n  \"frames\": " << frames.size() << ",\n  \"chunk\": " << chunk << ",\n  \"steps\": " << steps
       << ",\n  \"window\": " << window << "\n}\n";
    std::printf("generate: wrote %zu frames to %s\n", frames.size(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splatflow: reconstruction-conditioned autoregressive generation at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();  // global --config/--seed/--out may follow the verb

    std::string config_path, out_dir;
    uint64_t seed = 0;
    bool has_seed = false;
    app.add_option("--config", config_path, "run config JSON")->expected(1);
    auto* seed_opt = app.add_option("--seed", seed, "master seed override");
    app.add_option("--out", out_dir, "output directory");

    auto* cmd_gen_data = app.add_subcommand("gen-data", "generate the paired synthetic dataset");

    auto* cmd_cameras = app.add_subcommand("sample-cameras", "curate cameras from a pose manifest");
    std::string poses_path;
    size_t cam_k = 6;
    bool alg1 = false;
    cmd_cameras->add_option("--poses", poses_path, "pose manifest JSON")->required();
    cmd_cameras->add_option("--k", cam_k, "cameras per group");
    cmd_cameras->add_flag("--alg1-distance", alg1, "use the unnormalized Frobenius distance");

    auto* cmd_render = app.add_subcommand("render", "render a scene along a trajectory");
    std::string scene_path, traj_path;
    cmd_render->add_option("--scene", scene_path, "scene JSON")->required();
    cmd_render->add_option("--poses", traj_path, "pose manifest JSON")->required();

    auto* cmd_teacher = app.add_subcommand("train-teacher", "train the bidirectional teacher");
    std::string data_dir, resume_prefix;
    cmd_teacher->add_option("--data", data_dir, "dataset directory")->required();
    cmd_teacher->add_option("--resume", resume_prefix, "checkpoint prefix to resume from");

    auto* cmd_distill = app.add_subcommand("distill", "causal conversion + DMD distillation");
    std::string teacher_prefix;
    cmd_distill->add_option("--data", data_dir, "dataset directory");
    cmd_distill->add_option("--teacher", teacher_prefix, "teacher checkpoint prefix")->required();

    auto* cmd_generate = app.add_subcommand("generate", "autoregressive generation along a trajectory");
    std::string gen_ckpt;
    int g_chunk = 2, g_steps = 4, g_window = 8;
    cmd_generate->add_option("--scene", scene_path, "conditioning scene JSON")->required();
    cmd_generate->add_option("--trajectory", traj_path, "pose manifest JSON")->required();
    cmd_generate->add_option("--ckpt", gen_ckpt, "generator checkpoint prefix")->required();
    cmd_generate->add_option("--chunk", g_chunk, "frames per chunk");
    cmd_generate->add_option("--steps", g_steps, "denoising steps per chunk");
    cmd_generate->add_option("--window", g_window, "rolling KV window (frames)");

    auto* cmd_eval = app.add_subcommand("eval", "evaluate variants of a scene against ground truth");
    std::string variants_dir;
    int scene_index = 0;
    cmd_eval->add_option("--data", data_dir, "dataset directory")->required();
    cmd_eval->add_option("--scene-index", scene_index, "scene to evaluate");
    cmd_eval->add_option("--variants", variants_dir, "generated variants directory (from selftest/variants)");
    std::string eval_ckpt;
    cmd_eval->add_option("--ckpt", eval_ckpt, "generator checkpoint (generates variants when given)");

    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    int gc_params = 100;
    cmd_gradcheck->add_option("--n", gc_params, "number of sampled parameters");

    auto* cmd_selftest = app.add_subcommand("selftest", "run the full acceptance suite");

    CLI11_PARSE(app, argc, argv);
    has_seed = seed_opt->count() > 0;

    try {
        if (cmd_gen_data->parsed()) {
            pipe::RunConfig rc = load_config_or_default(config_path, seed, has_seed);
            if (out_dir.empty()) throw std::invalid_argument("gen-data: --out is required");
            pipe::gen_data(rc, out_dir);
            std::printf("gen-data: %d scenes, %d frames each -> %s (config %s)\n", rc.n_scenes, rc.n_cameras,
                        out_dir.c_str(), rc.hash().c_str());
        } else if (cmd_cameras->parsed()) {
            auto poses = geo::load_poses(poses_path);
            auto kind = alg1 ? cams::DistanceKind::Frobenius : cams::DistanceKind::GeodesicNormalized;
            auto result = cams::curate(poses, cam_k, kind);
            std::string json = cams::curation_to_json(result);
            if (out_dir.empty()) {
                std::printf("%s\n", json.c_str());
            } else {
                fs::create_directories(out_dir);
                std::ofstream os(fs::path(out_dir) / "curation.json", std::ios::trunc);
                os << json << "\n";
            }
        } else if (cmd_render->parsed()) {
            if (out_dir.empty()) throw std::invalid_argument("render: --out is required");
            splat::Scene scene = splat::load_scene(scene_path);
            auto poses = geo::load_poses(traj_path);
            fs::create_directories(out_dir);
            for (size_t f = 0; f < poses.size(); ++f) {
                splat::Rendering r = splat::render(scene, poses[f]);
                char name[32];
                std::snprintf(name, sizeof name, "frame_%03zu.png", f);
                io::write_png((fs::path(out_dir) / name).string(), r.rgb);
                std::snprintf(name, sizeof name, "frame_%03zu.ppm", f);
                io::write_ppm((fs::path(out_dir) / name).string(), r.rgb);
            }
            std::printf("render: wrote %zu frames to %s\n", poses.size(), out_dir.c_str());
        } else if (cmd_teacher->parsed()) {
            pipe::RunConfig rc = load_config_or_default(config_path, seed, has_seed);
            if (out_dir.empty()) throw std::invalid_argument("train-teacher: --out is required");
            fs::create_directories(out_dir);
            pipe::Dataset ds = pipe::load_dataset(data_dir);
            std::string prefix = (fs::path(out_dir) / "teacher").string();
            auto result = pipe::train_teacher(rc, ds, prefix, resume_prefix.empty() ? nullptr : &resume_prefix);
            std::printf("train-teacher: %d iters, smoothed loss %.6f -> %.6f, checkpoint %s\n", rc.teacher_iters,
                        result.initial_smoothed, result.final_smoothed, prefix.c_str());
        } else if (cmd_distill->parsed()) {
            pipe::RunConfig rc = load_config_or_default(config_path, seed, has_seed);
            if (out_dir.empty()) throw std::invalid_argument("distill: --out is required");
            if (data_dir.empty()) throw std::invalid_argument("distill: --data is required");
            fs::create_directories(out_dir);
            pipe::Dataset ds = pipe::load_dataset(data_dir);
            std::string prefix = (fs::path(out_dir) / "generator").string();
            pipe::convert_and_distill(rc, ds, teacher_prefix, prefix);
            std::printf("distill: %d causal-init + %d DMD iters, checkpoint %s\n", rc.causal_init_iters,
                        rc.dmd_iters, prefix.c_str());
        } else if (cmd_generate->parsed()) {
            pipe::RunConfig rc = load_config_or_default(config_path, seed, has_seed);
            if (out_dir.empty()) throw std::invalid_argument("generate: --out is required");
            return run_generate(rc, scene_path, traj_path, gen_ckpt, g_chunk, g_steps, g_window, out_dir);
        } else if (cmd_eval->parsed()) {
            pipe::RunConfig rc = load_config_or_default(config_path, seed, has_seed);
            if (out_dir.empty()) throw std::invalid_argument("eval: --out is required");
            pipe::Dataset ds = pipe::load_dataset(data_dir);
            if (scene_index < 0 || scene_index >= static_cast<int>(ds.scenes.size())) {
                throw std::invalid_argument("eval: scene index out of range");
            }
            const auto& sd = ds.scenes[static_cast<size_t>(scene_index)];
            pipe::VariantsResult variants;
            if (!eval_ckpt.empty()) {
                auto loaded = pipe::load_checkpoint(eval_ckpt);
                variants = pipe::generate_variants(rc, *loaded.net, sd, (fs::path(out_dir) / "variants").string(),
                                                   5000 + static_cast<uint64_t>(scene_index) * 16);
            } else if (!variants_dir.empty()) {
                variants.direct.frames = pipe::load_variant_frames((fs::path(variants_dir) / "direct").string());
                variants.refit.frames = pipe::load_variant_frames((fs::path(variants_dir) / "refit").string());
                variants.reenhanced.frames =
                    pipe::load_variant_frames((fs::path(variants_dir) / "reenhanced").string());
            } else {
                throw std::invalid_argument("eval: need --ckpt or --variants");
            }
            auto summary = pipe::eval_run(rc, sd, variants, out_dir);
            std::printf("%-16s %10s %8s %12s %10s\n", "variant", "psnr", "ssim", "psnr_held", "ssim_held");
            for (const auto& row : summary.rows) {
                std::printf("%-16s %10.3f %8.4f %12.3f %10.4f\n", row.name.c_str(), row.psnr_all, row.ssim_all,
                            row.psnr_heldout, row.ssim_heldout);
            }
        } else if (cmd_gradcheck->parsed()) {
            auto result = testing::denoiser_cfm_gradcheck(gc_params, 0xACCE97);
            std::printf("gradcheck: %d parameters, max rel err %.3e (tolerance 1e-4)\n", result.checked,
                        result.max_rel_err);
            if (result.max_rel_err > 1e-4) {
                std::printf("gradcheck: FAIL\n");
                return 2;
            }
            std::printf("gradcheck: PASS\n");
        } else if (cmd_selftest->parsed()) {
            acceptance::Options opts;
            opts.work_dir = out_dir.empty() ? "selftest_work" : out_dir;
            if (!config_path.empty()) opts.config_path = config_path;
            return acceptance::run_and_report(opts);
        }
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
