// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sfl/num/ops.hpp"
#include "sfl/pipe/trainer.hpp"
#include "sfl/pipe/variants.hpp"
#include "sfl/splat/render.hpp"

using namespace sfl;
using pipe::Dataset;
using pipe::RunConfig;

namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig rc;
    rc.seed = 99;
    rc.n_scenes = 2;
    rc.n_primitives = 12;
    rc.n_cameras = 4;
    rc.image_size = 16;
    rc.k_min = rc.k_max = 2;
    rc.model.embed_dim = 32;
    rc.model.n_heads = 4;
    rc.model.n_blocks = 2;
    rc.model.max_frames = 4;
    rc.model.image_height = 16;
    rc.model.image_width = 16;
    rc.model.ref_capacity = 2;
    rc.model.ffn_mult = 2;
    rc.model.pose_hidden = 8;
    rc.ref_train_max = 2;
    rc.ref_test = 1;
    rc.teacher_iters = 8;
    rc.causal_init_iters = 2;
    rc.dmd_iters = 1;
    rc.fake_updates_per_step = 2;
    rc.teacher_ode_steps = 4;
    rc.chunk_size = 2;
    rc.rollout_steps = 2;
    rc.window = 4;
    rc.fit_steps = 3;
    rc.fit_lr = 0.01;
    return rc;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen_data: counts, determinism and held-out holes") {
    RunConfig rc = tiny_config();
    rc.n_scenes = 1;
    rc.k_min = rc.k_max = 2;
    auto dir = fresh_dir("sfl_ds_a");
    Dataset ds = pipe::gen_data(rc, dir.string());
    REQUIRE(ds.scenes.size() == 1);
    const auto& sd = ds.scenes[0];
    CHECK(sd.clean.size() == 4);
    CHECK(sd.degraded.size() == 4);
    CHECK(sd.opacity.size() == 4);
    CHECK(sd.references().size() <= 2);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "scene_000/frames.spfl"));

    SUBCASE("fixed seed gives a byte-identical dataset") {
        auto dir2 = fresh_dir("sfl_ds_b");
        pipe::gen_data(rc, dir2.string());
        for (const char* rel : {"manifest.json", "scene_000/poses.json", "scene_000/curation.json",
                                "scene_000/scene_clean.json", "scene_000/scene_degraded.json",
                                "scene_000/frames.spfl", "scene_000/previews/clean_000.png"}) {
            CHECK(slurp(dir / rel) == slurp(dir2 / rel));
        }
        fs::remove_all(dir2);
    }
    SUBCASE("held-out views of the degraded scene show holes") {
        double clean_op = 0.0, deg_op = 0.0;
        int count = 0;
        for (size_t idx : sd.heldout_frames()) {
            splat::Rendering clean_r = splat::render(sd.clean_scene, sd.poses[idx]);
            clean_op += clean_r.opacity.mean();
            deg_op += sd.opacity[idx].mean();
            ++count;
        }
        REQUIRE(count > 0);
        CHECK(deg_op / count < clean_op / count);
    }
    SUBCASE("round trip through load_dataset") {
        Dataset back = pipe::load_dataset(dir.string());
        REQUIRE(back.scenes.size() == 1);
        CHECK(back.config_hash == ds.config_hash);
        CHECK(back.scenes[0].clean.size() == 4);
        // float frames survive the f32 container bit-exactly
        for (size_t i = 0; i < sd.clean[0].data.size(); ++i) {
            CHECK(static_cast<float>(back.scenes[0].clean[0].data[i]) ==
                  static_cast<float>(sd.clean[0].data[i]));
        }
        CHECK(back.scenes[0].curation.group2 == sd.curation.group2);
    }
    fs::remove_all(dir);
}

TEST_CASE("train_teacher: zero iterations, loss decrease, bitwise resume") {
    RunConfig rc = tiny_config();
    auto data_dir = fresh_dir("sfl_ds_t");
    Dataset ds = pipe::gen_data(rc, data_dir.string());
    auto ckpt_dir = fresh_dir("sfl_ck_t");

    SUBCASE("zero iterations leaves the initialization untouched") {
        RunConfig rc0 = rc;
        rc0.teacher_iters = 0;
        pipe::train_teacher(rc0, ds, (ckpt_dir / "t0").string());
        auto loaded = pipe::load_checkpoint((ckpt_dir / "t0").string());
        model::Denoiser fresh(rc0.model);
        for (size_t i = 0; i < fresh.params().count(); ++i) {
            CHECK(num::ops::max_abs_diff(loaded.net->params().value_at(i), fresh.params().value_at(i)) == 0.0);
        }
        CHECK(loaded.step == 0);
    }
    SUBCASE("seeded run decreases the smoothed loss") {
        RunConfig rc2 = rc;
        rc2.teacher_iters = 600;
        auto result = pipe::train_teacher(rc2, ds, (ckpt_dir / "t1").string());
        CHECK(result.final_smoothed < result.initial_smoothed);
    }
    SUBCASE("resume reproduces the straight run bitwise") {
        RunConfig rc_full = rc;
        rc_full.teacher_iters = 8;
        // Mid-run snapshot after 4 of the 8 steps, same config throughout.
        pipe::train_teacher(rc_full, ds, (ckpt_dir / "half").string(), nullptr, 4);
        pipe::train_teacher(rc_full, ds, (ckpt_dir / "straight").string());
        std::string resume = (ckpt_dir / "half").string();
        pipe::train_teacher(rc_full, ds, (ckpt_dir / "resumed").string(), &resume);

        auto a = pipe::load_checkpoint((ckpt_dir / "straight").string());
        auto b = pipe::load_checkpoint((ckpt_dir / "resumed").string());
        for (size_t i = 0; i < a.net->params().count(); ++i) {
            CHECK(num::ops::max_abs_diff(a.net->params().value_at(i), b.net->params().value_at(i)) == 0.0);
        }
        CHECK(a.rng.counter() == b.rng.counter());
        CHECK(a.loss_log == b.loss_log);
        // The serialized artifacts agree byte for byte.
        CHECK(slurp(ckpt_dir / "straight.spfl") == slurp(ckpt_dir / "resumed.spfl"));
        CHECK(slurp(ckpt_dir / "straight.meta.json") == slurp(ckpt_dir / "resumed.meta.json"));
    }
    fs::remove_all(data_dir);
    fs::remove_all(ckpt_dir);
}

TEST_CASE("convert_and_distill: identity at zero lengths, teacher frozen, finite losses") {
    RunConfig rc = tiny_config();
    auto data_dir = fresh_dir("sfl_ds_d");
    Dataset ds = pipe::gen_data(rc, data_dir.string());
    auto ckpt_dir = fresh_dir("sfl_ck_d");
    RunConfig rt = rc;
    rt.teacher_iters = 4;
    pipe::train_teacher(rt, ds, (ckpt_dir / "teacher").string());

    SUBCASE("zero-length phases copy the teacher weights") {
        RunConfig rc0 = rt;
        rc0.causal_init_iters = 0;
        rc0.dmd_iters = 0;
        pipe::convert_and_distill(rc0, ds, (ckpt_dir / "teacher").string(), (ckpt_dir / "gen0").string());
        auto teacher = pipe::load_checkpoint((ckpt_dir / "teacher").string());
        auto gen = pipe::load_checkpoint((ckpt_dir / "gen0").string());
        for (size_t i = 0; i < teacher.net->params().count(); ++i) {
            CHECK(num::ops::max_abs_diff(teacher.net->params().value_at(i), gen.net->params().value_at(i)) == 0.0);
        }
    }
    SUBCASE("short distillation completes with finite losses and a frozen teacher") {
        auto teacher_before = slurp(ckpt_dir / "teacher.spfl");
        RunConfig rcd = rt;
        rcd.causal_init_iters = 2;
        rcd.dmd_iters = 1;
        auto result =
            pipe::convert_and_distill(rcd, ds, (ckpt_dir / "teacher").string(), (ckpt_dir / "gen1").string());
        for (double v : result.init_loss_log) CHECK(std::isfinite(v));
        for (double v : result.dmd_fake_loss_log) CHECK(std::isfinite(v));
        CHECK(slurp(ckpt_dir / "teacher.spfl") == teacher_before);  // bitwise unchanged
    }
    fs::remove_all(data_dir);
    fs::remove_all(ckpt_dir);
}

TEST_CASE("causal init on one frame reproduces teacher outputs exactly") {
    // The block-causal mask is irrelevant for single-frame inputs, so the
    // converted model (same weights) must match the teacher bitwise.
    RunConfig rc = tiny_config();
    auto data_dir = fresh_dir("sfl_ds_c1");
    Dataset ds = pipe::gen_data(rc, data_dir.string());
    const auto& sd = ds.scenes[0];

    model::Denoiser teacher(rc.model);
    model::Denoiser causal_net(rc.model);
    causal_net.load_weights_from(teacher);

    model::ConditioningBundle bundle;
    bundle.raymaps = {sd.raymaps[0]};
    bundle.opacity = {sd.opacity[0]};
    bundle.target_cameras = {sd.poses[0]};
    model::CondTokens cond = model::build_cond_tokens(rc.model, bundle);
    flow::LatentVideo z = flow::encode({sd.degraded[0]}, rc.model.s, rc.model.dtype);

    model::Denoiser::ForwardArgs full;
    full.cond = &cond;
    full.t_frames = {0.4};
    full.mode = causal::AttnMode::Full;
    model::Denoiser::ForwardArgs bc = full;
    bc.mode = causal::AttnMode::BlockCausal;
    CHECK(num::ops::max_abs_diff(teacher.forward_tensor(z.data, full), causal_net.forward_tensor(z.data, bc)) ==
          0.0);
    fs::remove_all(data_dir);
}

TEST_CASE("generate_variants and eval_run") {
    RunConfig rc = tiny_config();
    auto data_dir = fresh_dir("sfl_ds_v");
    Dataset ds = pipe::gen_data(rc, data_dir.string());
    model::Denoiser generator(rc.model);  // untrained; structure checks only
    auto out = fresh_dir("sfl_var_v");

    auto variants = pipe::generate_variants(rc, generator, ds.scenes[0], out.string(), 10);
    CHECK(variants.direct.frames.size() == 4);
    CHECK(variants.refit.frames.size() == 4);
    CHECK(variants.reenhanced.frames.size() == 4);
    CHECK(variants.direct.producer == "generator");
    CHECK(variants.refit.producer == "renderer");  // rendered, not generated
    CHECK(variants.reenhanced.producer == "generator");
    CHECK(fs::exists(out / "direct/frames.spfl"));
    CHECK(fs::exists(out / "refit/frame_000.png"));
    CHECK(fs::exists(out / "scene_refit.json"));

    // Producer tags persist in the serialized manifests.
    {
        std::ifstream is(out / "refit/manifest.json");
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        CHECK(text.find("\"producer\": \"renderer\"") != std::string::npos);
    }

    auto frames_back = pipe::load_variant_frames((out / "direct").string());
    REQUIRE(frames_back.size() == 4);
    for (size_t i = 0; i < frames_back[0].data.size(); ++i) {
        CHECK(static_cast<float>(frames_back[0].data[i]) ==
              static_cast<float>(variants.direct.frames[0].data[i]));
    }

    auto summary = pipe::eval_run(rc, ds.scenes[0], variants, (out / "eval").string());
    REQUIRE(summary.rows.size() == 4);
    CHECK(summary.rows[0].name == "degraded_input");  // baseline row always present and first
    CHECK(fs::exists(out / "eval/degraded_input.csv"));
    CHECK(fs::exists(out / "eval/direct_grid.png"));
    CHECK(fs::exists(out / "eval/summary.json"));

    // Deterministic report regeneration.
    auto summary2 = pipe::eval_run(rc, ds.scenes[0], variants, (out / "eval2").string());
    CHECK(pipe::summary_to_json(summary) == pipe::summary_to_json(summary2));
    CHECK(slurp(out / "eval/direct.csv") == slurp(out / "eval2/direct.csv"));

    fs::remove_all(data_dir);
    fs::remove_all(out);
}

TEST_CASE("run config JSON round trip keeps the hash stable") {
    RunConfig rc = tiny_config();
    RunConfig back = RunConfig::from_json(rc.to_json());
    CHECK(back.hash() == rc.hash());
    CHECK(back.teacher_iters == rc.teacher_iters);
    CHECK(back.model.embed_dim == rc.model.embed_dim);

    RunConfig other = rc;
    other.teacher_lr *= 2.0;
    CHECK(other.hash() != rc.hash());
}
