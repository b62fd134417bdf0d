// SPDX-License-Identifier: Apache-2.0

#include "sfl/pipe/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sfl/causal/dmd.hpp"
#include "sfl/causal/noise.hpp"
#include "sfl/causal/rollout.hpp"
#include "sfl/error.hpp"
#include "sfl/flow/flow.hpp"
#include "sfl/num/checkpoint.hpp"
#include "sfl/num/ops.hpp"

namespace sfl::pipe {

using model::Denoiser;
using num::DType;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

namespace {

// Stable stream ids for forked rngs, so stages stay independent.
constexpr uint64_t kTeacherStream = 2000;
constexpr uint64_t kDistillStream = 3000;

std::string u64_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t hex_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

/// One training sequence assembled from a scene: conditioning tokens plus the
/// CFM endpoints.
struct SequenceBatch {
    model::CondTokens cond;
    Tensor z_mix;
    Tensor z_clean;
};

std::vector<size_t> pick_refs(const SceneData& sd, int max_refs, num::Rng& rng) {
    std::vector<size_t> pool = sd.curation.selected1;
    size_t avail = std::min<size_t>(pool.size(), static_cast<size_t>(max_refs));
    size_t n = rng.uniform_below(avail + 1);
    // Partial Fisher-Yates over the pool.
    for (size_t i = 0; i < n; ++i) {
        size_t j = i + rng.uniform_below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    return pool;
}

SequenceBatch assemble_batch(const RunConfig& rc, const SceneData& sd, num::Rng& rng, bool with_dropout) {
    model::FrameBatch fb;
    fb.degraded_rgb = sd.degraded;
    fb.opacity = sd.opacity;
    fb.raymaps = sd.raymaps;
    if (with_dropout) model::frame_dropout(fb, rng);

    std::vector<size_t> ref_idx = pick_refs(sd, rc.ref_train_max, rng);

    model::ConditioningBundle bundle;
    bundle.raymaps = fb.raymaps;
    bundle.opacity = fb.opacity;
    bundle.target_cameras = sd.poses;
    for (size_t idx : ref_idx) bundle.reference.emplace_back(sd.clean[idx], sd.poses[idx]);

    SequenceBatch batch;
    batch.cond = model::build_cond_tokens(rc.model, bundle);
    flow::LatentVideo z_deg = flow::encode(fb.degraded_rgb, rc.model.s, rc.model.dtype);
    Tensor o_z = flow::opacity_downscale(fb.opacity, rc.model.s, rc.model.dtype);
    batch.z_mix = flow::opacity_mix(z_deg, o_z, rng);
    batch.z_clean = flow::encode(sd.clean, rc.model.s, rc.model.dtype).data;
    return batch;
}

double smoothed(const std::vector<double>& log, size_t window, bool head) {
    size_t n = std::min(window, log.size());
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += head ? log[i] : log[log.size() - 1 - i];
    return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

void save_checkpoint(const std::string& path_prefix, const Denoiser& net, const RunConfig& rc, int64_t step,
                     const num::Rng& rng, const std::vector<double>& loss_log) {
    num::write_checkpoint(path_prefix + ".spfl", net.params().snapshot(true));
    nlohmann::json meta;
    meta["config"] = nlohmann::json::parse(rc.to_json());
    meta["config_hash"] = rc.hash();
    meta["step"] = step;
    meta["rng_seed"] = u64_hex(rng.seed());
    meta["rng_counter"] = u64_hex(rng.counter());
    meta["rng_has_spare"] = rng.has_spare();
    meta["rng_spare_bits"] = u64_hex(std::bit_cast<uint64_t>(rng.spare()));
    meta["loss_log"] = loss_log;
    std::ofstream os(path_prefix + ".meta.json", std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path_prefix + ".meta.json");
    os << meta.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path_prefix) {
    std::ifstream is(path_prefix + ".meta.json");
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path_prefix + ".meta.json");
    std::stringstream ss;
    ss << is.rdbuf();
    nlohmann::json meta = nlohmann::json::parse(ss.str());
    LoadedCheckpoint out;
    out.config = RunConfig::from_json(meta.at("config").dump());
    out.step = meta.at("step").get<int64_t>();
    out.rng = num::Rng(hex_u64(meta.at("rng_seed").get<std::string>()));
    out.rng.restore(hex_u64(meta.at("rng_counter").get<std::string>()), meta.at("rng_has_spare").get<bool>(),
                    std::bit_cast<double>(hex_u64(meta.at("rng_spare_bits").get<std::string>())));
    out.loss_log = meta.at("loss_log").get<std::vector<double>>();
    out.net = std::make_unique<Denoiser>(out.config.model);
    out.net->params().restore(num::read_checkpoint(path_prefix + ".spfl"));
    return out;
}

TrainResult train_teacher(const RunConfig& rc, const Dataset& ds, const std::string& ckpt_prefix,
                          const std::string* resume_prefix, int64_t stop_after) {
    rc.validate();
    std::unique_ptr<Denoiser> teacher;
    num::Rng rng(0);
    int64_t start_step = 0;
    std::vector<double> loss_log;
    if (resume_prefix) {
        LoadedCheckpoint ck = load_checkpoint(*resume_prefix);
        if (ck.config.hash() != rc.hash()) {
            throw std::invalid_argument("train_teacher: resume checkpoint has a different config hash");
        }
        teacher = std::move(ck.net);
        rng = ck.rng;
        start_step = ck.step;
        loss_log = std::move(ck.loss_log);
    } else {
        teacher = std::make_unique<Denoiser>(rc.model);
        rng = num::Rng(rc.seed).fork(kTeacherStream);
    }

    num::AdamConfig adam;
    double initial_loss = loss_log.empty() ? 0.0 : loss_log[0];
    int divergent_run = 0;
    // Linear warmup then cosine decay to a tenth of the peak rate; a pure
    // function of the step index, so resumed runs stay bitwise identical.
    int64_t warmup = std::min<int64_t>(100, rc.teacher_iters / 10);
    auto lr_at = [&](int64_t step) {
        if (step < warmup) return rc.teacher_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
        double span = static_cast<double>(std::max<int64_t>(1, rc.teacher_iters - warmup));
        double c = 0.5 * (1.0 + std::cos(std::acos(-1.0) * static_cast<double>(step - warmup) / span));
        return rc.teacher_lr * (0.1 + 0.9 * c);
    };

    int64_t stop_step = stop_after >= 0 ? std::min<int64_t>(stop_after, rc.teacher_iters) : rc.teacher_iters;
    for (int64_t step = start_step; step < stop_step; ++step) {
        adam.lr = lr_at(step);
        const SceneData& sd = ds.scenes[rng.uniform_below(static_cast<uint64_t>(ds.scenes.size()))];
        SequenceBatch batch = assemble_batch(rc, sd, rng, /*with_dropout=*/true);
        double t = rng.uniform();

        num::Tape tape;
        auto binding = teacher->bind(tape, true);
        std::vector<flow::CfmSample> samples = {{batch.z_mix, batch.z_clean, t}};
        auto model_fn = [&](num::Tape& tp, Var zt, double tt, size_t) {
            Denoiser::ForwardArgs fa;
            fa.cond = &batch.cond;
            fa.t_frames = {tt};
            fa.mode = causal::AttnMode::Full;
            return teacher->forward(tp, binding, zt, fa);
        };
        Var loss = flow::cfm_loss(tape, model_fn, samples);
        double loss_v = tape.value(loss).flat(0);
        loss_log.push_back(loss_v);
        if (loss_log.size() == 1) initial_loss = loss_v;

        if (loss_v > 10.0 * initial_loss && initial_loss > 0.0) {
            if (++divergent_run >= 100) {
                throw NumericalError("train_teacher: loss exceeded 10x initial for 100 consecutive steps at step " +
                                     std::to_string(step));
            }
        } else {
            divergent_run = 0;
        }

        num::GradMap grads = tape.backward(loss);
        teacher->params().adam_step(binding, grads, adam, step + 1);
    }

    save_checkpoint(ckpt_prefix, *teacher, rc, stop_step, rng, loss_log);
    TrainResult result;
    size_t window = std::max<size_t>(1, std::min<size_t>(100, loss_log.size() / 2));
    result.initial_smoothed = smoothed(loss_log, window, true);
    result.final_smoothed = smoothed(loss_log, window, false);
    result.loss_log = std::move(loss_log);
    return result;
}

DistillResult convert_and_distill(const RunConfig& rc, const Dataset& ds, const std::string& teacher_prefix,
                                  const std::string& generator_prefix) {
    rc.validate();
    LoadedCheckpoint teacher_ck = load_checkpoint(teacher_prefix);
    const Denoiser& teacher = *teacher_ck.net;
    Denoiser generator(rc.model);
    generator.load_weights_from(teacher);
    Denoiser fake(rc.model);
    fake.load_weights_from(teacher);

    num::Rng rng = num::Rng(rc.seed).fork(kDistillStream);
    DistillResult result;

    // Phase 1: causal initialization with diffusion-forcing noise.
    num::AdamConfig init_adam;
    init_adam.lr = rc.causal_init_lr;
    for (int step = 0; step < rc.causal_init_iters; ++step) {
        const SceneData& sd = ds.scenes[rng.uniform_below(static_cast<uint64_t>(ds.scenes.size()))];
        SequenceBatch batch = assemble_batch(rc, sd, rng, /*with_dropout=*/true);
        causal::NoiseSchedule ns = causal::df_noise(rc.n_cameras, rng);

        // Per-frame interpolants.
        int64_t cells_per_frame = static_cast<int64_t>(rc.model.hl()) * rc.model.wl();
        int64_t c = rc.model.latent_channels();
        Tensor z_t = Tensor::zeros(batch.z_mix.shape(), batch.z_mix.dtype());
        Tensor v_t = ops::sub(batch.z_clean, batch.z_mix);
        for (int f = 0; f < rc.n_cameras; ++f) {
            double tf = ns.t[static_cast<size_t>(f)];
            for (int64_t i = 0; i < cells_per_frame * c; ++i) {
                int64_t idx = static_cast<int64_t>(f) * cells_per_frame * c + i;
                z_t.set_flat(idx, batch.z_mix.flat(idx) + tf * v_t.flat(idx));
            }
        }

        num::Tape tape;
        auto binding = generator.bind(tape, true);
        Denoiser::ForwardArgs fa;
        fa.cond = &batch.cond;
        fa.t_frames = ns.t;
        fa.mode = causal::AttnMode::BlockCausal;
        Var pred = generator.forward(tape, binding, tape.constant(z_t), fa);
        Var err = tape.sub(pred, tape.constant(v_t));
        Var loss = tape.mean(tape.mul(err, err));
        double loss_v = tape.value(loss).flat(0);
        if (!std::isfinite(loss_v)) {
            throw NumericalError("convert_and_distill: non-finite causal-init loss at step " + std::to_string(step));
        }
        result.init_loss_log.push_back(loss_v);
        num::GradMap grads = tape.backward(loss);
        generator.params().adam_step(binding, grads, init_adam, step + 1);
    }

    // Phase 2: autoregressive rollout + DMD.
    num::AdamConfig gen_adam;
    gen_adam.lr = rc.dmd_generator_lr;
    num::AdamConfig fake_adam;
    fake_adam.lr = rc.dmd_fake_lr;
    causal::RolloutConfig rollout_cfg{rc.chunk_size, rc.rollout_steps, rc.window};
    int64_t fake_step_count = 0;

    for (int step = 0; step < rc.dmd_iters; ++step) {
        const SceneData& sd = ds.scenes[rng.uniform_below(static_cast<uint64_t>(ds.scenes.size()))];

        // Dropout on the conditioning stream, as in bidirectional training.
        model::FrameBatch fb;
        fb.degraded_rgb = sd.degraded;
        fb.opacity = sd.opacity;
        fb.raymaps = sd.raymaps;
        model::frame_dropout(fb, rng);
        std::vector<size_t> ref_idx = pick_refs(sd, rc.ref_train_max, rng);
        std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;
        for (size_t idx : ref_idx) refs.emplace_back(sd.clean[idx], sd.poses[idx]);

        auto stream = causal::make_stream(sd.poses, &fb.degraded_rgb, &fb.opacity);

        model::ConditioningBundle full_bundle;
        full_bundle.raymaps = fb.raymaps;
        full_bundle.opacity = fb.opacity;
        full_bundle.target_cameras = sd.poses;
        full_bundle.reference = refs;
        model::CondTokens full_cond = model::build_cond_tokens(rc.model, full_bundle);

        flow::LatentVideo z_deg = flow::encode(fb.degraded_rgb, rc.model.s, rc.model.dtype);
        Tensor o_z = flow::opacity_downscale(fb.opacity, rc.model.s, rc.model.dtype);

        causal::DmdHooks hooks;
        hooks.generator_sample = [&](num::Tape& t, const num::ParamStore::Binding& b, num::Rng& r) {
            causal::KVCache cache(rc.model.n_blocks, rc.model.tokens_per_frame(), rc.window);
            return causal::rollout_on_tape(t, generator, b, stream, refs, rollout_cfg, r, cache);
        };
        hooks.sample_source = [&](num::Rng& r) { return flow::opacity_mix(z_deg, o_z, r); };
        hooks.teacher_velocity = [&](const Tensor& z, double t) {
            Denoiser::ForwardArgs fa;
            fa.cond = &full_cond;
            fa.t_frames = {t};
            fa.mode = causal::AttnMode::Full;
            return teacher.forward_tensor(z, fa);
        };
        hooks.fake_velocity = [&](const Tensor& z, double t) {
            Denoiser::ForwardArgs fa;
            fa.cond = &full_cond;
            fa.t_frames = {t};
            fa.mode = causal::AttnMode::Full;
            return fake.forward_tensor(z, fa);
        };
        hooks.fake_cfm_loss = [&](num::Tape& t, const num::ParamStore::Binding& b, const Tensor& z0,
                                  const Tensor& target, double tt) {
            auto [zt, vt] = flow::interpolant(z0, target, tt);
            Denoiser::ForwardArgs fa;
            fa.cond = &full_cond;
            fa.t_frames = {tt};
            fa.mode = causal::AttnMode::Full;
            Var pred = fake.forward(t, b, t.constant(zt), fa);
            Var err = t.sub(pred, t.constant(vt));
            return t.mean(t.mul(err, err));
        };

        auto step_result = causal::dmd_step(generator.params(), fake.params(), hooks, rng);
        fake.params().adam_step(step_result.fake_binding, step_result.fake_grads, fake_adam, ++fake_step_count);
        for (int extra = 1; extra < rc.fake_updates_per_step; ++extra) {
            auto fr = causal::dmd_fake_step(fake.params(), hooks, step_result.x_hat, rng);
            fake.params().adam_step(fr.binding, fr.grads, fake_adam, ++fake_step_count);
        }
        generator.params().adam_step(step_result.generator_binding, step_result.generator_grads, gen_adam, step + 1);
        result.dmd_fake_loss_log.push_back(step_result.fake_loss);
    }

    save_checkpoint(generator_prefix, generator, rc, rc.causal_init_iters + rc.dmd_iters, rng,
                    result.dmd_fake_loss_log);
    return result;
}

std::vector<io::ImageRGB> teacher_enhance(const RunConfig& rc, const Denoiser& teacher, const SceneData& scene,
                                          int n_refs, uint64_t noise_stream) {
    model::ConditioningBundle bundle;
    bundle.raymaps = scene.raymaps;
    bundle.opacity = scene.opacity;
    bundle.target_cameras = scene.poses;
    auto refs = scene.references();
    refs.resize(std::min<size_t>(refs.size(), static_cast<size_t>(n_refs)));
    bundle.reference = refs;
    model::CondTokens cond = model::build_cond_tokens(rc.model, bundle);

    flow::LatentVideo z_deg = flow::encode(scene.degraded, rc.model.s, rc.model.dtype);
    Tensor o_z = flow::opacity_downscale(scene.opacity, rc.model.s, rc.model.dtype);
    num::Rng rng = num::Rng(rc.seed).fork(noise_stream);
    Tensor z0 = flow::opacity_mix(z_deg, o_z, rng);

    auto velocity = [&](const Tensor& z, double t) {
        Denoiser::ForwardArgs fa;
        fa.cond = &cond;
        fa.t_frames = {t};
        fa.mode = causal::AttnMode::Full;
        return teacher.forward_tensor(z, fa);
    };
    Tensor z1 = flow::ode_sample(velocity, z0, rc.teacher_ode_steps);
    std::vector<io::ImageRGB> frames = flow::decode(flow::with_data(z_deg, z1));
    for (auto& img : frames) {
        for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    }
    return frames;
}

std::vector<io::ImageRGB> generator_rollout_frames(const RunConfig& rc, const Denoiser& generator,
                                                   const SceneData& scene,
                                                   const std::vector<io::ImageRGB>* cond_rgb,
                                                   const std::vector<io::ImageGray>* cond_opacity, int n_refs,
                                                   uint64_t noise_stream) {
    const std::vector<io::ImageRGB>& rgb = cond_rgb ? *cond_rgb : scene.degraded;
    const std::vector<io::ImageGray>& op = cond_opacity ? *cond_opacity : scene.opacity;
    auto stream = causal::make_stream(scene.poses, &rgb, &op);
    auto refs = scene.references();
    refs.resize(std::min<size_t>(refs.size(), static_cast<size_t>(n_refs)));

    causal::RolloutConfig rollout_cfg{rc.chunk_size, rc.rollout_steps, rc.window};
    num::Rng rng = num::Rng(rc.seed).fork(noise_stream);
    flow::LatentVideo latents = causal::rollout(generator, stream, refs, rollout_cfg, rng);
    std::vector<io::ImageRGB> frames = flow::decode(latents);
    for (auto& img : frames) {
        for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    }
    return frames;
}

}  // namespace sfl::pipe
