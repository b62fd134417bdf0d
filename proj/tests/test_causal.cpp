// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "sfl/causal/dmd.hpp"
#include "sfl/causal/noise.hpp"
#include "sfl/causal/rollout.hpp"
#include "sfl/num/ops.hpp"
#include "support/model_fixtures.hpp"
#include "support/oracles.hpp"

using namespace sfl;
using causal::AttnMode;
using causal::KVCache;
using model::Denoiser;
using model::DenoiserConfig;
using num::DType;
using num::Rng;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

namespace {

DenoiserConfig rollout_config(DType dt) {
    DenoiserConfig cfg;
    cfg.embed_dim = 32;
    cfg.n_heads = 4;
    cfg.n_blocks = 2;
    cfg.max_frames = 4;
    cfg.s = 4;
    cfg.image_height = 16;
    cfg.image_width = 16;
    cfg.ref_capacity = 2;
    cfg.ffn_mult = 2;
    cfg.pose_hidden = 8;
    cfg.dtype = dt;
    cfg.init_seed = 7;
    return cfg;
}

std::vector<causal::FrameConditioning> random_stream(Rng& rng, const DenoiserConfig& cfg, int frames) {
    std::vector<geo::CameraPose> traj;
    std::vector<io::ImageRGB> rgb;
    std::vector<io::ImageGray> op;
    for (int f = 0; f < frames; ++f) {
        traj.push_back(testing::fixture_camera(rng, cfg.image_height, cfg.image_width));
        rgb.push_back(testing::random_image(rng, cfg.image_height, cfg.image_width));
        op.push_back(testing::random_gray(rng, cfg.image_height, cfg.image_width));
    }
    return causal::make_stream(traj, &rgb, &op);
}

}  // namespace

TEST_CASE("block_causal_mask basics") {
    Tensor one = causal::block_causal_mask(1, 3);
    for (int64_t i = 0; i < one.numel(); ++i) CHECK(one.flat(i) == 1.0);

    Tensor m = causal::block_causal_mask(2, 2);
    int blocked = 0;
    for (int64_t q = 0; q < 4; ++q) {
        for (int64_t k = 0; k < 4; ++k) {
            if (m.at({q, k}) == 0.0) {
                ++blocked;
                CHECK(q < 2);
                CHECK(k >= 2);
            }
        }
    }
    CHECK(blocked == 4);
}

TEST_CASE("block_causal_mask equals lower-triangular kron all-ones") {
    int frames = 4, tph = 3;
    Tensor m = causal::block_causal_mask(frames, tph);
    for (int64_t q = 0; q < frames * tph; ++q) {
        for (int64_t k = 0; k < frames * tph; ++k) {
            double expect = (k / tph) <= (q / tph) ? 1.0 : 0.0;
            CHECK(m.at({q, k}) == expect);
        }
    }
}

TEST_CASE("df_noise") {
    SUBCASE("seeded runs reproduce levels exactly") {
        Rng a(5), b(5);
        auto s1 = causal::df_noise(6, a);
        auto s2 = causal::df_noise(6, b);
        CHECK(s1.t == s2.t);
        CHECK(!s1.shared);
    }
    SUBCASE("per-frame levels are not all equal on a seeded fixture") {
        Rng rng(6);
        auto s = causal::df_noise(8, rng);
        bool all_equal = true;
        for (double t : s.t) all_equal = all_equal && t == s.t[0];
        CHECK(!all_equal);
        for (double t : s.t) {
            CHECK(t >= 0.0);
            CHECK(t <= 1.0);
        }
    }
    SUBCASE("levels are uniform by a chi-squared test at the 1 percent level") {
        Rng rng(7);
        std::array<int, 10> bins{};
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            auto s = causal::df_noise(1, rng);
            int b = std::min(9, static_cast<int>(s.t[0] * 10.0));
            bins[static_cast<size_t>(b)]++;
        }
        double chi2 = 0.0;
        double expect = n / 10.0;
        for (int count : bins) chi2 += (count - expect) * (count - expect) / expect;
        CHECK(chi2 <= 21.666);  // chi-squared critical value, 9 dof, alpha = 0.01
    }
}

TEST_CASE("KVCache eviction") {
    SUBCASE("below the window is a no-op") {
        KVCache cache(1, 2, 4);
        cache.begin_append(0, 2);
        cache.append(0, Tensor::full({4, 3}, 1.0, DType::F64), Tensor::full({4, 3}, 2.0, DType::F64));
        cache.end_append();
        CHECK(cache.occupancy() == 2);
        CHECK(cache.first_frame() == 0);
        causal::evict(cache);
        CHECK(cache.occupancy() == 2);
    }
    SUBCASE("w+3 inserts retain exactly the last w frames") {
        int w = 4;
        KVCache cache(1, 1, w);
        for (int f = 0; f < w + 3; ++f) {
            cache.begin_append(f, 1);
            cache.append(0, Tensor::full({1, 2}, f, DType::F64), Tensor::full({1, 2}, -f, DType::F64));
            cache.end_append();
        }
        CHECK(cache.occupancy() == w);
        CHECK(cache.first_frame() == 3);  // frames 3..6 retained (0-indexed)
        CHECK(cache.next_frame() == w + 3);
        CHECK(cache.keys(0).at({0, 0}) == 3.0);
        CHECK(cache.keys(0).at({3, 0}) == 6.0);
    }
    SUBCASE("frame-index discontinuity is fatal with diagnostics") {
        KVCache cache(1, 1, 4);
        cache.begin_append(0, 1);
        cache.append(0, Tensor::zeros({1, 2}, DType::F64), Tensor::zeros({1, 2}, DType::F64));
        cache.end_append();
        CHECK_THROWS_WITH_AS(cache.begin_append(3, 1), doctest::Contains("discontinuity"), std::runtime_error);
    }
}

TEST_CASE("cached rollout equals the full-prefix recompute oracle") {
    for (DType dt : {DType::F64, DType::F32}) {
        DenoiserConfig cfg = rollout_config(dt);
        Denoiser net(cfg);
        testing::randomize_all_params(net, 100);
        Rng srng(200);
        auto stream = random_stream(srng, cfg, 6);
        std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;
        refs.emplace_back(testing::random_image(srng, 16, 16), testing::fixture_camera(srng, 16, 16));

        causal::RolloutConfig rc;
        rc.chunk_size = 2;
        rc.steps_per_chunk = 2;
        rc.window = 16;  // unlimited for this length
        Rng r1(9), r2(9);
        flow::LatentVideo cached = causal::rollout(net, stream, refs, rc, r1);
        flow::LatentVideo oracle = testing::full_prefix_rollout_oracle(net, stream, refs, rc, r2);
        double diff = ops::max_abs_diff(cached.data, oracle.data);
        if (dt == DType::F64) {
            CHECK(diff == 0.0);
        } else {
            CHECK(diff <= 1e-5);
        }
    }
}

TEST_CASE("rolling window matches the windowed-attention recompute oracle") {
    DenoiserConfig cfg = rollout_config(DType::F64);
    Denoiser net(cfg);
    testing::randomize_all_params(net, 101);
    Rng srng(201);
    auto stream = random_stream(srng, cfg, 8);
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;

    causal::RolloutConfig rc;
    rc.chunk_size = 2;
    rc.steps_per_chunk = 2;
    rc.window = 2;
    Rng r1(10), r2(10);
    flow::LatentVideo cached = causal::rollout(net, stream, refs, rc, r1);
    flow::LatentVideo oracle = testing::banded_rollout_oracle(net, stream, rc, r2);
    CHECK(ops::max_abs_diff(cached.data, oracle.data) == 0.0);
}

TEST_CASE("single-chunk rollout equals one causal sampling pass") {
    DenoiserConfig cfg = rollout_config(DType::F64);
    Denoiser net(cfg);
    testing::randomize_all_params(net, 102);
    Rng srng(202);
    int frames = 4;
    auto stream = random_stream(srng, cfg, frames);
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;

    causal::RolloutConfig rc;
    rc.chunk_size = frames;
    rc.steps_per_chunk = 3;
    rc.window = 8;
    Rng r1(11), r2(11);
    flow::LatentVideo got = causal::rollout(net, stream, refs, rc, r1);

    // Manual single pass over the whole sequence.
    model::ConditioningBundle bundle;
    std::vector<io::ImageRGB> rgb;
    std::vector<io::ImageGray> op;
    for (const auto& fc : stream) {
        bundle.raymaps.push_back(fc.raymap);
        bundle.target_cameras.push_back(fc.camera);
        bundle.opacity.push_back(fc.opacity);
        rgb.push_back(fc.degraded_rgb);
        op.push_back(fc.opacity);
    }
    model::CondTokens cond = model::build_cond_tokens(cfg, bundle);
    flow::LatentVideo z_deg = flow::encode(rgb, cfg.s, cfg.dtype);
    Tensor z = flow::opacity_mix(z_deg, flow::opacity_downscale(op, cfg.s, cfg.dtype), r2);
    double h = 1.0 / rc.steps_per_chunk;
    for (int k = 0; k < rc.steps_per_chunk; ++k) {
        Denoiser::ForwardArgs fa;
        fa.cond = &cond;
        fa.t_frames = {k * h};
        fa.mode = AttnMode::BlockCausal;
        Tensor v = net.forward_tensor(z, fa);
        z = ops::add(z, ops::scale(v, h));
    }
    CHECK(ops::max_abs_diff(got.data, z) == 0.0);
}

TEST_CASE("rollout step count is live and outputs stay finite") {
    DenoiserConfig cfg = rollout_config(DType::F32);
    Denoiser net(cfg);
    testing::randomize_all_params(net, 103);
    Rng srng(203);
    auto stream = random_stream(srng, cfg, 4);
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;

    causal::RolloutConfig rc1{2, 1, 8}, rc4{2, 4, 8};
    Rng r1(12), r2(12);
    flow::LatentVideo one = causal::rollout(net, stream, refs, rc1, r1);
    flow::LatentVideo four = causal::rollout(net, stream, refs, rc4, r2);
    CHECK(one.data.all_finite());
    CHECK(four.data.all_finite());
    CHECK(ops::max_abs_diff(one.data, four.data) > 0.0);
}

TEST_CASE("changing a later chunk's conditioning never alters earlier chunks") {
    DenoiserConfig cfg = rollout_config(DType::F64);
    Denoiser net(cfg);
    testing::randomize_all_params(net, 104);
    Rng srng(204);
    auto stream = random_stream(srng, cfg, 6);
    auto stream2 = stream;
    // Perturb chunk 2 (frames 4,5): different conditioning entirely.
    for (int f = 4; f < 6; ++f) {
        for (auto& v : stream2[static_cast<size_t>(f)].degraded_rgb.data) v = 1.0 - v;
        for (auto& v : stream2[static_cast<size_t>(f)].opacity.data) v = 1.0 - v;
    }
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;
    causal::RolloutConfig rc{2, 2, 8};
    Rng r1(13), r2(13);
    flow::LatentVideo a = causal::rollout(net, stream, refs, rc, r1);
    flow::LatentVideo b = causal::rollout(net, stream2, refs, rc, r2);
    int64_t per_frame = static_cast<int64_t>(cfg.hl()) * cfg.wl() * cfg.latent_channels();
    for (int64_t i = 0; i < 4 * per_frame; ++i) CHECK(a.data.flat(i) == b.data.flat(i));
    double late = 0.0;
    for (int64_t i = 4 * per_frame; i < 6 * per_frame; ++i) {
        late = std::max(late, std::abs(a.data.flat(i) - b.data.flat(i)));
    }
    CHECK(late > 0.0);
}

TEST_CASE("dropout-mode continuation runs when renderings are absent") {
    DenoiserConfig cfg = rollout_config(DType::F32);
    Denoiser net(cfg);
    testing::randomize_all_params(net, 105);
    Rng srng(205);
    std::vector<geo::CameraPose> traj;
    std::vector<io::ImageRGB> rgb;
    std::vector<io::ImageGray> op;
    for (int f = 0; f < 6; ++f) traj.push_back(testing::fixture_camera(srng, 16, 16));
    for (int f = 0; f < 3; ++f) {  // renderings for the first three frames only
        rgb.push_back(testing::random_image(srng, 16, 16));
        op.push_back(testing::random_gray(srng, 16, 16));
    }
    auto stream = causal::make_stream(traj, &rgb, &op);
    CHECK(stream[2].has_rendering);
    CHECK(!stream[3].has_rendering);
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> refs;
    causal::RolloutConfig rc{2, 2, 4};
    Rng r(14);
    flow::LatentVideo out = causal::rollout(net, stream, refs, rc, r);
    CHECK(out.frames == 6);
    CHECK(out.data.all_finite());
}

TEST_CASE("dmd_step") {
    // Shared fixture: 1-layer linear generator x_hat = z0 @ W over a fixed
    // source batch.
    const int64_t n = 8, dim = 3;
    Rng init_rng(300);
    Tensor z0_fixed = sfl::num::randn(init_rng, {n, dim}, DType::F64);
    num::ParamStore gen_params;
    gen_params.add("w", sfl::num::randn(init_rng, {dim, dim}, DType::F64));

    causal::DmdHooks hooks;
    hooks.generator_sample = [&](num::Tape& t, const num::ParamStore::Binding& b, Rng&) {
        return t.matmul(t.constant(z0_fixed), b.vars[0]);
    };
    hooks.sample_source = [&](Rng& r) { return sfl::num::randn(r, {n, dim}, DType::F64); };

    SUBCASE("fake identical to teacher gives exactly zero generator gradient") {
        auto vel = [](const Tensor& z, double) { return ops::scale(z, 0.25); };
        hooks.teacher_velocity = vel;
        hooks.fake_velocity = vel;
        num::ParamStore fake_params;
        fake_params.add("unused", Tensor::zeros({1}, DType::F64));
        hooks.fake_cfm_loss = [&](num::Tape& t, const num::ParamStore::Binding& b, const Tensor&, const Tensor&,
                                  double) { return t.mean(t.mul(b.vars[0], b.vars[0])); };
        Rng rng(1);
        auto result = causal::dmd_step(gen_params, fake_params, hooks, rng);
        CHECK(result.grad_seed_norm == 0.0);
        CHECK(result.generator_grads.at(result.generator_binding.vars[0].id).max_abs() == 0.0);
    }

    SUBCASE("constant velocity offset c propagates through the linear sample") {
        Tensor c = Tensor::from_values({1, 3}, {0.5, -1.5, 2.0});
        hooks.teacher_velocity = [](const Tensor& z, double) { return ops::scale(z, 0.1); };
        hooks.fake_velocity = [&](const Tensor& z, double) {
            // fake = teacher + c broadcast over rows
            Tensor out = ops::scale(z, 0.1);
            for (int64_t r = 0; r < out.dim(0); ++r) {
                for (int64_t k = 0; k < 3; ++k) out.set_flat(r * 3 + k, out.flat(r * 3 + k) + c.flat(k));
            }
            return out;
        };
        num::ParamStore fake_params;
        fake_params.add("unused", Tensor::zeros({1}, DType::F64));
        hooks.fake_cfm_loss = [&](num::Tape& t, const num::ParamStore::Binding& b, const Tensor&, const Tensor&,
                                  double) { return t.mean(t.mul(b.vars[0], b.vars[0])); };
        Rng rng(2);
        auto result = causal::dmd_step(gen_params, fake_params, hooks, rng);
        // Seed at x_hat is the row-broadcast c, so dL/dW = z0^T @ seed.
        Tensor seed = Tensor::zeros({n, dim}, DType::F64);
        for (int64_t r = 0; r < n; ++r) {
            for (int64_t k = 0; k < 3; ++k) seed.set_flat(r * 3 + k, c.flat(k));
        }
        Tensor expect = ops::matmul(ops::transpose(z0_fixed), seed);
        const Tensor& got = result.generator_grads.at(result.generator_binding.vars[0].id);
        CHECK(ops::max_abs_diff(got, expect) <= 1e-12);
    }

    SUBCASE("1D two-Gaussian distillation pulls generator moments toward the teacher") {
        // Teacher: exact CFM velocity transporting N(0,1) to N(3, 0.25).
        const double m = 3.0, s2 = 0.25;
        auto teacher = [&](const Tensor& z, double t) {
            double var_t = (1 - t) * (1 - t) + t * t * s2;
            double cov = t * s2 - (1 - t);
            Tensor out = Tensor::zeros(z.shape(), z.dtype());
            for (int64_t i = 0; i < z.numel(); ++i) out.set_flat(i, m + cov / var_t * (z.flat(i) - t * m));
            return out;
        };
        // Generator: x = a * eps + b (reparameterized Gaussian).
        const int64_t batch = 128;
        num::ParamStore gp;
        gp.add("a", Tensor::from_values({1}, {1.0}));
        gp.add("b", Tensor::from_values({1}, {0.0}));
        // Fake score: v(z, t) = (w0 + w1 t) * z + (u0 + u1 t).
        num::ParamStore fp;
        fp.add("w", Tensor::from_values({2}, {0.0, 0.0}));
        fp.add("u", Tensor::from_values({2}, {0.0, 0.0}));

        causal::DmdHooks h2;
        h2.sample_source = [&](Rng& r) { return sfl::num::randn(r, {batch, 1}, DType::F64); };
        h2.generator_sample = [&](num::Tape& t, const num::ParamStore::Binding& b, Rng& r) {
            Tensor eps = sfl::num::randn(r, {batch, 1}, DType::F64);
            Var a_col = t.reshape(b.vars[0], {1, 1});
            Var scaled = t.matmul(t.constant(eps), a_col);
            Var b_bias = b.vars[1];
            return t.add_bias(scaled, b_bias);
        };
        h2.teacher_velocity = teacher;
        auto fake_eval = [&](const Tensor& z, double t) {
            double w = fp.value("w").flat(0) + fp.value("w").flat(1) * t;
            double u = fp.value("u").flat(0) + fp.value("u").flat(1) * t;
            Tensor out = Tensor::zeros(z.shape(), z.dtype());
            for (int64_t i = 0; i < z.numel(); ++i) out.set_flat(i, w * z.flat(i) + u);
            return out;
        };
        h2.fake_velocity = fake_eval;
        h2.fake_cfm_loss = [&](num::Tape& t, const num::ParamStore::Binding& b, const Tensor& z0,
                               const Tensor& x1, double tt) {
            auto [zt, vt] = flow::interpolant(z0, x1, tt);
            // pred = (w0 + w1 t) zt + (u0 + u1 t)
            Tensor tsel = Tensor::from_values({2, 1}, {1.0, tt});
            Var w_t = t.matmul(t.reshape(b.vars[0], {1, 2}), t.constant(tsel));  // (1,1)
            Var u_t = t.matmul(t.reshape(b.vars[1], {1, 2}), t.constant(tsel));
            Var pred = t.matmul(t.constant(zt), w_t);
            pred = t.add_bias(pred, t.reshape(u_t, {1}));
            Var err = t.sub(pred, t.constant(vt));
            return t.mean(t.mul(err, err));
        };

        Rng rng(777);
        num::AdamConfig gen_adam{0.02, 0.9, 0.999, 1e-8};
        num::AdamConfig fake_adam{0.02, 0.9, 0.999, 1e-8};
        std::vector<double> mean_err_log, var_err_log;
        int fake_steps = 0;
        for (int step = 1; step <= 400; ++step) {
            auto result = causal::dmd_step(gp, fp, h2, rng);
            fp.adam_step(result.fake_binding, result.fake_grads, fake_adam, ++fake_steps);
            // Extra fake updates (5:1 ratio).
            for (int extra = 0; extra < 4; ++extra) {
                auto fr = causal::dmd_fake_step(fp, h2, result.x_hat, rng);
                fp.adam_step(fr.binding, fr.grads, fake_adam, ++fake_steps);
            }
            gp.adam_step(result.generator_binding, result.generator_grads, gen_adam, step);
            if (step % 100 == 0) {
                double a = gp.value("a").flat(0), b = gp.value("b").flat(0);
                mean_err_log.push_back(std::abs(b - m));
                var_err_log.push_back(std::abs(a * a - s2));
            }
        }
        double mean_err_initial = std::abs(0.0 - m);
        double var_err_initial = std::abs(1.0 - s2);
        // Moments move toward the teacher's and end close.
        CHECK(mean_err_log.back() < 0.3 * mean_err_initial);
        CHECK(var_err_log.back() < 0.5 * var_err_initial);
        // Trend over checkpoints: never far above the running best.
        double best_mean = mean_err_initial, best_var = var_err_initial;
        for (size_t i = 0; i < mean_err_log.size(); ++i) {
            CHECK(mean_err_log[i] <= best_mean + 0.1 * mean_err_initial);
            CHECK(var_err_log[i] <= best_var + 0.1 * var_err_initial);
            best_mean = std::min(best_mean, mean_err_log[i]);
            best_var = std::min(best_var, var_err_log[i]);
        }
    }
}
