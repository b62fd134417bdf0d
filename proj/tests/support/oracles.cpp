// SPDX-License-Identifier: Apache-2.0

#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfl/flow/latent.hpp"
#include "sfl/num/ops.hpp"

namespace sfl::testing {

using causal::AttnMode;
using geo::CameraPose;
using io::ImageGray;
using io::ImageRGB;
using model::Denoiser;
using num::Rng;
using num::Tensor;
using splat::Scene;
using namespace splat;  // compositing constants

// Fully standalone compositing oracle: its own projection math (homogeneous
// matrices, no shared helpers), insertion-sorted depth order, explicit loops.
void oracle_render(const Scene& scene, const CameraPose& cam, ImageRGB& rgb, ImageGray& op) {
    struct P2d {
        double mx, my, a, b, c, depth;
        size_t idx;
    };
    std::vector<P2d> projected;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto& g = scene.primitives[i];
        // camera-from-world rotation as explicit transpose
        double w[9] = {cam.R[0], cam.R[3], cam.R[6], cam.R[1], cam.R[4], cam.R[7], cam.R[2], cam.R[5], cam.R[8]};
        double rel[3] = {g.mu[0] - cam.t[0], g.mu[1] - cam.t[1], g.mu[2] - cam.t[2]};
        double pc[3] = {w[0] * rel[0] + w[1] * rel[1] + w[2] * rel[2],
                        w[3] * rel[0] + w[4] * rel[1] + w[5] * rel[2],
                        w[6] * rel[0] + w[7] * rel[1] + w[8] * rel[2]};
        if (pc[2] <= kNearPlane) continue;
        double qw = g.quat[0], qx = g.quat[1], qy = g.quat[2], qz = g.quat[3];
        double rq[9] = {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy),
                        2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx),
                        2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy)};
        double sig[9];
        for (int r = 0; r < 3; ++r) {
            for (int s = 0; s < 3; ++s) {
                sig[r * 3 + s] = rq[r * 3 + 0] * g.scale[0] * g.scale[0] * rq[s * 3 + 0] +
                                 rq[r * 3 + 1] * g.scale[1] * g.scale[1] * rq[s * 3 + 1] +
                                 rq[r * 3 + 2] * g.scale[2] * g.scale[2] * rq[s * 3 + 2];
            }
        }
        double jw[6];
        double jac[6] = {cam.fx / pc[2], 0, -cam.fx * pc[0] / (pc[2] * pc[2]),
                         0, cam.fy / pc[2], -cam.fy * pc[1] / (pc[2] * pc[2])};
        for (int r = 0; r < 2; ++r) {
            for (int s = 0; s < 3; ++s) {
                jw[r * 3 + s] = jac[r * 3 + 0] * w[s] + jac[r * 3 + 1] * w[3 + s] + jac[r * 3 + 2] * w[6 + s];
            }
        }
        double cova = 0, covb = 0, covc = 0;
        for (int r = 0; r < 3; ++r) {
            for (int s = 0; s < 3; ++s) {
                cova += jw[r] * sig[r * 3 + s] * jw[s];
                covb += jw[r] * sig[r * 3 + s] * jw[3 + s];
                covc += jw[3 + r] * sig[r * 3 + s] * jw[3 + s];
            }
        }
        projected.push_back({cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy,
                             cova + kCovRegularizer, covb, covc + kCovRegularizer, pc[2], i});
    }
    // insertion sort by (depth, original index)
    for (size_t i = 1; i < projected.size(); ++i) {
        P2d key = projected[i];
        size_t j = i;
        while (j > 0 && (projected[j - 1].depth > key.depth ||
                         (projected[j - 1].depth == key.depth && projected[j - 1].idx > key.idx))) {
            projected[j] = projected[j - 1];
            --j;
        }
        projected[j] = key;
    }
    rgb = ImageRGB(cam.height, cam.width);
    op = ImageGray(cam.height, cam.width);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double transmit = 1.0;
            for (const P2d& s : projected) {
                double dx = x + 0.5 - s.mx, dy = y + 0.5 - s.my;
                double det = s.a * s.c - s.b * s.b;
                double q = (s.c * dx * dx - 2 * s.b * dx * dy + s.a * dy * dy) / det;
                if (q > kMahalanobisMax) continue;
                double alpha = std::min(scene.primitives[s.idx].sigma * std::exp(-0.5 * q), kAlphaMax);
                if (alpha < kAlphaMin) continue;
                for (int ch = 0; ch < 3; ++ch) {
                    rgb.px(y, x)[ch] += transmit * alpha * scene.primitives[s.idx].color[static_cast<size_t>(ch)];
                }
                op.at(y, x) += transmit * alpha;
                transmit *= 1.0 - alpha;
                if (transmit < kTransmitMin) break;
            }
        }
    }
}

// Reprocesses [kept prefix | current chunk] through the model per Euler step
// with no cache; the prefix is truncated to the last `window` frames.
flow::LatentVideo full_prefix_rollout_oracle(const Denoiser& net, const std::vector<causal::FrameConditioning>& stream,
                                 const std::vector<std::pair<io::ImageRGB, geo::CameraPose>>& refs,
                                 const causal::RolloutConfig& rc, Rng& rng) {
    const auto& cfg = net.config();
    int64_t cells_per_frame = static_cast<int64_t>(cfg.hl()) * cfg.wl();
    int64_t c = cfg.latent_channels();
    int total = static_cast<int>(stream.size());
    std::vector<Tensor> finalized;  // one (cells_per_frame, c) tensor per frame

    for (int start = 0; start < total; start += rc.chunk_size) {
        int len = std::min(rc.chunk_size, total - start);
        int keep = std::min(rc.window, start);  // truncated attention prefix
        int first = start - keep;

        model::ConditioningBundle bundle;
        std::vector<io::ImageRGB> rgb_chunk;
        std::vector<io::ImageGray> op_chunk;
        for (int f = first; f < start + len; ++f) {
            const auto& fc = stream[static_cast<size_t>(f)];
            bundle.raymaps.push_back(fc.raymap);
            bundle.target_cameras.push_back(fc.camera);
            bundle.opacity.push_back(fc.opacity);
        }
        bundle.reference = refs;
        model::CondTokens cond = model::build_cond_tokens(cfg, bundle);
        for (int f = start; f < start + len; ++f) {
            rgb_chunk.push_back(stream[static_cast<size_t>(f)].degraded_rgb);
            op_chunk.push_back(stream[static_cast<size_t>(f)].opacity);
        }
        flow::LatentVideo z_deg = flow::encode(rgb_chunk, cfg.s, cfg.dtype);
        Tensor o_z = flow::opacity_downscale(op_chunk, cfg.s, cfg.dtype);
        Tensor z_cur = flow::opacity_mix(z_deg, o_z, rng);

        double h = 1.0 / rc.steps_per_chunk;
        for (int k = 0; k < rc.steps_per_chunk; ++k) {
            // Assemble [prefix | current] latents and per-frame times.
            Tensor z_full = Tensor::zeros({static_cast<int64_t>(keep + len) * cells_per_frame, c}, cfg.dtype);
            std::vector<double> t_frames;
            for (int p = 0; p < keep; ++p) {
                const Tensor& zf = finalized[static_cast<size_t>(first + p)];
                for (int64_t i = 0; i < cells_per_frame * c; ++i) {
                    z_full.set_flat(p * cells_per_frame * c + i, zf.flat(i));
                }
                t_frames.push_back(1.0);
            }
            for (int64_t i = 0; i < static_cast<int64_t>(len) * cells_per_frame * c; ++i) {
                z_full.set_flat(static_cast<int64_t>(keep) * cells_per_frame * c + i, z_cur.flat(i));
            }
            for (int f = 0; f < len; ++f) t_frames.push_back(k * h);

            Denoiser::ForwardArgs fa;
            fa.cond = &cond;
            fa.t_frames = t_frames;
            fa.mode = AttnMode::BlockCausal;
            fa.first_frame_index = first;
            Tensor v_full = net.forward_tensor(z_full, fa);
            for (int64_t i = 0; i < static_cast<int64_t>(len) * cells_per_frame * c; ++i) {
                double vi = v_full.flat(static_cast<int64_t>(keep) * cells_per_frame * c + i);
                z_cur.set_flat(i, z_cur.flat(i) + h * vi);
            }
        }
        for (int f = 0; f < len; ++f) {
            Tensor zf = Tensor::zeros({cells_per_frame, c}, cfg.dtype);
            for (int64_t i = 0; i < cells_per_frame * c; ++i) {
                zf.set_flat(i, z_cur.flat(static_cast<int64_t>(f) * cells_per_frame * c + i));
            }
            finalized.push_back(std::move(zf));
        }
    }
    Tensor out = Tensor::zeros({static_cast<int64_t>(total) * cells_per_frame, c}, cfg.dtype);
    for (int f = 0; f < total; ++f) {
        for (int64_t i = 0; i < cells_per_frame * c; ++i) {
            out.set_flat(static_cast<int64_t>(f) * cells_per_frame * c + i,
                         finalized[static_cast<size_t>(f)].flat(i));
        }
    }
    flow::LatentVideo lv;
    lv.frames = total;
    lv.height = cfg.image_height;
    lv.width = cfg.image_width;
    lv.s = cfg.s;
    lv.hl = cfg.hl();
    lv.wl = cfg.wl();
    lv.channels = cfg.latent_channels();
    return flow::with_data(lv, out);
}

// Windowed-attention recompute without any cache: every frame attends exactly
// the frames that were inside the rolling window when it was generated
// (band_start(f) = max(0, chunk_start(f) - w)), so one full pass per Euler
// step reproduces the cached rollout.
flow::LatentVideo banded_rollout_oracle(const Denoiser& net,
                                               const std::vector<causal::FrameConditioning>& stream,
                                               const causal::RolloutConfig& rc, Rng& rng) {
    const auto& cfg = net.config();
    int64_t cells_per_frame = static_cast<int64_t>(cfg.hl()) * cfg.wl();
    int64_t c = cfg.latent_channels();
    int tph = cfg.tokens_per_frame();
    int total = static_cast<int>(stream.size());
    auto band_start = [&](int f) { return std::max(0, (f / rc.chunk_size) * rc.chunk_size - rc.window); };

    Tensor out = Tensor::zeros({static_cast<int64_t>(total) * cells_per_frame, c}, cfg.dtype);
    std::vector<std::pair<io::ImageRGB, geo::CameraPose>> no_refs;
    for (int start = 0; start < total; start += rc.chunk_size) {
        int len = std::min(rc.chunk_size, total - start);
        int end = start + len;

        model::ConditioningBundle bundle;
        std::vector<io::ImageRGB> rgb_chunk;
        std::vector<io::ImageGray> op_chunk;
        for (int f = 0; f < end; ++f) {
            const auto& fc = stream[static_cast<size_t>(f)];
            bundle.raymaps.push_back(fc.raymap);
            bundle.target_cameras.push_back(fc.camera);
            bundle.opacity.push_back(fc.opacity);
        }
        model::CondTokens cond = model::build_cond_tokens(cfg, bundle);
        for (int f = start; f < end; ++f) {
            rgb_chunk.push_back(stream[static_cast<size_t>(f)].degraded_rgb);
            op_chunk.push_back(stream[static_cast<size_t>(f)].opacity);
        }
        flow::LatentVideo z_deg = flow::encode(rgb_chunk, cfg.s, cfg.dtype);
        Tensor o_z = flow::opacity_downscale(op_chunk, cfg.s, cfg.dtype);
        Tensor z_cur = flow::opacity_mix(z_deg, o_z, rng);

        // Banded self-attention bias over all frames processed so far.
        int64_t n_tok = static_cast<int64_t>(end) * tph;
        auto bias = std::make_shared<Tensor>(Tensor::zeros({n_tok, n_tok}, cfg.dtype));
        double ninf = -std::numeric_limits<double>::infinity();
        for (int64_t q = 0; q < n_tok; ++q) {
            int qf = static_cast<int>(q / tph);
            for (int64_t k = 0; k < n_tok; ++k) {
                int kf = static_cast<int>(k / tph);
                if (kf > qf || kf < band_start(qf)) bias->set_flat(q * n_tok + k, ninf);
            }
        }

        double h = 1.0 / rc.steps_per_chunk;
        for (int k = 0; k < rc.steps_per_chunk; ++k) {
            Tensor z_full = Tensor::zeros({n_tok / tph * cells_per_frame, c}, cfg.dtype);
            std::vector<double> t_frames;
            for (int f = 0; f < start; ++f) {
                for (int64_t i = 0; i < cells_per_frame * c; ++i) {
                    z_full.set_flat(static_cast<int64_t>(f) * cells_per_frame * c + i,
                                    out.flat(static_cast<int64_t>(f) * cells_per_frame * c + i));
                }
                t_frames.push_back(1.0);
            }
            for (int64_t i = 0; i < static_cast<int64_t>(len) * cells_per_frame * c; ++i) {
                z_full.set_flat(static_cast<int64_t>(start) * cells_per_frame * c + i, z_cur.flat(i));
            }
            for (int f = 0; f < len; ++f) t_frames.push_back(k * h);

            Denoiser::ForwardArgs fa;
            fa.cond = &cond;
            fa.t_frames = t_frames;
            fa.mode = AttnMode::BlockCausal;
            fa.self_bias_override = bias;
            Tensor v_full = net.forward_tensor(z_full, fa);
            for (int64_t i = 0; i < static_cast<int64_t>(len) * cells_per_frame * c; ++i) {
                double vi = v_full.flat(static_cast<int64_t>(start) * cells_per_frame * c + i);
                z_cur.set_flat(i, z_cur.flat(i) + h * vi);
            }
        }
        for (int64_t i = 0; i < static_cast<int64_t>(len) * cells_per_frame * c; ++i) {
            out.set_flat(static_cast<int64_t>(start) * cells_per_frame * c + i, z_cur.flat(i));
        }
    }
    flow::LatentVideo lv;
    lv.frames = total;
    lv.height = cfg.image_height;
    lv.width = cfg.image_width;
    lv.s = cfg.s;
    lv.hl = cfg.hl();
    lv.wl = cfg.wl();
    lv.channels = cfg.latent_channels();
    return flow::with_data(lv, out);
}

}  // namespace sfl::testing
