// SPDX-License-Identifier: Apache-2.0

#include "sfl/model/cond.hpp"

#include <stdexcept>

#include "sfl/flow/latent.hpp"

namespace sfl::model {

using num::Tensor;

namespace {

// Gathers one (1,2,2) patch worth of space-to-depth cells from a per-pixel
// map with ch channels into a row of the token matrix.
void fill_token_row(const DenoiserConfig& cfg, int ch, const double* map, int h, int w, int tr, int tc,
                    Tensor& out, int64_t row) {
    int s = cfg.s;
    int64_t col = 0;
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            int cy = tr * 2 + dy, cx = tc * 2 + dx;  // latent cell
            for (int py = 0; py < s; ++py) {
                for (int px = 0; px < s; ++px) {
                    int y = cy * s + py, x = cx * s + px;
                    for (int c = 0; c < ch; ++c) {
                        double v = (y < h && x < w) ? map[(static_cast<int64_t>(y) * w + x) * ch + c] : 0.0;
                        out.set_flat(row * out.dim(1) + col, v);
                        ++col;
                    }
                }
            }
        }
    }
}

}  // namespace

CondTokens build_cond_tokens(const DenoiserConfig& cfg, const ConditioningBundle& bundle) {
    int frames = static_cast<int>(bundle.raymaps.size());
    if (frames == 0) throw std::invalid_argument("build_cond_tokens: no frames");
    if (bundle.opacity.size() != static_cast<size_t>(frames) ||
        bundle.target_cameras.size() != static_cast<size_t>(frames)) {
        throw std::invalid_argument("build_cond_tokens: raymap, opacity and camera counts must match");
    }
    if (static_cast<int>(bundle.reference.size()) > cfg.ref_capacity) {
        throw std::invalid_argument("build_cond_tokens: reference count exceeds ref_capacity");
    }
    for (const auto& rm : bundle.raymaps) {
        if (rm.height != cfg.image_height || rm.width != cfg.image_width) {
            throw std::invalid_argument("build_cond_tokens: raymap extents do not match the config");
        }
    }
    for (const auto& o : bundle.opacity) {
        if (o.height != cfg.image_height || o.width != cfg.image_width) {
            throw std::invalid_argument("build_cond_tokens: opacity extents do not match the config");
        }
    }

    int tph = cfg.tokens_per_frame();
    int rows_per_frame = cfg.hl() / 2, cols_per_frame = cfg.wl() / 2;
    CondTokens ct;
    ct.frames = frames;
    ct.n_ref = static_cast<int>(bundle.reference.size());
    ct.ray_tokens = Tensor::zeros({static_cast<int64_t>(frames) * tph, cfg.ray_token_dim()}, cfg.dtype);
    ct.opacity_tokens = Tensor::zeros({static_cast<int64_t>(frames) * tph, cfg.opacity_token_dim()}, cfg.dtype);

    for (int f = 0; f < frames; ++f) {
        for (int tr = 0; tr < rows_per_frame; ++tr) {
            for (int tc = 0; tc < cols_per_frame; ++tc) {
                int64_t row = (static_cast<int64_t>(f) * rows_per_frame + tr) * cols_per_frame + tc;
                fill_token_row(cfg, 6, bundle.raymaps[static_cast<size_t>(f)].data.data(), cfg.image_height,
                               cfg.image_width, tr, tc, ct.ray_tokens, row);
                fill_token_row(cfg, 1, bundle.opacity[static_cast<size_t>(f)].data.data(), cfg.image_height,
                               cfg.image_width, tr, tc, ct.opacity_tokens, row);
            }
        }
    }

    if (ct.n_ref > 0) {
        ct.ref_patches = Tensor::zeros({static_cast<int64_t>(ct.n_ref) * tph, cfg.patch_dim()}, cfg.dtype);
        for (int r = 0; r < ct.n_ref; ++r) {
            const auto& img = bundle.reference[static_cast<size_t>(r)].first;
            if (img.height != cfg.image_height || img.width != cfg.image_width) {
                throw std::invalid_argument("build_cond_tokens: reference extents do not match the config");
            }
            for (int tr = 0; tr < rows_per_frame; ++tr) {
                for (int tc = 0; tc < cols_per_frame; ++tc) {
                    int64_t row = (static_cast<int64_t>(r) * rows_per_frame + tr) * cols_per_frame + tc;
                    fill_token_row(cfg, 3, img.data.data(), cfg.image_height, cfg.image_width, tr, tc,
                                   ct.ref_patches, row);
                }
            }
        }
        // Relative pose of each (target frame, reference) pair:
        // ref-from-target rotation (9) + translation (3) + focal ratios (2).
        ct.rel_pose = Tensor::zeros({frames, ct.n_ref, 14}, cfg.dtype);
        for (int f = 0; f < frames; ++f) {
            const auto& tgt = bundle.target_cameras[static_cast<size_t>(f)];
            for (int r = 0; r < ct.n_ref; ++r) {
                const auto& ref = bundle.reference[static_cast<size_t>(r)].second;
                geo::Mat3 rel_r = geo::mat_mul(geo::mat_transpose(ref.R), tgt.R);
                geo::Vec3 rel_t = geo::mat_vec(geo::mat_transpose(ref.R), geo::sub(tgt.t, ref.t));
                int64_t base = (static_cast<int64_t>(f) * ct.n_ref + r) * 14;
                for (int i = 0; i < 9; ++i) ct.rel_pose.set_flat(base + i, rel_r[static_cast<size_t>(i)]);
                for (int i = 0; i < 3; ++i) ct.rel_pose.set_flat(base + 9 + i, rel_t[static_cast<size_t>(i)]);
                ct.rel_pose.set_flat(base + 12, ref.fx / tgt.fx);
                ct.rel_pose.set_flat(base + 13, ref.fy / tgt.fy);
            }
        }
    }
    return ct;
}

int frame_dropout(FrameBatch& batch, num::Rng& rng) {
    size_t n = batch.degraded_rgb.size();
    if (batch.opacity.size() != n || batch.raymaps.size() != n) {
        throw std::invalid_argument("frame_dropout: field counts disagree");
    }
    int k = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(n) + 1));
    for (size_t f = n - static_cast<size_t>(k); f < n; ++f) {
        std::fill(batch.degraded_rgb[f].data.begin(), batch.degraded_rgb[f].data.end(), 0.0);
        std::fill(batch.opacity[f].data.begin(), batch.opacity[f].data.end(), 0.0);
    }
    return k;
}

}  // namespace sfl::model
