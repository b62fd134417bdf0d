// SPDX-License-Identifier: Apache-2.0

#include "sfl/flow/latent.hpp"

#include <stdexcept>

namespace sfl::flow {

using num::DType;
using num::Tensor;

LatentVideo encode(const std::vector<io::ImageRGB>& frames, int s, DType dt) {
    if (frames.empty()) throw std::invalid_argument("encode: need at least one frame");
    if (s < 1) throw std::invalid_argument("encode: spatial factor must be positive");
    int h = frames[0].height, w = frames[0].width;
    for (const auto& f : frames) {
        if (f.height != h || f.width != w) throw std::invalid_argument("encode: frames disagree in extents");
    }
    LatentVideo z;
    z.frames = static_cast<int>(frames.size());
    z.height = h;
    z.width = w;
    z.s = s;
    z.hl = (h + s - 1) / s;
    z.wl = (w + s - 1) / s;
    z.channels = 3 * s * s;
    z.data = Tensor::zeros({z.cells(), z.channels}, dt);
    for (int f = 0; f < z.frames; ++f) {
        const auto& img = frames[static_cast<size_t>(f)];
        for (int cy = 0; cy < z.hl; ++cy) {
            for (int cx = 0; cx < z.wl; ++cx) {
                int64_t row = (static_cast<int64_t>(f) * z.hl + cy) * z.wl + cx;
                for (int py = 0; py < s; ++py) {
                    for (int px = 0; px < s; ++px) {
                        int y = cy * s + py, x = cx * s + px;
                        if (y >= h || x >= w) continue;  // zero padding
                        const double* p = img.px(y, x);
                        int64_t ch = (static_cast<int64_t>(py) * s + px) * 3;
                        z.data.set_flat(row * z.channels + ch + 0, p[0]);
                        z.data.set_flat(row * z.channels + ch + 1, p[1]);
                        z.data.set_flat(row * z.channels + ch + 2, p[2]);
                    }
                }
            }
        }
    }
    return z;
}

std::vector<io::ImageRGB> decode(const LatentVideo& z) {
    if (z.data.numel() != z.cells() * z.channels) {
        throw std::invalid_argument("decode: latent payload does not match its geometry");
    }
    std::vector<io::ImageRGB> frames;
    frames.reserve(static_cast<size_t>(z.frames));
    for (int f = 0; f < z.frames; ++f) {
        io::ImageRGB img(z.height, z.width);
        for (int cy = 0; cy < z.hl; ++cy) {
            for (int cx = 0; cx < z.wl; ++cx) {
                int64_t row = (static_cast<int64_t>(f) * z.hl + cy) * z.wl + cx;
                for (int py = 0; py < z.s; ++py) {
                    for (int px = 0; px < z.s; ++px) {
                        int y = cy * z.s + py, x = cx * z.s + px;
                        if (y >= z.height || x >= z.width) continue;
                        int64_t ch = (static_cast<int64_t>(py) * z.s + px) * 3;
                        double* p = img.px(y, x);
                        p[0] = z.data.flat(row * z.channels + ch + 0);
                        p[1] = z.data.flat(row * z.channels + ch + 1);
                        p[2] = z.data.flat(row * z.channels + ch + 2);
                    }
                }
            }
        }
        frames.push_back(std::move(img));
    }
    return frames;
}

LatentVideo with_data(const LatentVideo& like, Tensor data) {
    if (data.numel() != like.cells() * like.channels) {
        throw std::invalid_argument("with_data: payload shape mismatch");
    }
    LatentVideo out = like;
    out.data = data.reshaped({like.cells(), like.channels});
    return out;
}

Tensor opacity_downscale(const std::vector<io::ImageGray>& opacity, int s, DType dt) {
    if (opacity.empty()) throw std::invalid_argument("opacity_downscale: need at least one map");
    int h = opacity[0].height, w = opacity[0].width;
    int hl = (h + s - 1) / s, wl = (w + s - 1) / s;
    int64_t frames = static_cast<int64_t>(opacity.size());
    Tensor out = Tensor::zeros({frames * hl * wl}, dt);
    for (int64_t f = 0; f < frames; ++f) {
        const auto& o = opacity[static_cast<size_t>(f)];
        if (o.height != h || o.width != w) throw std::invalid_argument("opacity_downscale: extents disagree");
        for (int cy = 0; cy < hl; ++cy) {
            for (int cx = 0; cx < wl; ++cx) {
                double best = 0.0;  // padding cells contribute zero
                for (int py = 0; py < s; ++py) {
                    for (int px = 0; px < s; ++px) {
                        int y = cy * s + py, x = cx * s + px;
                        if (y >= h || x >= w) continue;
                        best = std::max(best, o.at(y, x));
                    }
                }
                out.set_flat((f * hl + cy) * wl + cx, best);
            }
        }
    }
    return out;
}

Tensor opacity_mix(const LatentVideo& z_deg, const Tensor& o_z, num::Rng& rng) {
    if (o_z.numel() != z_deg.cells()) {
        throw std::invalid_argument("opacity_mix: opacity latent has " + std::to_string(o_z.numel()) +
                                    " cells, latent video has " + std::to_string(z_deg.cells()));
    }
    Tensor eps = num::randn(rng, {z_deg.cells(), z_deg.channels}, z_deg.data.dtype());
    Tensor out = Tensor::zeros({z_deg.cells(), z_deg.channels}, z_deg.data.dtype());
    int64_t c = z_deg.channels;
    for (int64_t r = 0; r < z_deg.cells(); ++r) {
        double o = o_z.flat(r);
        for (int64_t ch = 0; ch < c; ++ch) {
            double zd = z_deg.data.flat(r * c + ch);
            double e = eps.flat(r * c + ch);
            out.set_flat(r * c + ch, o * zd + (1.0 - o) * e);
        }
    }
    return out;
}

}  // namespace sfl::flow
