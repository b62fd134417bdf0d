// SPDX-License-Identifier: Apache-2.0

#include "sfl/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace sfl::metrics {

namespace {

void require_same_shape(const io::ImageRGB& a, const io::ImageRGB& b, const char* who) {
    if (a.height != b.height || a.width != b.width) {
        throw std::invalid_argument(std::string(who) + ": image extents differ (" + std::to_string(a.height) +
                                    "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width) + ")");
    }
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double psnr(const io::ImageRGB& a, const io::ImageRGB& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const io::ImageRGB& a, const io::ImageRGB& b) {
    require_same_shape(a, b, "ssim");
    constexpr int kWin = 8;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    if (a.height < kWin || a.width < kWin) {
        throw std::invalid_argument("ssim: images smaller than the 8x8 window");
    }
    double acc = 0.0;
    int64_t count = 0;
    const double inv_n = 1.0 / (kWin * kWin);
    for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y + kWin <= a.height; ++y) {
            for (int x = 0; x + kWin <= a.width; ++x) {
                double mx = 0, my = 0;
                for (int dy = 0; dy < kWin; ++dy) {
                    for (int dx = 0; dx < kWin; ++dx) {
                        mx += a.px(y + dy, x + dx)[ch];
                        my += b.px(y + dy, x + dx)[ch];
                    }
                }
                mx *= inv_n;
                my *= inv_n;
                double vx = 0, vy = 0, cov = 0;
                for (int dy = 0; dy < kWin; ++dy) {
                    for (int dx = 0; dx < kWin; ++dx) {
                        double ax = a.px(y + dy, x + dx)[ch] - mx;
                        double by = b.px(y + dy, x + dx)[ch] - my;
                        vx += ax * ax;
                        vy += by * by;
                        cov += ax * by;
                    }
                }
                vx *= inv_n;
                vy *= inv_n;
                cov *= inv_n;
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

MetricReport compute_report(const std::vector<io::ImageRGB>& generated, const std::vector<io::ImageRGB>& truth,
                            const std::string& config_hash, uint64_t seed) {
    if (generated.size() != truth.size()) {
        throw std::invalid_argument("compute_report: frame counts differ (" + std::to_string(generated.size()) +
                                    " generated vs " + std::to_string(truth.size()) + " ground truth)");
    }
    if (generated.empty()) throw std::invalid_argument("compute_report: no frames");
    MetricReport r;
    r.config_hash = config_hash;
    r.seed = seed;
    for (size_t f = 0; f < generated.size(); ++f) {
        r.psnr_db.push_back(psnr(generated[f], truth[f]));
        r.ssim_v.push_back(ssim(generated[f], truth[f]));
    }
    double ps = 0, ss = 0;
    for (size_t f = 0; f < r.psnr_db.size(); ++f) {
        ps += r.psnr_db[f];
        ss += r.ssim_v[f];
    }
    r.mean_psnr = ps / static_cast<double>(r.psnr_db.size());
    r.mean_ssim = ss / static_cast<double>(r.ssim_v.size());
    return r;
}

std::string report_to_csv(const MetricReport& r) {
    std::string out = "frame_index,psnr_db,ssim\n";
    for (size_t f = 0; f < r.psnr_db.size(); ++f) {
        out += std::to_string(f) + "," + format_value(r.psnr_db[f]) + "," + format_value(r.ssim_v[f]) + "\n";
    }
    out += "mean," + format_value(r.mean_psnr) + "," + format_value(r.mean_ssim) + "\n";
    return out;
}

void write_report(const std::string& out_dir, const std::string& name, const MetricReport& r) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir + "/" + name + ".csv", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_report: cannot open " + out_dir + "/" + name + ".csv");
    os << report_to_csv(r);
}

io::ImageRGB side_by_side(const std::vector<io::ImageRGB>& truth, const std::vector<io::ImageRGB>& generated) {
    if (truth.empty() || truth.size() != generated.size()) {
        throw std::invalid_argument("side_by_side: need matched non-empty frame sets");
    }
    int h = truth[0].height, w = truth[0].width;
    const int gap = 2;
    io::ImageRGB grid(static_cast<int>(truth.size()) * (h + gap) - gap, 2 * w + gap);
    for (size_t f = 0; f < truth.size(); ++f) {
        int oy = static_cast<int>(f) * (h + gap);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    grid.px(oy + y, x)[c] = truth[f].px(y, x)[c];
                    grid.px(oy + y, w + gap + x)[c] = generated[f].px(y, x)[c];
                }
            }
        }
    }
    return grid;
}

}  // namespace sfl::metrics
