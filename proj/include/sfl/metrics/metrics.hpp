// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sfl/io/image.hpp"

namespace sfl::metrics {

/// Peak signal-to-noise ratio in dB at unit dynamic range;
/// identical images return +infinity.
double psnr(const io::ImageRGB& a, const io::ImageRGB& b);

/// Mean local SSIM over all valid 8x8 uniform windows (stride 1), standard
/// constants C1 = 0.01^2, C2 = 0.03^2, computed per channel and averaged.
/// Rejects images smaller than the window.
double ssim(const io::ImageRGB& a, const io::ImageRGB& b);

struct MetricReport {
    std::vector<double> psnr_db;
    std::vector<double> ssim_v;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::string config_hash;
    uint64_t seed = 0;
};

MetricReport compute_report(const std::vector<io::ImageRGB>& generated, const std::vector<io::ImageRGB>& truth,
                            const std::string& config_hash, uint64_t seed);

/// CSV rows "frame_index,psnr_db,ssim", UTF-8, LF line endings, deterministic
/// formatting (6 decimals, "inf" for the sentinel).
std::string report_to_csv(const MetricReport& r);
void write_report(const std::string& out_dir, const std::string& name, const MetricReport& r);

/// Side-by-side grid: one row per frame, ground truth left, generated right.
io::ImageRGB side_by_side(const std::vector<io::ImageRGB>& truth, const std::vector<io::ImageRGB>& generated);

}  // namespace sfl::metrics
