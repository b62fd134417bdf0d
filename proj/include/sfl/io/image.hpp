// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace sfl::io {

/// Row-major H x W x 3 float image, values nominally in [0, 1].
struct ImageRGB {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageRGB() = default;
    ImageRGB(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0) {}
    double* px(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const double* px(int y, int x) const { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
};

/// Row-major H x W float image.
struct ImageGray {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageGray() = default;
    ImageGray(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0.0) {}
    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    double mean() const;
};

/// 8-bit binary PPM (P6). Values clamped to [0,1] then quantized.
void write_ppm(const std::string& path, const ImageRGB& img);
ImageRGB read_ppm(const std::string& path);

/// Lossless 8-bit RGB PNG (stored-deflate zlib stream, no compression).
void write_png(const std::string& path, const ImageRGB& img);

}  // namespace sfl::io
