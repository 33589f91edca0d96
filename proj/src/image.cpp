#include "vitsem/image.hpp"

#include <algorithm>
#include <cmath>

#include "vitsem/errors.hpp"
#include "vitsem/kernels.hpp"

namespace vitsem {

// ============================================================================
// Grayscale conversion
// ============================================================================

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    const size_t n = out.size();
    for (size_t i = 0; i < n; ++i) {
        const float* p = img.data.data() + i * 3;
        out.data[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
    return out;
}

// ============================================================================
// Gaussian blur
// ============================================================================

std::vector<float> gaussian_taps(double sigma) {
    if (!(sigma > 0.0)) {
        throw ConfigError("gaussian_taps: sigma must be positive");
    }
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> raw(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-(static_cast<double>(k) * k) / (2.0 * sigma * sigma));
        raw[k + radius] = v;
        total += v;
    }
    std::vector<float> taps(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        taps[i] = static_cast<float>(raw[i] / total);
    }
    return taps;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const std::vector<float> taps = gaussian_taps(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    const int w = img.width;
    const int h = img.height;

    // Horizontal pass, one clamped 1-D convolution per row.
    GrayImage tmp(w, h);
    for (int y = 0; y < h; ++y) {
        kernels::conv1d_same_clamp(img.data.data() + static_cast<size_t>(y) * w, w,
                                   taps.data(), radius, tmp.data.data() + static_cast<size_t>(y) * w);
    }

    // Vertical pass: each output row is a tap-weighted sum of clamped input
    // rows, accumulated with axpy so whole rows stream through the kernel.
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        float* dst = out.data.data() + static_cast<size_t>(y) * w;
        for (int k = -radius; k <= radius; ++k) {
            int sy = y + k;
            if (sy < 0) sy = 0;
            if (sy >= h) sy = h - 1;
            kernels::axpy(taps[k + radius], tmp.data.data() + static_cast<size_t>(sy) * w, dst,
                          static_cast<size_t>(w));
        }
    }
    return out;
}

// ============================================================================
// Bilinear resize
// ============================================================================

namespace {

struct SampleAxis {
    int i0;
    int i1;
    float frac;
};

SampleAxis axis_sample(int dst, int dst_size, int src_size) {
    const double scale = static_cast<double>(src_size) / dst_size;
    double pos = (dst + 0.5) * scale - 0.5;
    if (pos < 0.0) pos = 0.0;
    const double last = src_size - 1;
    if (pos > last) pos = last;
    const int i0 = static_cast<int>(pos);
    const int i1 = std::min(i0 + 1, src_size - 1);
    return {i0, i1, static_cast<float>(pos - i0)};
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) {
        throw ConfigError("resize_bilinear: target dimensions must be >= 1");
    }
    GrayImage out(new_w, new_h);
    for (int y = 0; y < new_h; ++y) {
        const SampleAxis sy = axis_sample(y, new_h, img.height);
        for (int x = 0; x < new_w; ++x) {
            const SampleAxis sx = axis_sample(x, new_w, img.width);
            const float top = img.at(sx.i0, sy.i0) * (1.0f - sx.frac) + img.at(sx.i1, sy.i0) * sx.frac;
            const float bot = img.at(sx.i0, sy.i1) * (1.0f - sx.frac) + img.at(sx.i1, sy.i1) * sx.frac;
            out.at(x, y) = top * (1.0f - sy.frac) + bot * sy.frac;
        }
    }
    return out;
}

RgbImage resize_bilinear(const RgbImage& img, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) {
        throw ConfigError("resize_bilinear: target dimensions must be >= 1");
    }
    RgbImage out(new_w, new_h);
    for (int y = 0; y < new_h; ++y) {
        const SampleAxis sy = axis_sample(y, new_h, img.height);
        for (int x = 0; x < new_w; ++x) {
            const SampleAxis sx = axis_sample(x, new_w, img.width);
            const float* p00 = img.pixel(sx.i0, sy.i0);
            const float* p10 = img.pixel(sx.i1, sy.i0);
            const float* p01 = img.pixel(sx.i0, sy.i1);
            const float* p11 = img.pixel(sx.i1, sy.i1);
            float* dst = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const float top = p00[c] * (1.0f - sx.frac) + p10[c] * sx.frac;
                const float bot = p01[c] * (1.0f - sx.frac) + p11[c] * sx.frac;
                dst[c] = top * (1.0f - sy.frac) + bot * sy.frac;
            }
        }
    }
    return out;
}

RgbImage center_crop_square(const RgbImage& img) {
    const int side = std::min(img.width, img.height);
    const int x0 = (img.width - side) / 2;
    const int y0 = (img.height - side) / 2;
    if (x0 == 0 && y0 == 0 && img.width == img.height) return img;
    RgbImage out(side, side);
    for (int y = 0; y < side; ++y) {
        const float* src = img.pixel(x0, y0 + y);
        float* dst = out.pixel(0, y);
        std::copy(src, src + static_cast<size_t>(side) * 3, dst);
    }
    return out;
}

}  // namespace vitsem
