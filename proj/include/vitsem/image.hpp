#pragma once

#include <cstddef>
#include <vector>

namespace vitsem {

// Row-major single-channel raster with values in [0,1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
};

// Row-major interleaved RGB raster with values in [0,1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // 3 floats per pixel, R G B

    RgbImage() = default;
    RgbImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

    const float* pixel(int x, int y) const {
        return data.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
    float* pixel(int x, int y) {
        return data.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
};

// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
GrayImage to_grayscale(const RgbImage& img);

// Separable Gaussian, normalized taps of radius ceil(4*sigma), borders
// clamped to the edge pixel. Throws ConfigError when sigma <= 0.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// Returns the normalized 1-D taps used by gaussian_blur (exposed so tests can
// drive a dense 2-D oracle with the identical kernel).
std::vector<float> gaussian_taps(double sigma);

// Bilinear resample with half-pixel center alignment:
//   src = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped to the raster.
// Throws ConfigError when a target dimension is < 1.
GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h);
RgbImage resize_bilinear(const RgbImage& img, int new_w, int new_h);

// Crops the largest centered square (used before resizing to model input).
RgbImage center_crop_square(const RgbImage& img);

}  // namespace vitsem
