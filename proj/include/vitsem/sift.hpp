#pragma once

#include <vector>

#include "vitsem/image.hpp"

namespace vitsem {

struct SiftParams {
    int octaves = 0;                   // 0 = derive from image size, capped at 4
    int scales_per_octave = 3;         // s
    double base_sigma = 1.6;           // sigma0
    double assumed_input_blur = 0.5;   // blur already present in the input
    double contrast_threshold = 0.03;  // on [0,1] intensities
    double edge_ratio = 10.0;          // r_edge
    bool upsample_first_octave = false;
};

// s+3 Gaussian levels per octave, sigma schedule sigma0 * 2^(i/s). Octave o
// has dimensions ceil(base / 2^o). first_octave is -1 when the input was
// upsampled 2x, so base coordinates are always site * 2^octave.
struct ScaleSpace {
    int s = 3;
    double sigma0 = 1.6;
    int first_octave = 0;
    int base_width = 0;
    int base_height = 0;
    std::vector<std::vector<GrayImage>> octaves;
};

// s+2 difference images per octave, D_i = G_{i+1} - G_i.
struct DoGPyramid {
    int s = 3;
    double sigma0 = 1.6;
    int first_octave = 0;
    int base_width = 0;
    int base_height = 0;
    std::vector<std::vector<GrayImage>> octaves;
};

// Raw 26-neighbor extremum site; octave is the array index into the pyramid.
struct ExtremumSite {
    int octave = 0;
    int level = 0;
    int x = 0;
    int y = 0;
};

struct Keypoint {
    double x = 0.0;      // subpixel, original-image pixel units
    double y = 0.0;
    double sigma = 0.0;  // effective scale in original-image units
    int octave = 0;
    double response = 0.0;  // refined DoG value at the extremum
};

// Octave count rule: floor(log2(min(w,h) / 16)) clamped to [0, 4].
int derive_octave_count(int width, int height);

ScaleSpace build_scale_space(const GrayImage& img, const SiftParams& params = {});
DoGPyramid build_dog(const ScaleSpace& ss);
std::vector<ExtremumSite> detect_extrema(const DoGPyramid& dog);
std::vector<Keypoint> refine_and_filter(const std::vector<ExtremumSite>& sites,
                                        const DoGPyramid& dog, const SiftParams& params);

// Full pipeline; output sorted by (y, x, sigma).
std::vector<Keypoint> detect_keypoints(const GrayImage& img, const SiftParams& params = {});

namespace sift_detail {
// Principal-curvature ratio test on the 2-D spatial Hessian. Returns false
// (reject) when det <= 0 or trace^2/det >= (r+1)^2/r.
bool passes_edge_test(double dxx, double dyy, double dxy, double edge_ratio);
}  // namespace sift_detail

}  // namespace vitsem
