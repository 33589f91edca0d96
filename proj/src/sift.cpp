#include "vitsem/sift.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "vitsem/errors.hpp"
#include "vitsem/kernels.hpp"

namespace vitsem {

namespace {

void validate(const SiftParams& p) {
    if (p.scales_per_octave < 1) {
        throw ConfigError("sift: scales_per_octave must be >= 1");
    }
    const double assumed = p.upsample_first_octave ? 2.0 * p.assumed_input_blur
                                                   : p.assumed_input_blur;
    if (!(p.base_sigma > assumed)) {
        throw ConfigError("sift: base_sigma must exceed the assumed input blur");
    }
    if (!(p.contrast_threshold > 0.0)) {
        throw ConfigError("sift: contrast_threshold must be positive");
    }
    if (!(p.edge_ratio > 1.0)) {
        throw ConfigError("sift: edge_ratio must exceed 1");
    }
}

}  // namespace

int derive_octave_count(int width, int height) {
    const int min_dim = std::min(width, height);
    if (min_dim < 16) return 0;
    int count = 0;
    // floor(log2(min_dim / 16)) without rounding through floating point.
    for (int dim = min_dim / 16; dim > 1; dim /= 2) ++count;
    return std::min(count, 4);
}

// ============================================================================
// Scale space and DoG
// ============================================================================

ScaleSpace build_scale_space(const GrayImage& img, const SiftParams& params) {
    validate(params);

    GrayImage base = img;
    double assumed = params.assumed_input_blur;
    int first_octave = 0;
    if (params.upsample_first_octave) {
        base = resize_bilinear(base, img.width * 2, img.height * 2);
        assumed *= 2.0;  // pixel units doubled
        first_octave = -1;
    }

    int num_octaves = params.octaves > 0 ? std::min(params.octaves, 4)
                                         : derive_octave_count(base.width, base.height);

    ScaleSpace ss;
    ss.s = params.scales_per_octave;
    ss.sigma0 = params.base_sigma;
    ss.first_octave = first_octave;
    ss.base_width = img.width;
    ss.base_height = img.height;

    const int s = ss.s;
    const double sigma0 = ss.sigma0;
    GrayImage seed = std::move(base);
    for (int o = 0; o < num_octaves; ++o) {
        if (std::min(seed.width, seed.height) < 4) break;
        std::vector<GrayImage> levels;
        levels.reserve(s + 3);

        // Level 0 has absolute blur sigma0; the seed carries `assumed` (the
        // input blur for octave 0, exactly sigma0 afterwards by construction).
        const double seed_blur = o == 0 ? assumed : sigma0;
        if (sigma0 > seed_blur) {
            levels.push_back(gaussian_blur(seed, std::sqrt(sigma0 * sigma0 - seed_blur * seed_blur)));
        } else {
            levels.push_back(seed);
        }
        for (int i = 1; i < s + 3; ++i) {
            const double prev = sigma0 * std::pow(2.0, static_cast<double>(i - 1) / s);
            const double curr = sigma0 * std::pow(2.0, static_cast<double>(i) / s);
            levels.push_back(gaussian_blur(levels.back(), std::sqrt(curr * curr - prev * prev)));
        }

        // Next octave: 2x downsample of the level with absolute blur 2*sigma0
        // (index s), which halves back to sigma0 at the new sampling rate.
        if (o + 1 < num_octaves) {
            const GrayImage& src = levels[s];
            seed = resize_bilinear(src, (src.width + 1) / 2, (src.height + 1) / 2);
        }
        ss.octaves.push_back(std::move(levels));
    }
    return ss;
}

DoGPyramid build_dog(const ScaleSpace& ss) {
    DoGPyramid dog;
    dog.s = ss.s;
    dog.sigma0 = ss.sigma0;
    dog.first_octave = ss.first_octave;
    dog.base_width = ss.base_width;
    dog.base_height = ss.base_height;
    dog.octaves.reserve(ss.octaves.size());
    for (const auto& levels : ss.octaves) {
        std::vector<GrayImage> diffs;
        diffs.reserve(levels.size() - 1);
        for (size_t i = 0; i + 1 < levels.size(); ++i) {
            GrayImage d(levels[i].width, levels[i].height);
            kernels::sub(levels[i + 1].data.data(), levels[i].data.data(), d.data.data(),
                         d.size());
            diffs.push_back(std::move(d));
        }
        dog.octaves.push_back(std::move(diffs));
    }
    return dog;
}

// ============================================================================
// Extrema detection
// ============================================================================

std::vector<ExtremumSite> detect_extrema(const DoGPyramid& dog) {
    std::vector<ExtremumSite> sites;
    for (size_t o = 0; o < dog.octaves.size(); ++o) {
        const auto& levels = dog.octaves[o];
        if (levels.size() < 3) continue;
        const int w = levels[0].width;
        const int h = levels[0].height;
        if (w < 3 || h < 3) continue;
        for (size_t i = 1; i + 1 < levels.size(); ++i) {
            const GrayImage& below = levels[i - 1];
            const GrayImage& mid = levels[i];
            const GrayImage& above = levels[i + 1];
            for (int y = 1; y < h - 1; ++y) {
                for (int x = 1; x < w - 1; ++x) {
                    const float v = mid.at(x, y);
                    bool is_max = true;
                    bool is_min = true;
                    for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int nx = x + dx;
                            const int ny = y + dy;
                            const float b = below.at(nx, ny);
                            const float a = above.at(nx, ny);
                            if (v <= b || v <= a) is_max = false;
                            if (v >= b || v >= a) is_min = false;
                            if (dx != 0 || dy != 0) {
                                const float m = mid.at(nx, ny);
                                if (v <= m) is_max = false;
                                if (v >= m) is_min = false;
                            }
                        }
                    }
                    if (is_max || is_min) {
                        sites.push_back({static_cast<int>(o), static_cast<int>(i), x, y});
                    }
                }
            }
        }
    }
    return sites;
}

// ============================================================================
// Refinement and filtering
// ============================================================================

namespace sift_detail {

bool passes_edge_test(double dxx, double dyy, double dxy, double edge_ratio) {
    const double tr = dxx + dyy;
    const double det = dxx * dyy - dxy * dxy;
    if (det <= 0.0) return false;
    const double r = edge_ratio;
    // reject when tr^2 / det >= (r+1)^2 / r, compared without the division
    return tr * tr * r < det * (r + 1.0) * (r + 1.0);
}

}  // namespace sift_detail

namespace {

struct Fit {
    double gx, gy, gs;             // gradient
    double ox, oy, os;             // offset solving H * offset = -g
    double dxx, dyy, dxy;          // spatial Hessian entries (for the edge test)
    bool solvable;
};

Fit fit_quadratic(const std::vector<GrayImage>& levels, int i, int x, int y) {
    const GrayImage& b = levels[i - 1];
    const GrayImage& m = levels[i];
    const GrayImage& a = levels[i + 1];
    auto B = [&](int dx, int dy) { return static_cast<double>(b.at(x + dx, y + dy)); };
    auto M = [&](int dx, int dy) { return static_cast<double>(m.at(x + dx, y + dy)); };
    auto A = [&](int dx, int dy) { return static_cast<double>(a.at(x + dx, y + dy)); };

    Fit f{};
    f.gx = 0.5 * (M(1, 0) - M(-1, 0));
    f.gy = 0.5 * (M(0, 1) - M(0, -1));
    f.gs = 0.5 * (A(0, 0) - B(0, 0));

    const double v = M(0, 0);
    f.dxx = M(1, 0) + M(-1, 0) - 2.0 * v;
    f.dyy = M(0, 1) + M(0, -1) - 2.0 * v;
    const double dss = A(0, 0) + B(0, 0) - 2.0 * v;
    f.dxy = 0.25 * (M(1, 1) - M(1, -1) - M(-1, 1) + M(-1, -1));
    const double dxs = 0.25 * (A(1, 0) - A(-1, 0) - B(1, 0) + B(-1, 0));
    const double dys = 0.25 * (A(0, 1) - A(0, -1) - B(0, 1) + B(0, -1));

    // Solve [dxx dxy dxs; dxy dyy dys; dxs dys dss] * o = -g via the adjugate.
    const double det = f.dxx * (f.dyy * dss - dys * dys) - f.dxy * (f.dxy * dss - dys * dxs) +
                       dxs * (f.dxy * dys - f.dyy * dxs);
    if (std::abs(det) < 1e-20) {
        f.solvable = false;
        return f;
    }
    const double inv = 1.0 / det;
    const double i00 = (f.dyy * dss - dys * dys) * inv;
    const double i01 = (dxs * dys - f.dxy * dss) * inv;
    const double i02 = (f.dxy * dys - dxs * f.dyy) * inv;
    const double i11 = (f.dxx * dss - dxs * dxs) * inv;
    const double i12 = (f.dxy * dxs - f.dxx * dys) * inv;
    const double i22 = (f.dxx * f.dyy - f.dxy * f.dxy) * inv;
    f.ox = -(i00 * f.gx + i01 * f.gy + i02 * f.gs);
    f.oy = -(i01 * f.gx + i11 * f.gy + i12 * f.gs);
    f.os = -(i02 * f.gx + i12 * f.gy + i22 * f.gs);
    f.solvable = true;
    return f;
}

}  // namespace

std::vector<Keypoint> refine_and_filter(const std::vector<ExtremumSite>& sites,
                                        const DoGPyramid& dog, const SiftParams& params) {
    validate(params);
    const int s = dog.s;
    std::vector<Keypoint> keypoints;
    keypoints.reserve(sites.size());

    for (const ExtremumSite& site : sites) {
        const auto& levels = dog.octaves[site.octave];
        const int w = levels[0].width;
        const int h = levels[0].height;
        int x = site.x;
        int y = site.y;
        int i = site.level;

        Fit fit{};
        bool converged = false;
        for (int shifts = 0; shifts <= 5; ++shifts) {
            fit = fit_quadratic(levels, i, x, y);
            if (!fit.solvable) break;
            if (std::abs(fit.ox) <= 0.5 && std::abs(fit.oy) <= 0.5 && std::abs(fit.os) <= 0.5) {
                converged = true;
                break;
            }
            if (shifts == 5) break;
            x += (fit.ox > 0.5) - (fit.ox < -0.5);
            y += (fit.oy > 0.5) - (fit.oy < -0.5);
            i += (fit.os > 0.5) - (fit.os < -0.5);
            if (x < 1 || x > w - 2 || y < 1 || y > h - 2 || i < 1 ||
                i > static_cast<int>(levels.size()) - 2) {
                break;
            }
        }
        if (!converged) continue;

        const double value = static_cast<double>(levels[i].at(x, y)) +
                             0.5 * (fit.gx * fit.ox + fit.gy * fit.oy + fit.gs * fit.os);
        if (std::abs(value) < params.contrast_threshold) continue;
        if (!sift_detail::passes_edge_test(fit.dxx, fit.dyy, fit.dxy, params.edge_ratio)) {
            continue;
        }

        const double scale = std::ldexp(1.0, dog.first_octave + site.octave);
        Keypoint kp;
        kp.x = (x + fit.ox) * scale;
        kp.y = (y + fit.oy) * scale;
        kp.sigma = dog.sigma0 * std::pow(2.0, (i + fit.os) / s) * scale;
        kp.octave = dog.first_octave + site.octave;
        kp.response = value;
        if (kp.x < 0.0 || kp.x >= dog.base_width || kp.y < 0.0 || kp.y >= dog.base_height) {
            continue;
        }
        keypoints.push_back(kp);
    }
    return keypoints;
}

std::vector<Keypoint> detect_keypoints(const GrayImage& img, const SiftParams& params) {
    const ScaleSpace ss = build_scale_space(img, params);
    const DoGPyramid dog = build_dog(ss);
    const std::vector<ExtremumSite> sites = detect_extrema(dog);
    std::vector<Keypoint> kps = refine_and_filter(sites, dog, params);
    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        return std::tie(a.y, a.x, a.sigma, a.octave, a.response) <
               std::tie(b.y, b.x, b.sigma, b.octave, b.response);
    });
    return kps;
}

}  // namespace vitsem
