#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "test_support.hpp"
#include "vitsem/errors.hpp"
#include "vitsem/sift.hpp"

using namespace vitsem;

namespace {

GrayImage random_gray(int w, int h, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    GrayImage img(w, h);
    for (auto& v : img.data) v = u(rng);
    return img;
}

// Synthetic one-octave DoG pyramid around a separable quadratic bump:
//   D1(x, y) = amp * (peak - c*((x-x0)^2 + (y-y0)^2))
// with flat scale neighbors D0 = D1 + lo_off, D2 = D1 + hi_off. A quadratic
// makes the 3x3 finite-difference fit exact, so the refined keypoint must
// land on (x0, y0) up to float rounding.
DoGPyramid quadratic_bump_dog(int w, int h, double x0, double y0, double amp,
                              double lo_off, double hi_off) {
    const double c = 0.002;
    GrayImage d1(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - x0;
            const double dy = y - y0;
            d1.at(x, y) = static_cast<float>(amp * (0.2 - c * (dx * dx + dy * dy)));
        }
    }
    GrayImage d0(w, h), d2(w, h);
    for (size_t i = 0; i < d1.size(); ++i) {
        d0.data[i] = d1.data[i] + static_cast<float>(lo_off);
        d2.data[i] = d1.data[i] + static_cast<float>(hi_off);
    }
    DoGPyramid dog;
    dog.s = 3;
    dog.sigma0 = 1.6;
    dog.first_octave = 0;
    dog.base_width = w;
    dog.base_height = h;
    dog.octaves.push_back({std::move(d0), std::move(d1), std::move(d2)});
    return dog;
}

bool keypoints_identical(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].sigma != b[i].sigma ||
            a[i].octave != b[i].octave || a[i].response != b[i].response) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("derive_octave_count follows floor(log2(min/16)) clamped to [0,4]") {
    CHECK(derive_octave_count(64, 64) == 2);
    CHECK(derive_octave_count(256, 256) == 4);
    CHECK(derive_octave_count(64, 512) == 2);   // min dimension rules
    CHECK(derive_octave_count(32, 32) == 1);
    CHECK(derive_octave_count(16, 16) == 0);
    CHECK(derive_octave_count(15, 200) == 0);
    CHECK(derive_octave_count(4096, 4096) == 4);  // clamp
}

TEST_CASE("parameter validation") {
    const GrayImage img = testsup::constant_gray(32, 32, 0.5f);
    SiftParams p;
    p.base_sigma = 0.4;  // below the assumed input blur of 0.5
    CHECK_THROWS_AS(build_scale_space(img, p), ConfigError);
    p = {};
    p.scales_per_octave = 0;
    CHECK_THROWS_AS(build_scale_space(img, p), ConfigError);
    p = {};
    p.contrast_threshold = -1.0;
    CHECK_THROWS_AS(detect_keypoints(img, p), ConfigError);
    p = {};
    p.edge_ratio = 0.0;
    CHECK_THROWS_AS(detect_keypoints(img, p), ConfigError);
    p = {};
    p.upsample_first_octave = true;
    p.assumed_input_blur = 1.0;  // doubled by upsampling to 2.0 > sigma0
    CHECK_THROWS_AS(build_scale_space(img, p), ConfigError);
}

TEST_CASE("scale space layout on a 64x64 image") {
    const GrayImage img = testsup::blob_grid(64, 64);
    const ScaleSpace ss = build_scale_space(img);
    REQUIRE(ss.octaves.size() == 2);
    REQUIRE(ss.first_octave == 0);
    for (const auto& levels : ss.octaves) {
        CHECK(levels.size() == 6);  // s + 3
    }
    CHECK(ss.octaves[0][0].width == 64);
    CHECK(ss.octaves[0][0].height == 64);
    CHECK(ss.octaves[1][0].width == 32);
    CHECK(ss.octaves[1][0].height == 32);

    // Level 0 carries absolute blur sigma0: the input (blur 0.5) blurred by
    // sqrt(sigma0^2 - 0.5^2).
    const GrayImage expected0 = gaussian_blur(img, std::sqrt(1.6 * 1.6 - 0.25));
    CHECK(ss.octaves[0][0].data == expected0.data);

    // Incremental blur follows the geometric schedule: level i at
    // sigma0 * 2^(i/s), built from level i-1.
    const double s1 = 1.6 * std::pow(2.0, 1.0 / 3.0);
    const GrayImage expected1 =
        gaussian_blur(ss.octaves[0][0], std::sqrt(s1 * s1 - 1.6 * 1.6));
    CHECK(ss.octaves[0][1].data == expected1.data);

    // The next octave restarts from the level with absolute blur 2*sigma0
    // (level index s), downsampled to ceil(half).
    const GrayImage seed = resize_bilinear(ss.octaves[0][3], 32, 32);
    CHECK(ss.octaves[1][0].data == seed.data);
}

TEST_CASE("odd dimensions round up when downsampling octaves") {
    const GrayImage img = testsup::blob_grid(49, 63);
    SiftParams p;
    p.octaves = 2;
    const ScaleSpace ss = build_scale_space(img, p);
    REQUIRE(ss.octaves.size() == 2);
    CHECK(ss.octaves[1][0].width == 25);   // ceil(49/2)
    CHECK(ss.octaves[1][0].height == 32);  // ceil(63/2)
}

TEST_CASE("explicit octave request is capped at four") {
    const GrayImage img = testsup::blob_grid(256, 256);
    SiftParams p;
    p.octaves = 10;
    const ScaleSpace ss = build_scale_space(img, p);
    CHECK(ss.octaves.size() == 4);
}

TEST_CASE("upsampled first octave doubles the working grid") {
    const GrayImage img = testsup::blob_grid(64, 64);
    SiftParams p;
    p.upsample_first_octave = true;
    const ScaleSpace ss = build_scale_space(img, p);
    CHECK(ss.first_octave == -1);
    REQUIRE(!ss.octaves.empty());
    CHECK(ss.octaves[0][0].width == 128);
    CHECK(ss.octaves[0][0].height == 128);
    CHECK(ss.octaves.size() == 3);  // derived from the 128x128 working grid

    // Keypoints still land in original-image coordinates.
    for (const Keypoint& kp : detect_keypoints(img, p)) {
        CHECK(kp.x >= 0.0);
        CHECK(kp.x < 64.0);
        CHECK(kp.y >= 0.0);
        CHECK(kp.y < 64.0);
    }
}

TEST_CASE("DoG is the level-wise difference G_{i+1} - G_i") {
    // Hand-built two-level octave.
    ScaleSpace ss;
    ss.s = 3;
    ss.sigma0 = 1.6;
    ss.base_width = 3;
    ss.base_height = 1;
    GrayImage a(3, 1), b(3, 1);
    a.at(0, 0) = 0.2f;
    a.at(1, 0) = 0.5f;
    a.at(2, 0) = 0.9f;
    b.at(0, 0) = 0.25f;
    b.at(1, 0) = 0.4f;
    b.at(2, 0) = 1.0f;
    ss.octaves.push_back({a, b});
    const DoGPyramid dog = build_dog(ss);
    REQUIRE(dog.octaves.size() == 1);
    REQUIRE(dog.octaves[0].size() == 1);
    CHECK(dog.octaves[0][0].at(0, 0) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(dog.octaves[0][0].at(1, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(dog.octaves[0][0].at(2, 0) == doctest::Approx(0.1).epsilon(1e-6));

    // Full pipeline shape: s + 2 differences per octave, matching a plain
    // elementwise subtraction.
    const GrayImage img = testsup::blob_grid(64, 64);
    const ScaleSpace full = build_scale_space(img);
    const DoGPyramid d = build_dog(full);
    for (size_t o = 0; o < full.octaves.size(); ++o) {
        REQUIRE(d.octaves[o].size() == 5);
        for (size_t i = 0; i < d.octaves[o].size(); ++i) {
            for (size_t px = 0; px < d.octaves[o][i].size(); ++px) {
                const float want = full.octaves[o][i + 1].data[px] - full.octaves[o][i].data[px];
                REQUIRE(d.octaves[o][i].data[px] == want);
            }
        }
    }
}

TEST_CASE("detect_extrema agrees with a brute-force 26-neighbor scan") {
    for (uint64_t seed : {1u, 2u, 3u}) {
        DoGPyramid dog;
        dog.s = 3;
        dog.sigma0 = 1.6;
        dog.base_width = 8;
        dog.base_height = 8;
        dog.octaves.push_back({random_gray(8, 8, seed * 10),
                               random_gray(8, 8, seed * 10 + 1),
                               random_gray(8, 8, seed * 10 + 2)});

        std::set<std::tuple<int, int, int, int>> want;
        const auto& L = dog.octaves[0];
        for (int y = 1; y < 7; ++y) {
            for (int x = 1; x < 7; ++x) {
                const float v = L[1].at(x, y);
                bool is_max = true, is_min = true;
                for (int dl = -1; dl <= 1; ++dl) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (dl == 0 && dy == 0 && dx == 0) continue;
                            const float nb = L[1 + dl].at(x + dx, y + dy);
                            if (v <= nb) is_max = false;
                            if (v >= nb) is_min = false;
                        }
                    }
                }
                if (is_max || is_min) want.insert({0, 1, x, y});
            }
        }
        std::set<std::tuple<int, int, int, int>> got;
        for (const ExtremumSite& s : detect_extrema(dog)) {
            got.insert({s.octave, s.level, s.x, s.y});
        }
        CHECK(got == want);
    }
}

TEST_CASE("a single spike is the only extremum") {
    DoGPyramid dog;
    dog.s = 3;
    dog.sigma0 = 1.6;
    dog.base_width = 9;
    dog.base_height = 9;
    GrayImage flat(9, 9, 0.0f);
    GrayImage spike(9, 9, 0.0f);
    spike.at(4, 4) = 0.5f;
    dog.octaves.push_back({flat, spike, flat});
    const auto sites = detect_extrema(dog);
    REQUIRE(sites.size() == 1);
    CHECK(sites[0].x == 4);
    CHECK(sites[0].y == 4);
    CHECK(sites[0].level == 1);
}

TEST_CASE("quadratic refinement recovers the subpixel peak exactly") {
    const double x0 = 10.3, y0 = 7.6;
    const DoGPyramid dog = quadratic_bump_dog(21, 16, x0, y0, 1.0, -0.05, -0.05);
    const auto sites = detect_extrema(dog);
    REQUIRE(sites.size() == 1);
    const auto kps = refine_and_filter(sites, dog, SiftParams{});
    REQUIRE(kps.size() == 1);
    CHECK(kps[0].x == doctest::Approx(x0).epsilon(1e-4));
    CHECK(kps[0].y == doctest::Approx(y0).epsilon(1e-4));
    // Flat scale neighbors leave the scale offset at zero: DoG level 1 in
    // octave 0 sits at sigma0 * 2^(1/3).
    CHECK(kps[0].sigma == doctest::Approx(1.6 * std::pow(2.0, 1.0 / 3.0)).epsilon(1e-6));
    CHECK(kps[0].octave == 0);
    // For an exact quadratic the interpolated response equals the true peak.
    CHECK(kps[0].response == doctest::Approx(0.2).epsilon(1e-4));
}

TEST_CASE("scale offset shifts sigma along the geometric schedule") {
    // Asymmetric scale neighbors tilt the scale parabola:
    //   ds = (hi - lo)/2 = 0.02, dss = lo + hi = -0.12  =>  os = 1/6.
    const DoGPyramid dog = quadratic_bump_dog(21, 16, 10.3, 7.6, 1.0, -0.08, -0.04);
    const auto kps = refine_and_filter(detect_extrema(dog), dog, SiftParams{});
    REQUIRE(kps.size() == 1);
    const double os = 0.02 / 0.12;
    CHECK(kps[0].sigma == doctest::Approx(1.6 * std::pow(2.0, (1.0 + os) / 3.0)).epsilon(1e-5));
}

TEST_CASE("low-contrast extrema are dropped at the 0.03 threshold") {
    // amp = 1.0 refines to response 0.2 (kept); amp = 0.1 to 0.02 (dropped).
    const DoGPyramid strong = quadratic_bump_dog(21, 16, 10.3, 7.6, 1.0, -0.05, -0.05);
    CHECK(refine_and_filter(detect_extrema(strong), strong, SiftParams{}).size() == 1);
    const DoGPyramid weak = quadratic_bump_dog(21, 16, 10.3, 7.6, 0.1, -0.005, -0.005);
    CHECK(refine_and_filter(detect_extrema(weak), weak, SiftParams{}).empty());
}

TEST_CASE("edge test keeps isotropic curvature and rejects ridges") {
    using sift_detail::passes_edge_test;
    // isotropic: ratio 1, well under r_edge = 10
    CHECK(passes_edge_test(-0.2, -0.2, 0.0, 10.0));
    CHECK(passes_edge_test(0.2, 0.2, 0.0, 10.0));
    // a perfect straight edge: one principal curvature is zero -> det == 0
    CHECK_FALSE(passes_edge_test(0.3, 0.0, 0.0, 10.0));
    // saddle: det < 0
    CHECK_FALSE(passes_edge_test(0.3, -0.3, 0.0, 10.0));
    // anisotropic ridge with curvature ratio 20 > 10
    CHECK_FALSE(passes_edge_test(1.0, 0.05, 0.0, 10.0));
    // ratio exactly r: trace^2 * r == det * (r+1)^2 -> boundary rejects
    CHECK_FALSE(passes_edge_test(10.0, 1.0, 0.0, 10.0));
    // just inside the bound
    CHECK(passes_edge_test(9.0, 1.0, 0.0, 10.0));
    // off-diagonal curvature counts: dxy large enough flips det negative
    CHECK_FALSE(passes_edge_test(0.2, 0.2, 0.3, 10.0));
}

TEST_CASE("constant images produce no keypoints") {
    CHECK(detect_keypoints(testsup::constant_gray(64, 64, 0.0f)).empty());
    CHECK(detect_keypoints(testsup::constant_gray(64, 64, 0.7f)).empty());
    CHECK(detect_keypoints(testsup::constant_gray(128, 128, 1.0f)).empty());
}

TEST_CASE("images below one octave of room produce no keypoints") {
    CHECK(detect_keypoints(random_gray(15, 15, 4)).empty());
    CHECK(detect_keypoints(testsup::blob_image(12, 12, 2.0)).empty());
}

TEST_CASE("a centered blob yields a keypoint within 2 px of its center") {
    const GrayImage img = testsup::blob_image(64, 64, 3.0);
    const auto kps = detect_keypoints(img);
    REQUIRE(!kps.empty());
    const double cx = testsup::blob_cx(64), cy = testsup::blob_cy(64);
    double best = 1e9;
    for (const Keypoint& kp : kps) {
        best = std::min(best, std::hypot(kp.x - cx, kp.y - cy));
    }
    CHECK(best <= 2.0);
}

TEST_CASE("detection is deterministic") {
    const GrayImage img = testsup::texture_image(96, 96);
    const auto a = detect_keypoints(img);
    const auto b = detect_keypoints(img);
    REQUIRE(!a.empty());
    CHECK(keypoints_identical(a, b));
}

TEST_CASE("keypoints are sorted by (y, x, sigma)") {
    const auto kps = detect_keypoints(testsup::texture_image(96, 96));
    REQUIRE(kps.size() >= 2);
    CHECK(std::is_sorted(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        return std::tie(a.y, a.x, a.sigma, a.octave, a.response) <
               std::tie(b.y, b.x, b.sigma, b.octave, b.response);
    }));
}

TEST_CASE("a constant brightness shift leaves detections nearly unchanged") {
    const GrayImage img = testsup::texture_image(96, 96);
    GrayImage shifted = img;
    for (auto& v : shifted.data) v += 0.05f;  // texture stays within [0, 1]
    const auto base = detect_keypoints(img);
    const auto moved = detect_keypoints(shifted);
    REQUIRE(!base.empty());
    const double lo = 0.9 * static_cast<double>(base.size());
    const double hi = 1.1 * static_cast<double>(base.size());
    CHECK(static_cast<double>(moved.size()) >= lo);
    CHECK(static_cast<double>(moved.size()) <= hi);
}

TEST_CASE("90-degree rotation maps at least 80 percent of keypoints") {
    const GrayImage img = testsup::texture_image(128, 128);
    const GrayImage rot = testsup::rot90_ccw(img);
    const auto base = detect_keypoints(img);
    const auto rotated = detect_keypoints(rot);
    REQUIRE(base.size() >= 20);

    int matched = 0;
    for (const Keypoint& kp : base) {
        // (x, y) -> (y, W - 1 - x) under the exact grid rotation
        const double ex = kp.y;
        const double ey = (img.width - 1) - kp.x;
        for (const Keypoint& rk : rotated) {
            if (std::hypot(rk.x - ex, rk.y - ey) <= 1.0 &&
                std::abs(rk.sigma - kp.sigma) <= 0.1 * kp.sigma) {
                ++matched;
                break;
            }
        }
    }
    CHECK(static_cast<double>(matched) >= 0.8 * static_cast<double>(base.size()));
}

TEST_CASE("raising the contrast threshold never adds keypoints") {
    const GrayImage img = testsup::texture_image(96, 96);
    size_t prev = SIZE_MAX;
    for (double thr : {0.005, 0.01, 0.02, 0.04, 0.08}) {
        SiftParams p;
        p.contrast_threshold = thr;
        const size_t n = detect_keypoints(img, p).size();
        CHECK(n <= prev);
        prev = n;
    }
}
