#include "vitsem/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vitsem/errors.hpp"
#include "vitsem/rng.hpp"

namespace vitsem {

namespace {

void validate_ratio(double r) {
    if (!(r > 0.0) || r > 1.0) {
        throw ConfigError("mask ratio must satisfy 0 < r <= 1");
    }
}

int mask_count(size_t n, double r) {
    const long long m = std::llround(static_cast<double>(n) * r);
    return static_cast<int>(std::clamp<long long>(m, 0, static_cast<long long>(n)));
}

// First k entries of a seeded uniform shuffle = uniform sample without
// replacement.
std::vector<int> sample_without_replacement(std::vector<int> pool, size_t k, Rng& rng) {
    partial_shuffle(pool, k, rng);
    pool.resize(k);
    return pool;
}

}  // namespace

std::string mask_mode_name(MaskMode mode) {
    switch (mode) {
        case MaskMode::Top: return "top";
        case MaskMode::Bottom: return "bottom";
        case MaskMode::Guided: return "guided";
        case MaskMode::Random: return "random";
    }
    return "unknown";
}

CurriculumSchedule default_schedule(double r) {
    validate_ratio(r);
    CurriculumSchedule s;
    s.r = r;
    for (double beta : {0.1, 0.2, 0.3, 0.4, 0.5}) {
        s.stages.push_back({beta, 10});
    }
    return s;
}

MaskPlan rank_mask(const std::vector<double>& theta_bar, double r, MaskMode mode) {
    validate_ratio(r);
    if (mode != MaskMode::Top && mode != MaskMode::Bottom) {
        throw ConfigError("rank_mask: mode must be Top or Bottom");
    }
    const size_t n = theta_bar.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (mode == MaskMode::Top) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (theta_bar[a] != theta_bar[b]) return theta_bar[a] > theta_bar[b];
            return a < b;
        });
    } else {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (theta_bar[a] != theta_bar[b]) return theta_bar[a] < theta_bar[b];
            return a < b;
        });
    }
    MaskPlan plan;
    plan.mode = mode;
    plan.r = r;
    const int m = mask_count(n, r);
    plan.masked.assign(order.begin(), order.begin() + m);
    std::sort(plan.masked.begin(), plan.masked.end());
    return plan;
}

MaskPlan guided_mask(const PatchStats& stats, double r, double beta, uint64_t seed) {
    validate_ratio(r);
    if (beta < 0.0 || beta > 1.0) {
        throw ConfigError("guided_mask: beta must lie in [0, 1]");
    }
    const size_t n = stats.t.size();
    const int m = mask_count(n, r);
    int k_key = static_cast<int>(std::llround(m * beta));
    int k_non = m - k_key;

    auto [key_pool, non_pool] = split_identity_sets(stats);
    MaskPlan plan;
    plan.mode = MaskMode::Guided;
    plan.r = r;
    plan.beta = beta;
    plan.seed = seed;

    // Pool shortfalls trade quota to the other pool (m <= N guarantees the
    // combined pools always cover the plan).
    if (k_key > static_cast<int>(key_pool.size())) {
        k_non += k_key - static_cast<int>(key_pool.size());
        k_key = static_cast<int>(key_pool.size());
        plan.shortfall = true;
    }
    if (k_non > static_cast<int>(non_pool.size())) {
        k_key += k_non - static_cast<int>(non_pool.size());
        k_non = static_cast<int>(non_pool.size());
        plan.shortfall = true;
    }

    Rng rng(seed);
    std::vector<int> chosen = sample_without_replacement(std::move(key_pool), k_key, rng);
    std::vector<int> non_chosen = sample_without_replacement(std::move(non_pool), k_non, rng);
    chosen.insert(chosen.end(), non_chosen.begin(), non_chosen.end());
    std::sort(chosen.begin(), chosen.end());
    plan.masked = std::move(chosen);
    return plan;
}

double schedule_beta(const CurriculumSchedule& schedule, int round) {
    if (schedule.stages.empty()) {
        throw ConfigError("curriculum schedule has no stages");
    }
    if (round < 0) {
        throw ConfigError("schedule round must be >= 0");
    }
    // Validate the whole schedule before any lookup: a malformed stage makes
    // the schedule invalid even for rounds that never reach it.
    double prev_beta = -1.0;
    for (const CurriculumStage& stage : schedule.stages) {
        if (stage.duration < 1) {
            throw ConfigError("curriculum stage duration must be >= 1");
        }
        if (stage.beta < prev_beta) {
            throw ConfigError("curriculum beta values must be non-decreasing");
        }
        prev_beta = stage.beta;
    }
    long long cumulative = 0;
    for (const CurriculumStage& stage : schedule.stages) {
        cumulative += stage.duration;
        if (round < cumulative) {
            return stage.beta;
        }
    }
    return schedule.stages.back().beta;  // the last stage persists
}

MaskPlan schedule_masks(const PatchStats& stats, const CurriculumSchedule& schedule, int round,
                        uint64_t seed) {
    const double beta = schedule_beta(schedule, round);
    return guided_mask(stats, schedule.r, beta, seed ^ static_cast<uint64_t>(round));
}

RgbImage apply_mask(const RgbImage& img, const MaskPlan& plan, const PatchGrid& grid,
                    FillMode fill) {
    const int P = grid.patch_size;
    if (grid.cols * P != img.width || grid.rows * P != img.height) {
        throw ConfigError("apply_mask: grid does not tile the image");
    }
    float fill_rgb[3] = {0.0f, 0.0f, 0.0f};
    if (fill == FillMode::Gray) {
        fill_rgb[0] = fill_rgb[1] = fill_rgb[2] = 0.5f;
    } else if (fill == FillMode::Mean) {
        double sums[3] = {0.0, 0.0, 0.0};
        const size_t pixels = static_cast<size_t>(img.width) * img.height;
        for (size_t i = 0; i < pixels; ++i) {
            sums[0] += img.data[i * 3 + 0];
            sums[1] += img.data[i * 3 + 1];
            sums[2] += img.data[i * 3 + 2];
        }
        for (int c = 0; c < 3; ++c) {
            fill_rgb[c] = static_cast<float>(sums[c] / static_cast<double>(pixels));
        }
    }

    RgbImage out = img;
    for (int idx : plan.masked) {
        if (idx < 0 || idx >= grid.count()) {
            throw ConfigError("apply_mask: plan references patch " + std::to_string(idx) +
                              " outside the grid");
        }
        const int row = idx / grid.cols;
        const int col = idx % grid.cols;
        for (int y = row * P; y < (row + 1) * P; ++y) {
            float* px = out.pixel(col * P, y);
            for (int x = 0; x < P; ++x) {
                px[x * 3 + 0] = fill_rgb[0];
                px[x * 3 + 1] = fill_rgb[1];
                px[x * 3 + 2] = fill_rgb[2];
            }
        }
    }
    return out;
}

}  // namespace vitsem
