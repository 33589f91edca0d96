#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vitsem/image.hpp"
#include "vitsem/patch_grid.hpp"

namespace vitsem {

enum class MaskMode { Top, Bottom, Guided, Random };

std::string mask_mode_name(MaskMode mode);

struct MaskPlan {
    MaskMode mode = MaskMode::Top;
    double r = 0.0;
    std::optional<double> beta;     // guided plans
    std::optional<uint64_t> seed;   // guided plans
    std::vector<int> masked;        // sorted ascending, |masked| = round(N*r)
    bool shortfall = false;         // a pool ran short and was backfilled
};

struct CurriculumStage {
    double beta = 0.0;
    int duration = 0;  // rounds
};

// Mask ratio r is fixed across stages; beta must be non-decreasing.
struct CurriculumSchedule {
    std::vector<CurriculumStage> stages;
    double r = 0.5;
};

// The standard curriculum: beta 0.1 to 0.5 in steps of 0.1, 10 rounds each.
CurriculumSchedule default_schedule(double r);

// Sort patches by theta-bar (Top: descending, Bottom: ascending), ties broken
// by ascending index, mask the first round(N*r).
MaskPlan rank_mask(const std::vector<double>& theta_bar, double r, MaskMode mode);

// M = round(N*r) patches: round(M*beta) sampled (seeded, without replacement)
// from Keypoint patches, the rest from Non-keypoint patches. A pool that is
// too small is taken whole and the deficit backfilled from the other pool,
// with plan.shortfall set.
MaskPlan guided_mask(const PatchStats& stats, double r, double beta, uint64_t seed);

// Stage lookup by cumulative duration (the last stage persists); emits
// guided_mask with the stage's beta and per-round seed = seed XOR round.
MaskPlan schedule_masks(const PatchStats& stats, const CurriculumSchedule& schedule, int round,
                        uint64_t seed);

double schedule_beta(const CurriculumSchedule& schedule, int round);

enum class FillMode { Mean, Gray, Black };

// Replaces masked patches with the per-image channel mean (Mean), 0.5 (Gray),
// or 0 (Black); every other pixel is untouched.
RgbImage apply_mask(const RgbImage& img, const MaskPlan& plan, const PatchGrid& grid,
                    FillMode fill = FillMode::Mean);

}  // namespace vitsem
