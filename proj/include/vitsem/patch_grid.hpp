#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vitsem/sift.hpp"

namespace vitsem {

// Non-overlapping P x P patch grid over an image with dimensions divisible
// by P. Patch index = row * cols + col, rows scanning top to bottom.
struct PatchGrid {
    int patch_size = 16;
    int rows = 0;
    int cols = 0;

    PatchGrid() = default;
    PatchGrid(int image_width, int image_height, int P);

    int count() const { return rows * cols; }  // N
};

enum class PatchIdentity : uint8_t { NonKeypoint = 0, Keypoint = 1 };

struct PatchStats {
    std::vector<int> t;                     // per-patch keypoint counts
    std::vector<PatchIdentity> identity;    // Keypoint iff t[j] >= 1
};

// Keypoint (x, y) lands in patch (floor(y/P), floor(x/P)). Out-of-bounds
// coordinates are a broken upstream contract and raise std::logic_error.
PatchStats assign_keypoints(const PatchGrid& grid, const std::vector<Keypoint>& keypoints);

// Splits {0..N-1} into (S_Key, S_Non) by identity; both sorted ascending.
std::pair<std::vector<int>, std::vector<int>> split_identity_sets(const PatchStats& stats);

}  // namespace vitsem
