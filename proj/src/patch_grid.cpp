#include "vitsem/patch_grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vitsem/errors.hpp"

namespace vitsem {

PatchGrid::PatchGrid(int image_width, int image_height, int P) : patch_size(P) {
    if (P < 1) {
        throw ConfigError("patch grid: patch size must be >= 1");
    }
    if (image_width % P != 0 || image_height % P != 0) {
        throw ConfigError("patch grid: image dimensions " + std::to_string(image_width) + "x" +
                          std::to_string(image_height) + " not divisible by patch size " +
                          std::to_string(P));
    }
    rows = image_height / P;
    cols = image_width / P;
}

PatchStats assign_keypoints(const PatchGrid& grid, const std::vector<Keypoint>& keypoints) {
    const int n = grid.count();
    PatchStats stats;
    stats.t.assign(n, 0);
    const double width = static_cast<double>(grid.cols) * grid.patch_size;
    const double height = static_cast<double>(grid.rows) * grid.patch_size;
    for (const Keypoint& kp : keypoints) {
        if (kp.x < 0.0 || kp.x >= width || kp.y < 0.0 || kp.y >= height) {
            throw std::logic_error("assign_keypoints: keypoint outside image bounds");
        }
        const int col = static_cast<int>(std::floor(kp.x / grid.patch_size));
        const int row = static_cast<int>(std::floor(kp.y / grid.patch_size));
        ++stats.t[row * grid.cols + col];
    }
    stats.identity.resize(n);
    for (int j = 0; j < n; ++j) {
        stats.identity[j] = stats.t[j] >= 1 ? PatchIdentity::Keypoint : PatchIdentity::NonKeypoint;
    }
    return stats;
}

std::pair<std::vector<int>, std::vector<int>> split_identity_sets(const PatchStats& stats) {
    std::vector<int> key;
    std::vector<int> non;
    for (size_t j = 0; j < stats.identity.size(); ++j) {
        if (stats.identity[j] == PatchIdentity::Keypoint) {
            key.push_back(static_cast<int>(j));
        } else {
            non.push_back(static_cast<int>(j));
        }
    }
    return {std::move(key), std::move(non)};
}

}  // namespace vitsem
