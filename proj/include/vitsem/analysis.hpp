#pragma once

#include <optional>
#include <vector>

#include "vitsem/patch_grid.hpp"
#include "vitsem/tensor.hpp"
#include "vitsem/vit.hpp"

namespace vitsem {

// All analysis arithmetic is double precision regardless of the f32 storage
// of attention records.

// Detection line: gamma * mean(row). For rows that sum to 1 this is gamma/N.
double detection_threshold(const std::vector<double>& alpha_row, double gamma);

struct AttendedSet {
    int start = 0;            // i
    double threshold = 0.0;   // H-bar
    std::vector<int> members;      // j with alpha_ij >= threshold (ties in)
    std::vector<int> key_members;  // members with Keypoint identity
    std::vector<int> non_members;  // members with Non-keypoint identity
};

AttendedSet attended_set(const std::vector<double>& alpha_row, double gamma,
                         const PatchStats& stats, int i);

struct InterrelationScore {
    int start = 0;
    double unweighted = 0.0;  // |S_key| / (|S_non| + |S_key|)
    double weighted = 0.0;    // sum t over S_key / (|S_non| + sum t)
    bool defined = false;     // false iff the attended set is empty
};

InterrelationScore theta(const AttendedSet& att, const PatchStats& stats);

// Per-head global scores. Complements are computed as 1 - value so
// theta_kk + theta_kn == 1 holds exactly. Scores are empty (not-applicable)
// when the start set is empty or every theta in it is undefined.
struct GlobalScores {
    int layer = 0;
    int head = 0;
    std::optional<double> theta_kk, theta_kn, theta_nk, theta_nn;
    int undefined_count = 0;  // start patches whose attended set was empty
};

// alpha must be the N x N patch-patch matrix (CLS already sliced away).
GlobalScores global_thetas(const Tensor& alpha, const PatchStats& stats, double gamma,
                           int layer = 0, int head = 0);

// Mean weighted theta_i across every (layer, head) record, skipping undefined
// entries per patch; patches undefined everywhere get 0.
std::vector<double> per_patch_mean_theta(const std::vector<AttentionRecord>& records,
                                         const PatchStats& stats, double gamma,
                                         bool cls = false);

// Focus index: per row, min-max normalize, renormalize to a probability
// vector, Shannon entropy (natural log); constant rows get ln(N). Returns
// the mean over the N rows.
double focus_index(const Tensor& alpha);
double focus_index_row(const double* row, size_t n);

struct HeadProfile {
    GlobalScores scores;
    double focus = 0.0;
};

struct LayerProfileRow {
    int layer = 0;
    std::optional<double> mean_kk, mean_kn, mean_nk, mean_nn;
    double mean_focus = 0.0;
    std::vector<HeadProfile> heads;  // per-head scatter, head ascending
};

using LayerProfile = std::vector<LayerProfileRow>;

// Expects exactly layers x heads records; a missing (layer, head) pair is an
// input-completeness FormatError. cls: records carry an extra leading CLS
// token to slice away.
LayerProfile layer_profile(const std::vector<AttentionRecord>& records, const PatchStats& stats,
                           double gamma, int layers, int heads, bool cls = false);

struct StageSegmentation {
    bool applicable = false;  // false when fewer than 3 layers
    int b1 = 0;
    int b2 = 0;
    bool fallback = false;  // true when either boundary used the thirds rule
};

// Boundary rule over the per-layer mean theta_KK series K and mean focus
// series F:
//   b1 = first layer with K above its global mean and F below its own mean;
//   b2 = first later layer where K falls for two consecutive steps or F rises
//        for two consecutive steps;
// either boundary falls back to L/3 resp. 2L/3, then both are clamped to
// 1 <= b1 < b2 < L.
StageSegmentation segment_stages(const LayerProfile& profile);

}  // namespace vitsem
