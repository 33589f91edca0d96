#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vitsem/analysis.hpp"
#include "vitsem/image.hpp"
#include "vitsem/masking.hpp"
#include "vitsem/patch_grid.hpp"
#include "vitsem/sift.hpp"
#include "vitsem/vit.hpp"

namespace vitsem {

enum class AttentionSource { None, SeededVit, Bundle };

struct RunConfig {
    std::string image_path;
    std::string out_dir;

    AttentionSource source = AttentionSource::SeededVit;
    std::string attn_bundle;  // when source == Bundle
    std::string save_attn;    // optional bundle dump (analyze)

    ViTConfig vit;  // model geometry (seeded source) / grid defaults
    uint64_t seed = 42;
    double gamma = 1.0;
    SiftParams sift;

    // mask / schedule
    MaskMode mode = MaskMode::Top;
    double ratio = 0.5;
    double beta = 0.5;
    FillMode fill = FillMode::Mean;
    int round = 0;
};

struct AnalysisOutcome {
    PatchGrid grid;
    PatchStats stats;
    std::vector<Keypoint> keypoints;
    std::vector<AttentionRecord> records;
    bool cls = false;
    int layers = 0;
    int heads = 0;
    LayerProfile profile;
    StageSegmentation stages;
    std::vector<double> theta_bar;
    RgbImage model_image;  // center-cropped + resized to model resolution
};

// Model-source resolution + SIFT + grid + full analysis; no artifacts.
AnalysisOutcome run_analysis(const RunConfig& cfg);

// CLI command bodies. Each writes its artifacts under cfg.out_dir.
void cmd_sift(const RunConfig& cfg);
void cmd_analyze(const RunConfig& cfg);
void cmd_mask(const RunConfig& cfg);
void cmd_schedule(const RunConfig& cfg);

// ----------------------------------------------------------------------------
// Deterministic artifact writers (printf-style formatting, no locale).
// ----------------------------------------------------------------------------

void write_keypoints_tsv(const std::string& path, const std::vector<Keypoint>& kps);
void write_overlay_pgm(const std::string& path, const GrayImage& gray,
                       const std::vector<Keypoint>& kps);
void write_patch_stats_csv(const std::string& path, const PatchGrid& grid,
                           const PatchStats& stats);
void write_profile_csv(const std::string& path, const LayerProfile& profile);
void write_stages_json(const std::string& path, const StageSegmentation& seg);
void write_plan_json(const std::string& path, const MaskPlan& plan);
void write_schedule_json(const std::string& path, const CurriculumSchedule& schedule, int round,
                         double beta, const MaskPlan& plan);
void write_heatmap_pgm(const std::string& path, const Tensor& alpha_patches, const PatchGrid& grid,
                       int upsample);

// Round-trip parser for profile.csv (used by the integrity tests).
struct ProfileCsvRow {
    int layer = 0;
    int head = 0;
    std::optional<double> theta_kk, theta_kn, theta_nk, theta_nn;
    double focus = 0.0;
    int undefined_count = 0;
};
std::vector<ProfileCsvRow> parse_profile_csv(const std::string& path);

}  // namespace vitsem
