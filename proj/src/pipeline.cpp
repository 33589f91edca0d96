#include "vitsem/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vitsem/errors.hpp"
#include "vitsem/image_io.hpp"

namespace vitsem {

namespace {

namespace fs = std::filesystem;

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) {
        throw ConfigError("output directory must be given");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + dir + ": " + ec.message());
    }
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("write failure: " + path);
    }
}

// %.17g prints the shortest-width fixed-precision form that strtod parses
// back to the identical double, keeping CSV artifacts exact and stable.
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_optional(const std::optional<double>& v) {
    return v ? fmt_double(*v) : "nan";
}

std::string fill_name(FillMode fill) {
    switch (fill) {
        case FillMode::Mean: return "mean";
        case FillMode::Gray: return "gray";
        case FillMode::Black: return "black";
    }
    return "unknown";
}

nlohmann::json plan_to_json(const MaskPlan& plan) {
    nlohmann::json j;
    j["mode"] = mask_mode_name(plan.mode);
    j["r"] = plan.r;
    j["beta"] = plan.beta ? nlohmann::json(*plan.beta) : nlohmann::json(nullptr);
    j["seed"] = plan.seed ? nlohmann::json(*plan.seed) : nlohmann::json(nullptr);
    j["masked"] = plan.masked;
    j["shortfall"] = plan.shortfall;
    return j;
}

}  // namespace

// ============================================================================
// Artifact writers
// ============================================================================

void write_keypoints_tsv(const std::string& path, const std::vector<Keypoint>& kps) {
    std::string out;
    for (const Keypoint& kp : kps) {
        out += fmt_double(kp.x);
        out += '\t';
        out += fmt_double(kp.y);
        out += '\t';
        out += fmt_double(kp.sigma);
        out += '\t';
        out += fmt_double(kp.response);
        out += '\n';
    }
    write_text(path, out);
}

void write_overlay_pgm(const std::string& path, const GrayImage& gray,
                       const std::vector<Keypoint>& kps) {
    GrayImage overlay = gray;
    for (const Keypoint& kp : kps) {
        const int cx = static_cast<int>(std::lround(kp.x));
        const int cy = static_cast<int>(std::lround(kp.y));
        // 3x3 cross marker, each pixel flipped against the local intensity so
        // the marker is visible on both dark and bright regions.
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int x = cx + dx;
                const int y = cy + dy;
                if (x < 0 || x >= gray.width || y < 0 || y >= gray.height) continue;
                overlay.at(x, y) = gray.at(x, y) > 0.5f ? 0.0f : 1.0f;
            }
        }
    }
    write_pgm(overlay, path);
}

void write_patch_stats_csv(const std::string& path, const PatchGrid& grid,
                           const PatchStats& stats) {
    std::string out = "patch_index,row,col,t,identity\n";
    for (int j = 0; j < grid.count(); ++j) {
        out += std::to_string(j);
        out += ',';
        out += std::to_string(j / grid.cols);
        out += ',';
        out += std::to_string(j % grid.cols);
        out += ',';
        out += std::to_string(stats.t[j]);
        out += ',';
        out += stats.identity[j] == PatchIdentity::Keypoint ? "keypoint" : "non-keypoint";
        out += '\n';
    }
    write_text(path, out);
}

void write_profile_csv(const std::string& path, const LayerProfile& profile) {
    std::string out = "layer,head,theta_kk,theta_kn,theta_nk,theta_nn,focus_index,undefined_count\n";
    for (const LayerProfileRow& row : profile) {
        for (const HeadProfile& hp : row.heads) {
            out += std::to_string(row.layer);
            out += ',';
            out += std::to_string(hp.scores.head);
            out += ',';
            out += fmt_optional(hp.scores.theta_kk);
            out += ',';
            out += fmt_optional(hp.scores.theta_kn);
            out += ',';
            out += fmt_optional(hp.scores.theta_nk);
            out += ',';
            out += fmt_optional(hp.scores.theta_nn);
            out += ',';
            out += fmt_double(hp.focus);
            out += ',';
            out += std::to_string(hp.scores.undefined_count);
            out += '\n';
        }
    }
    write_text(path, out);
}

std::vector<ProfileCsvRow> parse_profile_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("profile csv: empty file");
    }
    std::vector<ProfileCsvRow> rows;
    auto parse_opt = [](const std::string& field) -> std::optional<double> {
        if (field == "nan") return std::nullopt;
        return std::strtod(field.c_str(), nullptr);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 8) {
            throw FormatError("profile csv: expected 8 fields, got " +
                              std::to_string(fields.size()));
        }
        ProfileCsvRow row;
        row.layer = std::stoi(fields[0]);
        row.head = std::stoi(fields[1]);
        row.theta_kk = parse_opt(fields[2]);
        row.theta_kn = parse_opt(fields[3]);
        row.theta_nk = parse_opt(fields[4]);
        row.theta_nn = parse_opt(fields[5]);
        row.focus = std::strtod(fields[6].c_str(), nullptr);
        row.undefined_count = std::stoi(fields[7]);
        rows.push_back(row);
    }
    return rows;
}

void write_stages_json(const std::string& path, const StageSegmentation& seg) {
    nlohmann::json j;
    if (!seg.applicable) {
        j["b1"] = nullptr;
        j["b2"] = nullptr;
        j["rule"] = "not-applicable";
    } else {
        j["b1"] = seg.b1;
        j["b2"] = seg.b2;
        j["rule"] = seg.fallback ? "fallback" : "threshold";
    }
    write_text(path, j.dump(2) + "\n");
}

void write_plan_json(const std::string& path, const MaskPlan& plan) {
    write_text(path, plan_to_json(plan).dump(2) + "\n");
}

void write_schedule_json(const std::string& path, const CurriculumSchedule& schedule, int round,
                         double beta, const MaskPlan& plan) {
    nlohmann::json j;
    j["r"] = schedule.r;
    j["round"] = round;
    j["beta"] = beta;
    nlohmann::json stages = nlohmann::json::array();
    for (const CurriculumStage& st : schedule.stages) {
        stages.push_back({{"beta", st.beta}, {"duration", st.duration}});
    }
    j["stages"] = stages;
    j["plan"] = plan_to_json(plan);
    write_text(path, j.dump(2) + "\n");
}

void write_heatmap_pgm(const std::string& path, const Tensor& alpha_patches, const PatchGrid& grid,
                       int upsample) {
    const size_t n = alpha_patches.shape[0];
    if (n != static_cast<size_t>(grid.count())) {
        throw ConfigError("heatmap: attention matrix does not match the patch grid");
    }
    // Attention received per patch: column means of the patch-patch matrix.
    std::vector<double> received(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            received[j] += alpha_patches.data[i * n + j];
        }
    }
    double lo = received[0] / n, hi = received[0] / n;
    for (size_t j = 0; j < n; ++j) {
        received[j] /= static_cast<double>(n);
        lo = std::min(lo, received[j]);
        hi = std::max(hi, received[j]);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    GrayImage cell(grid.cols, grid.rows);
    for (size_t j = 0; j < n; ++j) {
        cell.data[j] = static_cast<float>((received[j] - lo) / span);
    }
    GrayImage big(grid.cols * upsample, grid.rows * upsample);
    for (int y = 0; y < big.height; ++y) {
        for (int x = 0; x < big.width; ++x) {
            big.at(x, y) = cell.at(x / upsample, y / upsample);
        }
    }
    write_pgm(big, path);
}

// ============================================================================
// Pipeline
// ============================================================================

namespace {

RgbImage to_model_resolution(const RgbImage& img, int image_size) {
    return resize_bilinear(center_crop_square(img), image_size, image_size);
}

}  // namespace

AnalysisOutcome run_analysis(const RunConfig& cfg) {
    if (cfg.source == AttentionSource::None) {
        throw ConfigError("analysis requires an attention source (seeded model or --attn-bundle)");
    }
    const RgbImage input = load_image(cfg.image_path);

    AnalysisOutcome out;
    if (cfg.source == AttentionSource::Bundle) {
        AttentionBundle bundle = load_attention_bundle(cfg.attn_bundle);
        const BundleMeta& meta = bundle.meta;
        if (meta.image_size % meta.patch_size != 0) {
            throw FormatError("attention bundle meta: image size " +
                              std::to_string(meta.image_size) + " not divisible by patch size " +
                              std::to_string(meta.patch_size));
        }
        out.grid = PatchGrid(meta.image_size, meta.image_size, meta.patch_size);
        const int expected_tokens = out.grid.count() + (meta.cls ? 1 : 0);
        if (bundle.tokens != expected_tokens) {
            throw FormatError("attention bundle dimension mismatch: matrices are " +
                              std::to_string(bundle.tokens) + "x" + std::to_string(bundle.tokens) +
                              " tokens but the grid has " + std::to_string(out.grid.count()) +
                              " patches" + (meta.cls ? " plus a CLS token" : ""));
        }
        for (const AttentionRecord& rec : bundle.records) {
            validate_attention_record(rec);
        }
        out.records = std::move(bundle.records);
        out.cls = meta.cls;
        out.layers = meta.layers;
        out.heads = meta.heads;
        out.model_image = to_model_resolution(input, meta.image_size);
    } else {
        ViTConfig vit = cfg.vit;
        vit.validate();
        out.grid = PatchGrid(vit.image_size, vit.image_size, vit.patch_size);
        out.model_image = to_model_resolution(input, vit.image_size);
        const VitWeights weights = init_weights(vit, cfg.seed);
        ForwardResult fwd = forward_with_attention(out.model_image, vit, weights);
        out.records = std::move(fwd.records);
        out.cls = vit.use_cls_token;
        out.layers = vit.layers;
        out.heads = vit.heads;
        if (!cfg.save_attn.empty()) {
            BundleMeta meta;
            meta.image_size = vit.image_size;
            meta.patch_size = vit.patch_size;
            meta.layers = vit.layers;
            meta.heads = vit.heads;
            meta.cls = vit.use_cls_token;
            save_attention_bundle(cfg.save_attn, out.records, meta);
        }
    }

    out.keypoints = detect_keypoints(to_grayscale(out.model_image), cfg.sift);
    out.stats = assign_keypoints(out.grid, out.keypoints);

    if (out.layers < 1) {
        throw ConfigError("analysis requires at least one transformer layer of attention");
    }
    out.profile = layer_profile(out.records, out.stats, cfg.gamma, out.layers, out.heads, out.cls);
    out.stages = segment_stages(out.profile);
    out.theta_bar = per_patch_mean_theta(out.records, out.stats, cfg.gamma, out.cls);
    return out;
}

void cmd_sift(const RunConfig& cfg) {
    ensure_out_dir(cfg.out_dir);
    const RgbImage input = load_image(cfg.image_path);
    const GrayImage gray = to_grayscale(input);
    const std::vector<Keypoint> kps = detect_keypoints(gray, cfg.sift);
    write_keypoints_tsv(join(cfg.out_dir, "keypoints.tsv"), kps);
    write_overlay_pgm(join(cfg.out_dir, "overlay.pgm"), gray, kps);
}

void cmd_analyze(const RunConfig& cfg) {
    ensure_out_dir(cfg.out_dir);
    const AnalysisOutcome out = run_analysis(cfg);
    write_profile_csv(join(cfg.out_dir, "profile.csv"), out.profile);
    write_stages_json(join(cfg.out_dir, "stages.json"), out.stages);
    write_patch_stats_csv(join(cfg.out_dir, "patch_stats.csv"), out.grid, out.stats);

    // One heatmap per (layer, head) over the patch-patch submatrix.
    const size_t n = static_cast<size_t>(out.grid.count());
    for (const AttentionRecord& rec : out.records) {
        Tensor sub;
        if (out.cls) {
            const size_t T = rec.alpha.shape[0];
            sub = Tensor({static_cast<uint32_t>(n), static_cast<uint32_t>(n)});
            for (size_t i = 0; i < n; ++i) {
                const float* src = rec.alpha.data.data() + (i + 1) * T + 1;
                std::copy(src, src + n, sub.data.data() + i * n);
            }
        } else {
            sub = rec.alpha;
        }
        char name[64];
        std::snprintf(name, sizeof(name), "heatmap_L%d_H%d.pgm", rec.layer, rec.head);
        write_heatmap_pgm(join(cfg.out_dir, name), sub, out.grid, out.grid.patch_size);
    }
}

void cmd_mask(const RunConfig& cfg) {
    ensure_out_dir(cfg.out_dir);

    MaskPlan plan;
    RgbImage model_image;
    PatchGrid grid;
    if (cfg.mode == MaskMode::Guided) {
        const RgbImage input = load_image(cfg.image_path);
        ViTConfig vit = cfg.vit;
        vit.validate();
        grid = PatchGrid(vit.image_size, vit.image_size, vit.patch_size);
        model_image = to_model_resolution(input, vit.image_size);
        const PatchStats stats = assign_keypoints(grid, detect_keypoints(to_grayscale(model_image), cfg.sift));
        plan = guided_mask(stats, cfg.ratio, cfg.beta, cfg.seed);
    } else if (cfg.mode == MaskMode::Top || cfg.mode == MaskMode::Bottom) {
        if (cfg.source == AttentionSource::None) {
            throw ConfigError("mask mode \"" + mask_mode_name(cfg.mode) +
                              "\" ranks patches by attention and needs an attention source: pass "
                              "--attn-bundle FILE or --seeded");
        }
        const AnalysisOutcome out = run_analysis(cfg);
        plan = rank_mask(out.theta_bar, cfg.ratio, cfg.mode);
        model_image = out.model_image;
        grid = out.grid;
    } else {
        throw ConfigError("mask mode must be top, bottom, or guided");
    }

    const RgbImage masked = apply_mask(model_image, plan, grid, cfg.fill);
    write_plan_json(join(cfg.out_dir, "plan.json"), plan);
    write_png(masked, join(cfg.out_dir, "masked.png"));
}

void cmd_schedule(const RunConfig& cfg) {
    ensure_out_dir(cfg.out_dir);
    const RgbImage input = load_image(cfg.image_path);
    ViTConfig vit = cfg.vit;
    vit.validate();
    const PatchGrid grid(vit.image_size, vit.image_size, vit.patch_size);
    const RgbImage model_image = to_model_resolution(input, vit.image_size);
    const PatchStats stats =
        assign_keypoints(grid, detect_keypoints(to_grayscale(model_image), cfg.sift));

    const CurriculumSchedule schedule = default_schedule(cfg.ratio);
    const double beta = schedule_beta(schedule, cfg.round);
    const MaskPlan plan = schedule_masks(stats, schedule, cfg.round, cfg.seed);

    write_schedule_json(join(cfg.out_dir, "schedule.json"), schedule, cfg.round, beta, plan);
    write_plan_json(join(cfg.out_dir, "plan.json"), plan);
    write_png(apply_mask(model_image, plan, grid, cfg.fill), join(cfg.out_dir, "masked.png"));
}

}  // namespace vitsem
