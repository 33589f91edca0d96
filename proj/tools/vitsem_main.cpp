// vitsem: SIFT keypoints, ViT attention interrelation analysis, and mask
// plans from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 input-format error,
// 4 numeric error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "vitsem/errors.hpp"
#include "vitsem/pipeline.hpp"

namespace {

using vitsem::RunConfig;

struct CliFlags {
    std::string image;
    std::string out;
    std::string attn_bundle;
    std::string save_attn;
    std::string mode = "top";
    std::string fill = "mean";
    double gamma = 1.0;
    int image_size = 64;
    int patch_size = 8;
    int layers = 4;
    int heads = 4;
    int dim = 64;
    bool cls = false;
    std::uint64_t seed = 42;
    double ratio = 0.5;
    double beta = 0.5;
    int round = 0;
    bool seeded = false;
    // SIFT overrides
    double contrast = 0.03;
    double edge_ratio = 10.0;
    bool upsample = false;
};

void add_model_flags(CLI::App* cmd, CliFlags& f) {
    cmd->add_option("--image-size", f.image_size, "Model input resolution (square)");
    cmd->add_option("--patch-size", f.patch_size, "ViT patch size P");
    cmd->add_option("--layers", f.layers, "Transformer layer count L");
    cmd->add_option("--heads", f.heads, "Attention head count m");
    cmd->add_option("--dim", f.dim, "Embedding dimension d");
    cmd->add_flag("--cls", f.cls, "Prepend a CLS token");
    cmd->add_option("--seed", f.seed, "Seed for weights / sampling");
}

void add_sift_flags(CLI::App* cmd, CliFlags& f) {
    cmd->add_option("--contrast-threshold", f.contrast, "SIFT contrast threshold");
    cmd->add_option("--edge-ratio", f.edge_ratio, "SIFT edge-response ratio");
    cmd->add_flag("--upsample", f.upsample, "Upsample the first SIFT octave 2x");
}

RunConfig to_config(const CliFlags& f) {
    RunConfig cfg;
    cfg.image_path = f.image;
    cfg.out_dir = f.out;
    cfg.attn_bundle = f.attn_bundle;
    cfg.save_attn = f.save_attn;
    cfg.vit.image_size = f.image_size;
    cfg.vit.patch_size = f.patch_size;
    cfg.vit.layers = f.layers;
    cfg.vit.heads = f.heads;
    cfg.vit.embed_dim = f.dim;
    cfg.vit.use_cls_token = f.cls;
    cfg.seed = f.seed;
    cfg.gamma = f.gamma;
    cfg.ratio = f.ratio;
    cfg.beta = f.beta;
    cfg.round = f.round;
    cfg.sift.contrast_threshold = f.contrast;
    cfg.sift.edge_ratio = f.edge_ratio;
    cfg.sift.upsample_first_octave = f.upsample;

    if (!f.attn_bundle.empty()) {
        cfg.source = vitsem::AttentionSource::Bundle;
    } else if (f.seeded) {
        cfg.source = vitsem::AttentionSource::SeededVit;
    } else {
        cfg.source = vitsem::AttentionSource::None;
    }

    if (f.mode == "top") {
        cfg.mode = vitsem::MaskMode::Top;
    } else if (f.mode == "bottom") {
        cfg.mode = vitsem::MaskMode::Bottom;
    } else if (f.mode == "guided") {
        cfg.mode = vitsem::MaskMode::Guided;
    } else {
        throw vitsem::ConfigError("unknown mask mode: " + f.mode);
    }

    if (f.fill == "mean") {
        cfg.fill = vitsem::FillMode::Mean;
    } else if (f.fill == "gray") {
        cfg.fill = vitsem::FillMode::Gray;
    } else if (f.fill == "black") {
        cfg.fill = vitsem::FillMode::Black;
    } else {
        throw vitsem::ConfigError("unknown fill mode: " + f.fill);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-concentration analysis of ViT attention via SIFT keypoints"};
    app.require_subcommand(1);

    CliFlags f;

    CLI::App* sift = app.add_subcommand("sift", "Detect SIFT keypoints; write TSV + overlay");
    sift->add_option("image", f.image, "Input image (PNG or binary PPM)")->required();
    sift->add_option("--out", f.out, "Output directory")->required();
    add_sift_flags(sift, f);

    CLI::App* analyze =
        app.add_subcommand("analyze", "Interrelation/focus profile, stages, heatmaps");
    analyze->add_option("image", f.image, "Input image (PNG or binary PPM)")->required();
    analyze->add_option("--out", f.out, "Output directory")->required();
    analyze->add_option("--gamma", f.gamma, "Detection-line gamma");
    analyze->add_option("--attn-bundle", f.attn_bundle, "Ingest attention from a tensor bundle");
    analyze->add_option("--save-attn", f.save_attn, "Also write the attention bundle here");
    add_model_flags(analyze, f);
    add_sift_flags(analyze, f);

    CLI::App* mask = app.add_subcommand("mask", "Build a mask plan and render the masked image");
    mask->add_option("image", f.image, "Input image (PNG or binary PPM)")->required();
    mask->add_option("--out", f.out, "Output directory")->required();
    mask->add_option("--mode", f.mode, "top | bottom | guided")->required();
    mask->add_option("--ratio", f.ratio, "Mask ratio r in (0, 1]")->required();
    mask->add_option("--beta", f.beta, "Keypoint fraction for guided masks");
    mask->add_option("--gamma", f.gamma, "Detection-line gamma");
    mask->add_option("--attn-bundle", f.attn_bundle, "Attention source: tensor bundle");
    mask->add_flag("--seeded", f.seeded, "Attention source: internal seeded ViT");
    mask->add_option("--fill", f.fill, "Masked-patch fill: mean | gray | black");
    add_model_flags(mask, f);
    add_sift_flags(mask, f);

    CLI::App* schedule =
        app.add_subcommand("schedule", "Curriculum mask plan for a training round");
    schedule->add_option("image", f.image, "Input image (PNG or binary PPM)")->required();
    schedule->add_option("--out", f.out, "Output directory")->required();
    schedule->add_option("--ratio", f.ratio, "Mask ratio r in (0, 1]")->required();
    schedule->add_option("--round", f.round, "Training round index (>= 0)");
    schedule->add_option("--fill", f.fill, "Masked-patch fill: mean | gray | black");
    add_model_flags(schedule, f);
    add_sift_flags(schedule, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        // `analyze` always has the internal model available as its default
        // source; `mask` must name a source explicitly for top/bottom.
        if (analyze->parsed() && f.attn_bundle.empty()) {
            f.seeded = true;
        }
        const RunConfig cfg = to_config(f);
        if (sift->parsed()) {
            vitsem::cmd_sift(cfg);
        } else if (analyze->parsed()) {
            vitsem::cmd_analyze(cfg);
        } else if (mask->parsed()) {
            vitsem::cmd_mask(cfg);
        } else if (schedule->parsed()) {
            vitsem::cmd_schedule(cfg);
        }
    } catch (const vitsem::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const vitsem::FormatError& e) {
        std::fprintf(stderr, "input format error: %s\n", e.what());
        return 3;
    } catch (const vitsem::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const vitsem::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
