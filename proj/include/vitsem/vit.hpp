#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vitsem/image.hpp"
#include "vitsem/tensor.hpp"

namespace vitsem {

struct ViTConfig {
    int image_size = 64;
    int patch_size = 8;   // P
    int layers = 4;       // L
    int heads = 4;        // m
    int embed_dim = 64;   // d
    double mlp_ratio = 4.0;
    bool use_cls_token = false;

    int grid_side() const { return image_size / patch_size; }
    int num_patches() const { return grid_side() * grid_side(); }  // N
    int tokens() const { return num_patches() + (use_cls_token ? 1 : 0); }  // T
    int head_dim() const { return embed_dim / heads; }
    int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }

    // Throws ConfigError unless d % m == 0 and image_size % P == 0.
    void validate() const;
};

// All projection matrices are row-major (out_features, in_features):
// y[o] = sum_j W[o * in + j] * x[j] + b[o].
struct BlockWeights {
    std::vector<float> ln1_gamma, ln1_beta;  // d
    std::vector<float> wq, wk, wv, wo;       // d x d
    std::vector<float> bq, bk, bv, bo;       // d
    std::vector<float> ln2_gamma, ln2_beta;  // d
    std::vector<float> w1, b1;               // hidden x d, hidden
    std::vector<float> w2, b2;               // d x hidden, d
};

struct VitWeights {
    std::vector<float> patch_proj;  // d x (3 * P * P)
    std::vector<float> patch_bias;  // d
    std::vector<float> cls_token;   // d (only when use_cls_token)
    std::vector<float> pos_embed;   // T x d
    std::vector<BlockWeights> blocks;
};

// Seeded Gaussian init, std 0.02 for projections / embeddings, zero biases,
// LayerNorm gamma = 1 and beta = 0. Same seed, same weights, bit for bit.
VitWeights init_weights(const ViTConfig& cfg, uint64_t seed);

struct AttentionRecord {
    int layer = 0;
    int head = 0;
    Tensor alpha;  // (T, T), rows are softmax distributions
};

// Throws NumericError unless every row of alpha sums to 1 within 1e-5 with
// non-negative entries.
void validate_attention_record(const AttentionRecord& rec);

// Flattens each P x P x 3 patch (image layout order: rows, then columns, then
// RGB), applies the linear projection + bias, adds the position embedding
// (and prepends the CLS token when configured). Returns (T, d).
Tensor patch_embed(const RgbImage& img, const ViTConfig& cfg, const VitWeights& w);

// One multi-head self-attention application on x (T, d): per head q/k/v
// projections of width d/m, logits scaled by 1/sqrt(d/m), max-subtracted row
// softmax, weighted value sum, concat, output projection. Captures one
// AttentionRecord per head. layer_index only labels records and errors.
std::pair<Tensor, std::vector<AttentionRecord>> mhsa_forward(const Tensor& x,
                                                             const BlockWeights& w,
                                                             const ViTConfig& cfg,
                                                             int layer_index);

// Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)) with exact-erf GELU.
Tensor block_forward(const Tensor& x, const BlockWeights& w, const ViTConfig& cfg,
                     int layer_index, std::vector<AttentionRecord>* records);

struct ForwardResult {
    Tensor embeddings;                     // (T, d)
    std::vector<AttentionRecord> records;  // (layer, head) order, L * m entries
};

ForwardResult forward_with_attention(const RgbImage& img, const ViTConfig& cfg,
                                     const VitWeights& w);

// Forward-mode directional derivative of block_forward at x along dx,
// computed in double precision (the reference side of the finite-difference
// probe). dx has one double per entry of x.
std::vector<double> block_jvp(const Tensor& x, const std::vector<double>& dx,
                              const BlockWeights& w, const ViTConfig& cfg);

// ----------------------------------------------------------------------------
// Attention bundle files: VSLT tensor files with entries attn/L{layer}/H{head}
// of shape (T, T) plus a JSON meta entry.
// ----------------------------------------------------------------------------

struct BundleMeta {
    int image_size = 0;
    int patch_size = 0;
    int layers = 0;
    int heads = 0;
    bool cls = false;
};

struct AttentionBundle {
    BundleMeta meta;
    std::vector<AttentionRecord> records;  // (layer, head) order
    int tokens = 0;                        // T
};

void save_attention_bundle(const std::string& path, const std::vector<AttentionRecord>& records,
                           const BundleMeta& meta);

// Throws FormatError on missing meta, missing (layer, head) entries, or
// inconsistent shapes.
AttentionBundle load_attention_bundle(const std::string& path);

}  // namespace vitsem
