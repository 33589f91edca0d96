#include "vitsem/vit.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "vitsem/errors.hpp"
#include "vitsem/kernels.hpp"
#include "vitsem/rng.hpp"

namespace vitsem {

namespace {

constexpr float kLnEps = 1e-5f;

std::string layer_tag(int layer) { return "layer " + std::to_string(layer); }

void check_finite(const Tensor& x, int layer_index) {
    for (float v : x.data) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite value entering " + layer_tag(layer_index));
        }
    }
}

// y[t, o] = sum_j W[o, j] x[t, j] + b[o] for row-major W (out, in).
void linear(const float* x, size_t rows, size_t in, const std::vector<float>& W,
            const std::vector<float>& b, size_t out, float* y) {
    for (size_t t = 0; t < rows; ++t) {
        const float* xt = x + t * in;
        float* yt = y + t * out;
        for (size_t o = 0; o < out; ++o) {
            yt[o] = kernels::dot(W.data() + o * in, xt, in) + b[o];
        }
    }
}

void layer_norm(const float* x, size_t rows, size_t d, const std::vector<float>& gamma,
                const std::vector<float>& beta, float* y) {
    for (size_t t = 0; t < rows; ++t) {
        const float* xt = x + t * d;
        float* yt = y + t * d;
        const float mean = kernels::reduce_sum(xt, d) / static_cast<float>(d);
        float var = 0.0f;
        for (size_t i = 0; i < d; ++i) {
            const float c = xt[i] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float inv = 1.0f / std::sqrt(var + kLnEps);
        for (size_t i = 0; i < d; ++i) {
            yt[i] = gamma[i] * (xt[i] - mean) * inv + beta[i];
        }
    }
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

}  // namespace

void ViTConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || layers < 0 || heads < 1 || embed_dim < 1) {
        throw ConfigError("vit: sizes must be positive (layers may be 0)");
    }
    if (image_size % patch_size != 0) {
        throw ConfigError("vit: image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (embed_dim % heads != 0) {
        throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
    if (!(mlp_ratio > 0.0)) {
        throw ConfigError("vit: mlp_ratio must be positive");
    }
}

// ============================================================================
// Weights
// ============================================================================

VitWeights init_weights(const ViTConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    auto gauss = [&rng](size_t n) {
        std::vector<float> v(n);
        for (float& x : v) x = static_cast<float>(rng.normal() * 0.02);
        return v;
    };

    const size_t d = static_cast<size_t>(cfg.embed_dim);
    const size_t patch_len = 3u * cfg.patch_size * cfg.patch_size;
    const size_t hidden = static_cast<size_t>(cfg.mlp_hidden());

    VitWeights w;
    w.patch_proj = gauss(d * patch_len);
    w.patch_bias.assign(d, 0.0f);
    if (cfg.use_cls_token) w.cls_token = gauss(d);
    w.pos_embed = gauss(static_cast<size_t>(cfg.tokens()) * d);
    w.blocks.resize(cfg.layers);
    for (BlockWeights& b : w.blocks) {
        b.ln1_gamma.assign(d, 1.0f);
        b.ln1_beta.assign(d, 0.0f);
        b.wq = gauss(d * d);
        b.wk = gauss(d * d);
        b.wv = gauss(d * d);
        b.wo = gauss(d * d);
        b.bq.assign(d, 0.0f);
        b.bk.assign(d, 0.0f);
        b.bv.assign(d, 0.0f);
        b.bo.assign(d, 0.0f);
        b.ln2_gamma.assign(d, 1.0f);
        b.ln2_beta.assign(d, 0.0f);
        b.w1 = gauss(hidden * d);
        b.b1.assign(hidden, 0.0f);
        b.w2 = gauss(d * hidden);
        b.b2.assign(d, 0.0f);
    }
    return w;
}

// ============================================================================
// Forward pass
// ============================================================================

Tensor patch_embed(const RgbImage& img, const ViTConfig& cfg, const VitWeights& w) {
    cfg.validate();
    if (img.width != cfg.image_size || img.height != cfg.image_size) {
        throw ConfigError("patch_embed: image is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " but config expects " +
                          std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
    }
    const int P = cfg.patch_size;
    const int side = cfg.grid_side();
    const size_t d = static_cast<size_t>(cfg.embed_dim);
    const size_t patch_len = 3u * P * P;
    const int T = cfg.tokens();
    const int first_patch_token = cfg.use_cls_token ? 1 : 0;

    Tensor out({static_cast<uint32_t>(T), static_cast<uint32_t>(cfg.embed_dim)});
    std::vector<float> patch(patch_len);
    for (int pr = 0; pr < side; ++pr) {
        for (int pc = 0; pc < side; ++pc) {
            size_t k = 0;
            for (int py = 0; py < P; ++py) {
                const float* src = img.pixel(pc * P, pr * P + py);
                for (int px = 0; px < 3 * P; ++px) {
                    patch[k++] = src[px];
                }
            }
            const int token = first_patch_token + pr * side + pc;
            float* dst = out.data.data() + static_cast<size_t>(token) * d;
            for (size_t o = 0; o < d; ++o) {
                dst[o] = kernels::dot(w.patch_proj.data() + o * patch_len, patch.data(),
                                      patch_len) +
                         w.patch_bias[o];
            }
        }
    }
    if (cfg.use_cls_token) {
        std::copy(w.cls_token.begin(), w.cls_token.end(), out.data.begin());
    }
    // Learned position embedding, one row per token.
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += w.pos_embed[i];
    }
    return out;
}

std::pair<Tensor, std::vector<AttentionRecord>> mhsa_forward(const Tensor& x,
                                                             const BlockWeights& w,
                                                             const ViTConfig& cfg,
                                                             int layer_index) {
    const size_t T = x.shape[0];
    const size_t d = x.shape[1];
    const size_t m = static_cast<size_t>(cfg.heads);
    const size_t dh = d / m;
    check_finite(x, layer_index);

    std::vector<float> q(T * d), k(T * d), v(T * d);
    linear(x.data.data(), T, d, w.wq, w.bq, d, q.data());
    linear(x.data.data(), T, d, w.wk, w.bk, d, k.data());
    linear(x.data.data(), T, d, w.wv, w.bv, d, v.data());

    const float logit_scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<float> concat(T * d, 0.0f);
    std::vector<AttentionRecord> records;
    records.reserve(m);

    std::vector<float> logits(T);
    for (size_t h = 0; h < m; ++h) {
        AttentionRecord rec;
        rec.layer = layer_index;
        rec.head = static_cast<int>(h);
        rec.alpha = Tensor({static_cast<uint32_t>(T), static_cast<uint32_t>(T)});
        const size_t off = h * dh;

        for (size_t i = 0; i < T; ++i) {
            const float* qi = q.data() + i * d + off;
            for (size_t j = 0; j < T; ++j) {
                logits[j] = kernels::dot(qi, k.data() + j * d + off, dh) * logit_scale;
            }
            // Max-subtracted softmax row.
            const float peak = kernels::reduce_max(logits.data(), T);
            float* row = rec.alpha.data.data() + i * T;
            for (size_t j = 0; j < T; ++j) {
                row[j] = std::exp(logits[j] - peak);
            }
            const float total = kernels::reduce_sum(row, T);
            kernels::scale(row, 1.0f / total, row, T);

            // o_i = sum_j alpha_ij v_j, accumulated into the head's slice.
            float* oi = concat.data() + i * d + off;
            for (size_t j = 0; j < T; ++j) {
                kernels::axpy(row[j], v.data() + j * d + off, oi, dh);
            }
        }
        records.push_back(std::move(rec));
    }

    Tensor out({static_cast<uint32_t>(T), static_cast<uint32_t>(d)});
    linear(concat.data(), T, d, w.wo, w.bo, d, out.data.data());
    return {std::move(out), std::move(records)};
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, const ViTConfig& cfg,
                     int layer_index, std::vector<AttentionRecord>* records) {
    const size_t T = x.shape[0];
    const size_t d = x.shape[1];

    Tensor normed({static_cast<uint32_t>(T), static_cast<uint32_t>(d)});
    layer_norm(x.data.data(), T, d, w.ln1_gamma, w.ln1_beta, normed.data.data());
    auto [attn_out, recs] = mhsa_forward(normed, w, cfg, layer_index);
    if (records) {
        for (AttentionRecord& r : recs) records->push_back(std::move(r));
    }

    Tensor h({static_cast<uint32_t>(T), static_cast<uint32_t>(d)});
    for (size_t i = 0; i < h.data.size(); ++i) {
        h.data[i] = x.data[i] + attn_out.data[i];
    }

    layer_norm(h.data.data(), T, d, w.ln2_gamma, w.ln2_beta, normed.data.data());
    const size_t hidden = w.b1.size();
    std::vector<float> u(T * hidden);
    linear(normed.data.data(), T, d, w.w1, w.b1, hidden, u.data());
    for (float& val : u) val = gelu(val);
    Tensor mlp_out({static_cast<uint32_t>(T), static_cast<uint32_t>(d)});
    linear(u.data(), T, hidden, w.w2, w.b2, d, mlp_out.data.data());

    Tensor out({static_cast<uint32_t>(T), static_cast<uint32_t>(d)});
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = h.data[i] + mlp_out.data[i];
    }
    return out;
}

void validate_attention_record(const AttentionRecord& rec) {
    if (rec.alpha.shape.size() != 2 || rec.alpha.shape[0] != rec.alpha.shape[1]) {
        throw NumericError("attention record layer " + std::to_string(rec.layer) + " head " +
                           std::to_string(rec.head) + ": matrix is not square");
    }
    const size_t T = rec.alpha.shape[0];
    for (size_t i = 0; i < T; ++i) {
        const float* row = rec.alpha.data.data() + i * T;
        double sum = 0.0;
        for (size_t j = 0; j < T; ++j) {
            if (row[j] < 0.0f) {
                throw NumericError("attention record layer " + std::to_string(rec.layer) +
                                   " head " + std::to_string(rec.head) + ": negative entry in row " +
                                   std::to_string(i));
            }
            sum += row[j];
        }
        if (std::abs(sum - 1.0) > 1e-5) {
            throw NumericError("attention record layer " + std::to_string(rec.layer) + " head " +
                               std::to_string(rec.head) + ": row " + std::to_string(i) +
                               " sums to " + std::to_string(sum));
        }
    }
}

ForwardResult forward_with_attention(const RgbImage& img, const ViTConfig& cfg,
                                     const VitWeights& w) {
    ForwardResult result;
    result.embeddings = patch_embed(img, cfg, w);
    result.records.reserve(static_cast<size_t>(cfg.layers) * cfg.heads);
    for (int l = 0; l < cfg.layers; ++l) {
        result.embeddings = block_forward(result.embeddings, w.blocks[l], cfg, l, &result.records);
    }
    for (const AttentionRecord& rec : result.records) {
        validate_attention_record(rec);
    }
    return result;
}

// ============================================================================
// Forward-mode directional derivative through one block
// ============================================================================

namespace {

// Double-precision tangent propagation mirroring block_forward operation for
// operation; the primal is recomputed in double alongside the tangent.
struct Dual {
    std::vector<double> val;
    std::vector<double> tan;
};

Dual dual_layer_norm(const Dual& x, size_t rows, size_t d, const std::vector<float>& gamma,
                     const std::vector<float>& beta) {
    Dual y{std::vector<double>(x.val.size()), std::vector<double>(x.val.size())};
    for (size_t t = 0; t < rows; ++t) {
        const double* xv = x.val.data() + t * d;
        const double* xt = x.tan.data() + t * d;
        double mean = 0.0, dmean = 0.0;
        for (size_t i = 0; i < d; ++i) {
            mean += xv[i];
            dmean += xt[i];
        }
        mean /= static_cast<double>(d);
        dmean /= static_cast<double>(d);
        double var = 0.0, dvar = 0.0;
        for (size_t i = 0; i < d; ++i) {
            const double c = xv[i] - mean;
            const double dc = xt[i] - dmean;
            var += c * c;
            dvar += 2.0 * c * dc;
        }
        var /= static_cast<double>(d);
        dvar /= static_cast<double>(d);
        const double s = std::sqrt(var + static_cast<double>(kLnEps));
        const double inv = 1.0 / s;
        const double ds_term = dvar / (2.0 * s * s * s);
        for (size_t i = 0; i < d; ++i) {
            const double c = xv[i] - mean;
            const double dc = xt[i] - dmean;
            y.val[t * d + i] = gamma[i] * c * inv + beta[i];
            y.tan[t * d + i] = gamma[i] * (dc * inv - c * ds_term);
        }
    }
    return y;
}

Dual dual_linear(const Dual& x, size_t rows, size_t in, const std::vector<float>& W,
                 const std::vector<float>& b, size_t out) {
    Dual y{std::vector<double>(rows * out), std::vector<double>(rows * out)};
    for (size_t t = 0; t < rows; ++t) {
        for (size_t o = 0; o < out; ++o) {
            double v = b[o], dv = 0.0;
            const float* wrow = W.data() + o * in;
            for (size_t j = 0; j < in; ++j) {
                v += static_cast<double>(wrow[j]) * x.val[t * in + j];
                dv += static_cast<double>(wrow[j]) * x.tan[t * in + j];
            }
            y.val[t * out + o] = v;
            y.tan[t * out + o] = dv;
        }
    }
    return y;
}

}  // namespace

std::vector<double> block_jvp(const Tensor& x, const std::vector<double>& dx,
                              const BlockWeights& w, const ViTConfig& cfg) {
    const size_t T = x.shape[0];
    const size_t d = x.shape[1];
    const size_t m = static_cast<size_t>(cfg.heads);
    const size_t dh = d / m;

    Dual in{std::vector<double>(x.data.begin(), x.data.end()), dx};

    // --- attention branch ---
    Dual n1 = dual_layer_norm(in, T, d, w.ln1_gamma, w.ln1_beta);
    Dual q = dual_linear(n1, T, d, w.wq, w.bq, d);
    Dual k = dual_linear(n1, T, d, w.wk, w.bk, d);
    Dual v = dual_linear(n1, T, d, w.wv, w.bv, d);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Dual concat{std::vector<double>(T * d, 0.0), std::vector<double>(T * d, 0.0)};
    std::vector<double> z(T), dz(T), a(T), da(T);
    for (size_t h = 0; h < m; ++h) {
        const size_t off = h * dh;
        for (size_t i = 0; i < T; ++i) {
            for (size_t j = 0; j < T; ++j) {
                double zz = 0.0, dzz = 0.0;
                for (size_t c = 0; c < dh; ++c) {
                    const size_t qi = i * d + off + c;
                    const size_t kj = j * d + off + c;
                    zz += q.val[qi] * k.val[kj];
                    dzz += q.tan[qi] * k.val[kj] + q.val[qi] * k.tan[kj];
                }
                z[j] = zz * scale;
                dz[j] = dzz * scale;
            }
            double peak = z[0];
            for (size_t j = 1; j < T; ++j) peak = std::max(peak, z[j]);
            double total = 0.0;
            for (size_t j = 0; j < T; ++j) {
                a[j] = std::exp(z[j] - peak);
                total += a[j];
            }
            double dot_adz = 0.0;
            for (size_t j = 0; j < T; ++j) {
                a[j] /= total;
                dot_adz += a[j] * dz[j];
            }
            for (size_t j = 0; j < T; ++j) {
                da[j] = a[j] * (dz[j] - dot_adz);
            }
            for (size_t c = 0; c < dh; ++c) {
                double o = 0.0, od = 0.0;
                for (size_t j = 0; j < T; ++j) {
                    const size_t vj = j * d + off + c;
                    o += a[j] * v.val[vj];
                    od += da[j] * v.val[vj] + a[j] * v.tan[vj];
                }
                concat.val[i * d + off + c] = o;
                concat.tan[i * d + off + c] = od;
            }
        }
    }
    Dual attn = dual_linear(concat, T, d, w.wo, w.bo, d);

    Dual hmid{std::vector<double>(T * d), std::vector<double>(T * d)};
    for (size_t i = 0; i < T * d; ++i) {
        hmid.val[i] = in.val[i] + attn.val[i];
        hmid.tan[i] = in.tan[i] + attn.tan[i];
    }

    // --- MLP branch ---
    Dual n2 = dual_layer_norm(hmid, T, d, w.ln2_gamma, w.ln2_beta);
    const size_t hidden = w.b1.size();
    Dual u = dual_linear(n2, T, d, w.w1, w.b1, hidden);
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (size_t i = 0; i < u.val.size(); ++i) {
        const double t = u.val[i];
        const double phi = 0.5 * (1.0 + std::erf(t * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * t * t);
        u.tan[i] = (phi + t * pdf) * u.tan[i];
        u.val[i] = t * phi;
    }
    Dual mlp = dual_linear(u, T, hidden, w.w2, w.b2, d);

    std::vector<double> out(T * d);
    for (size_t i = 0; i < T * d; ++i) {
        out[i] = hmid.tan[i] + mlp.tan[i];
    }
    return out;
}

// ============================================================================
// Attention bundles
// ============================================================================

namespace {

std::string attn_name(int layer, int head) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "attn/L%d/H%d", layer, head);
    return buf;
}

}  // namespace

void save_attention_bundle(const std::string& path, const std::vector<AttentionRecord>& records,
                           const BundleMeta& meta) {
    TensorFile file;
    for (const AttentionRecord& rec : records) {
        file.entries[attn_name(rec.layer, rec.head)] = rec.alpha;
    }
    nlohmann::json j;
    j["image_size"] = meta.image_size;
    j["patch_size"] = meta.patch_size;
    j["layers"] = meta.layers;
    j["heads"] = meta.heads;
    j["cls"] = meta.cls;
    file.meta_json = j.dump();
    save_tensor_file(path, file);
}

AttentionBundle load_attention_bundle(const std::string& path) {
    TensorFile file = load_tensor_file(path);
    if (file.meta_json.empty()) {
        throw FormatError("attention bundle missing the meta entry: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(file.meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("attention bundle meta is not valid JSON: " + std::string(e.what()));
    }

    AttentionBundle bundle;
    try {
        bundle.meta.image_size = j.at("image_size").get<int>();
        bundle.meta.patch_size = j.at("patch_size").get<int>();
        bundle.meta.layers = j.at("layers").get<int>();
        bundle.meta.heads = j.at("heads").get<int>();
        bundle.meta.cls = j.at("cls").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("attention bundle meta missing fields: " + std::string(e.what()));
    }
    if (bundle.meta.layers < 1 || bundle.meta.heads < 1 || bundle.meta.patch_size < 1 ||
        bundle.meta.image_size < 1) {
        throw FormatError("attention bundle meta has non-positive dimensions: " + path);
    }
    if (bundle.meta.image_size % bundle.meta.patch_size != 0) {
        throw FormatError("attention bundle meta image_size is not divisible by patch_size: " +
                          path);
    }
    const int side = bundle.meta.image_size / bundle.meta.patch_size;
    const int expected_tokens = side * side + (bundle.meta.cls ? 1 : 0);

    int tokens = -1;
    for (int l = 0; l < bundle.meta.layers; ++l) {
        for (int h = 0; h < bundle.meta.heads; ++h) {
            auto it = file.entries.find(attn_name(l, h));
            if (it == file.entries.end()) {
                throw FormatError("attention bundle missing entry " + attn_name(l, h) + ": " +
                                  path);
            }
            const Tensor& t = it->second;
            if (t.shape.size() != 2 || t.shape[0] != t.shape[1] || t.shape[0] == 0) {
                throw FormatError("attention bundle entry " + attn_name(l, h) +
                                  " is not a square matrix: " + path);
            }
            if (tokens < 0) {
                tokens = static_cast<int>(t.shape[0]);
            } else if (tokens != static_cast<int>(t.shape[0])) {
                throw FormatError("attention bundle entries disagree on token count: " + path);
            }
            AttentionRecord rec;
            rec.layer = l;
            rec.head = h;
            rec.alpha = t;
            bundle.records.push_back(std::move(rec));
        }
    }
    if (tokens != expected_tokens) {
        throw FormatError("attention bundle token count " + std::to_string(tokens) +
                          " disagrees with the meta geometry (expected " +
                          std::to_string(expected_tokens) + "): " + path);
    }
    bundle.tokens = tokens;
    return bundle;
}

}  // namespace vitsem
