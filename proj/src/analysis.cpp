#include "vitsem/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vitsem/errors.hpp"

namespace vitsem {

namespace {

// N x N patch-patch view of a (possibly CLS-augmented) attention matrix.
std::vector<double> patch_row(const Tensor& alpha, size_t i, bool cls) {
    const size_t T = alpha.shape[0];
    const size_t n = cls ? T - 1 : T;
    const size_t skip = cls ? 1 : 0;
    const float* row = alpha.data.data() + (i + skip) * T + skip;
    return std::vector<double>(row, row + n);
}

size_t patch_count(const Tensor& alpha, bool cls) {
    return cls ? alpha.shape[0] - 1 : alpha.shape[0];
}

std::optional<double> mean_of(const std::vector<double>& values) {
    if (values.empty()) return std::nullopt;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

double detection_threshold(const std::vector<double>& alpha_row, double gamma) {
    if (!(gamma > 0.0)) {
        throw ConfigError("detection_threshold: gamma must be positive");
    }
    double sum = 0.0;
    for (double v : alpha_row) sum += v;
    return gamma * sum / static_cast<double>(alpha_row.size());
}

AttendedSet attended_set(const std::vector<double>& alpha_row, double gamma,
                         const PatchStats& stats, int i) {
    if (alpha_row.size() != stats.t.size()) {
        throw ConfigError("attended_set: row length " + std::to_string(alpha_row.size()) +
                          " does not match patch count " + std::to_string(stats.t.size()));
    }
    AttendedSet att;
    att.start = i;
    att.threshold = detection_threshold(alpha_row, gamma);
    for (size_t j = 0; j < alpha_row.size(); ++j) {
        if (alpha_row[j] >= att.threshold) {
            att.members.push_back(static_cast<int>(j));
            if (stats.identity[j] == PatchIdentity::Keypoint) {
                att.key_members.push_back(static_cast<int>(j));
            } else {
                att.non_members.push_back(static_cast<int>(j));
            }
        }
    }
    return att;
}

InterrelationScore theta(const AttendedSet& att, const PatchStats& stats) {
    InterrelationScore score;
    score.start = att.start;
    if (att.members.empty()) {
        score.defined = false;
        return score;
    }
    score.defined = true;
    const double num_unweighted = static_cast<double>(att.key_members.size());
    const double non = static_cast<double>(att.non_members.size());
    score.unweighted = num_unweighted / (non + num_unweighted);

    double t_sum = 0.0;
    for (int j : att.key_members) t_sum += stats.t[j];
    // S_i nonempty with no keypoint members means non > 0, so 0/non = 0;
    // no keypoint members AND no non members cannot happen here.
    score.weighted = t_sum / (non + t_sum);
    return score;
}

GlobalScores global_thetas(const Tensor& alpha, const PatchStats& stats, double gamma,
                           int layer, int head) {
    const size_t n = stats.t.size();
    if (alpha.shape.size() != 2 || alpha.shape[0] != alpha.shape[1] || alpha.shape[0] != n) {
        throw ConfigError("global_thetas: attention matrix does not match patch count");
    }
    GlobalScores g;
    g.layer = layer;
    g.head = head;

    std::vector<double> key_thetas, non_thetas;
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> row(alpha.data.begin() + i * n, alpha.data.begin() + (i + 1) * n);
        const AttendedSet att = attended_set(row, gamma, stats, static_cast<int>(i));
        const InterrelationScore sc = theta(att, stats);
        if (!sc.defined) {
            ++g.undefined_count;
            continue;
        }
        if (stats.identity[i] == PatchIdentity::Keypoint) {
            key_thetas.push_back(sc.weighted);
        } else {
            non_thetas.push_back(sc.weighted);
        }
    }
    g.theta_kk = mean_of(key_thetas);
    g.theta_nk = mean_of(non_thetas);
    // Computing the cross scores as 1 - x keeps each pair summing to 1
    // exactly in floating point.
    if (g.theta_kk) g.theta_kn = 1.0 - *g.theta_kk;
    if (g.theta_nk) g.theta_nn = 1.0 - *g.theta_nk;
    return g;
}

std::vector<double> per_patch_mean_theta(const std::vector<AttentionRecord>& records,
                                         const PatchStats& stats, double gamma, bool cls) {
    if (records.empty()) {
        throw ConfigError("per_patch_mean_theta: at least one attention record required");
    }
    const size_t n = stats.t.size();
    std::vector<double> sums(n, 0.0);
    std::vector<int> counts(n, 0);
    for (const AttentionRecord& rec : records) {
        if (patch_count(rec.alpha, cls) != n) {
            throw ConfigError("per_patch_mean_theta: record size does not match patch count");
        }
        for (size_t i = 0; i < n; ++i) {
            const std::vector<double> row = patch_row(rec.alpha, i, cls);
            const InterrelationScore sc =
                theta(attended_set(row, gamma, stats, static_cast<int>(i)), stats);
            if (sc.defined) {
                sums[i] += sc.weighted;
                ++counts[i];
            }
        }
    }
    std::vector<double> mean(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (counts[i] > 0) mean[i] = sums[i] / counts[i];
    }
    return mean;
}

double focus_index_row(const double* row, size_t n) {
    double lo = row[0], hi = row[0];
    for (size_t j = 1; j < n; ++j) {
        lo = std::min(lo, row[j]);
        hi = std::max(hi, row[j]);
    }
    if (hi == lo) {
        // Constant row: maximally unfocused by convention.
        return std::log(static_cast<double>(n));
    }
    const double span = hi - lo;
    double sum = 0.0;
    std::vector<double> p(n);
    for (size_t j = 0; j < n; ++j) {
        p[j] = (row[j] - lo) / span;
        sum += p[j];
    }
    double entropy = 0.0;
    for (size_t j = 0; j < n; ++j) {
        const double q = p[j] / sum;
        if (q > 0.0) entropy -= q * std::log(q);
    }
    return entropy;
}

double focus_index(const Tensor& alpha) {
    if (alpha.shape.size() != 2 || alpha.shape[0] != alpha.shape[1] || alpha.shape[0] == 0) {
        throw ConfigError("focus_index: expected a square attention matrix");
    }
    const size_t n = alpha.shape[0];
    double total = 0.0;
    std::vector<double> row(n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            row[j] = alpha.data[i * n + j];
        }
        total += focus_index_row(row.data(), n);
    }
    return total / static_cast<double>(n);
}

LayerProfile layer_profile(const std::vector<AttentionRecord>& records, const PatchStats& stats,
                           double gamma, int layers, int heads, bool cls) {
    // Index records and demand completeness.
    std::vector<const AttentionRecord*> slot(static_cast<size_t>(layers) * heads, nullptr);
    for (const AttentionRecord& rec : records) {
        if (rec.layer < 0 || rec.layer >= layers || rec.head < 0 || rec.head >= heads) {
            throw FormatError("layer_profile: record (layer " + std::to_string(rec.layer) +
                              ", head " + std::to_string(rec.head) + ") outside the declared grid");
        }
        slot[static_cast<size_t>(rec.layer) * heads + rec.head] = &rec;
    }
    for (int l = 0; l < layers; ++l) {
        for (int h = 0; h < heads; ++h) {
            if (!slot[static_cast<size_t>(l) * heads + h]) {
                throw FormatError("layer_profile: missing attention record for layer " +
                                  std::to_string(l) + " head " + std::to_string(h));
            }
        }
    }

    const size_t n = stats.t.size();
    LayerProfile profile;
    profile.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        LayerProfileRow row;
        row.layer = l;
        std::vector<double> kks, nks, focuses;
        for (int h = 0; h < heads; ++h) {
            const AttentionRecord& rec = *slot[static_cast<size_t>(l) * heads + h];
            if (patch_count(rec.alpha, cls) != n) {
                throw ConfigError("layer_profile: attention matrix size does not match stats");
            }
            // Slice the patch-patch submatrix once; analysis never sees CLS.
            Tensor sub;
            if (cls) {
                sub = Tensor({static_cast<uint32_t>(n), static_cast<uint32_t>(n)});
                for (size_t i = 0; i < n; ++i) {
                    const std::vector<double> r = patch_row(rec.alpha, i, cls);
                    for (size_t j = 0; j < n; ++j) {
                        sub.data[i * n + j] = static_cast<float>(r[j]);
                    }
                }
            } else {
                sub = rec.alpha;
            }

            HeadProfile hp;
            hp.scores = global_thetas(sub, stats, gamma, l, h);
            hp.focus = focus_index(sub);
            if (hp.scores.theta_kk) kks.push_back(*hp.scores.theta_kk);
            if (hp.scores.theta_nk) nks.push_back(*hp.scores.theta_nk);
            focuses.push_back(hp.focus);
            row.heads.push_back(std::move(hp));
        }
        row.mean_kk = mean_of(kks);
        row.mean_nk = mean_of(nks);
        if (row.mean_kk) row.mean_kn = 1.0 - *row.mean_kk;
        if (row.mean_nk) row.mean_nn = 1.0 - *row.mean_nk;
        row.mean_focus = *mean_of(focuses);
        profile.push_back(std::move(row));
    }
    return profile;
}

StageSegmentation segment_stages(const LayerProfile& profile) {
    StageSegmentation seg;
    const int L = static_cast<int>(profile.size());
    if (L < 3) {
        seg.applicable = false;
        return seg;
    }
    seg.applicable = true;

    bool series_complete = true;
    std::vector<double> K(L, 0.0), F(L, 0.0);
    for (int l = 0; l < L; ++l) {
        if (!profile[l].mean_kk) {
            series_complete = false;
            break;
        }
        K[l] = *profile[l].mean_kk;
        F[l] = profile[l].mean_focus;
    }

    int b1 = -1;
    int b2 = -1;
    if (series_complete) {
        double mean_k = 0.0, mean_f = 0.0;
        for (int l = 0; l < L; ++l) {
            mean_k += K[l];
            mean_f += F[l];
        }
        mean_k /= L;
        mean_f /= L;
        for (int l = 0; l < L; ++l) {
            if (K[l] > mean_k && F[l] < mean_f) {
                b1 = l;
                break;
            }
        }
        if (b1 >= 0) {
            // Two consecutive decreases of K (or increases of F) ending at l+1.
            for (int l = b1 + 1; l + 1 < L; ++l) {
                const bool k_falls = K[l] < K[l - 1] && K[l + 1] < K[l];
                const bool f_rises = F[l] > F[l - 1] && F[l + 1] > F[l];
                if (k_falls || f_rises) {
                    b2 = l;
                    break;
                }
            }
        }
    }

    if (b1 < 0) {
        b1 = L / 3;
        seg.fallback = true;
    }
    if (b2 < 0) {
        b2 = 2 * L / 3;
        seg.fallback = true;
    }
    b1 = std::clamp(b1, 1, L - 2);
    b2 = std::clamp(b2, b1 + 1, L - 1);
    seg.b1 = b1;
    seg.b2 = b2;
    return seg;
}

}  // namespace vitsem
