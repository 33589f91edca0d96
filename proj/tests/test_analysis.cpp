#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "vitsem/analysis.hpp"
#include "vitsem/errors.hpp"
#include "vitsem/patch_grid.hpp"
#include "vitsem/tensor.hpp"

using namespace vitsem;

namespace {

// Straight-line reimplementation of the per-head global scores for the
// randomized oracle comparison. Shares no code with the library.
struct OracleScores {
    std::optional<double> kk, nk;
    int undefined = 0;
};

OracleScores oracle_global(const Tensor& alpha, const PatchStats& stats, double gamma) {
    const size_t n = stats.t.size();
    OracleScores res;
    std::vector<double> kk, nk;
    for (size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) sum += static_cast<double>(alpha.at(i, j));
        const double thr = gamma * sum / static_cast<double>(n);
        double t_total = 0.0;
        int key_count = 0, non_count = 0;
        for (size_t j = 0; j < n; ++j) {
            if (static_cast<double>(alpha.at(i, j)) >= thr) {
                if (stats.identity[j] == PatchIdentity::Keypoint) {
                    ++key_count;
                    t_total += stats.t[j];
                } else {
                    ++non_count;
                }
            }
        }
        if (key_count + non_count == 0) {
            ++res.undefined;
            continue;
        }
        const double weighted = t_total / (static_cast<double>(non_count) + t_total);
        if (stats.identity[i] == PatchIdentity::Keypoint) {
            kk.push_back(weighted);
        } else {
            nk.push_back(weighted);
        }
    }
    auto mean = [](const std::vector<double>& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    res.kk = mean(kk);
    res.nk = mean(nk);
    return res;
}

Tensor tensor_from(const std::vector<std::vector<float>>& rows) {
    const uint32_t n = static_cast<uint32_t>(rows.size());
    Tensor t(std::vector<uint32_t>{n, n});
    for (uint32_t i = 0; i < n; ++i) {
        REQUIRE(rows[i].size() == n);
        for (uint32_t j = 0; j < n; ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

LayerProfileRow profile_row(int layer, std::optional<double> kk, double focus) {
    LayerProfileRow row;
    row.layer = layer;
    row.mean_kk = kk;
    if (kk) row.mean_kn = 1.0 - *kk;
    row.mean_focus = focus;
    return row;
}

}  // namespace

TEST_CASE("detection_threshold is gamma times the row mean") {
    CHECK(detection_threshold({0.5, 0.25, 0.25}, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(detection_threshold({0.5, 0.25, 0.25}, 2.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(detection_threshold({0.1, 0.1, 0.1, 0.1}, 1.0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(detection_threshold({0.0, 0.0}, 1.0) == 0.0);
    CHECK_THROWS_AS(detection_threshold({0.5, 0.5}, 0.0), ConfigError);
    CHECK_THROWS_AS(detection_threshold({0.5, 0.5}, -1.0), ConfigError);
}

TEST_CASE("attended_set membership includes exact-threshold ties") {
    const PatchStats stats = testsup::stats_from_counts({2, 0, 1});
    const std::vector<double> row = {0.5, 0.25, 0.25};

    // gamma = 1: threshold 1/3, only the 0.5 entry makes it
    const AttendedSet a1 = attended_set(row, 1.0, stats, 0);
    CHECK(a1.members == std::vector<int>{0});
    CHECK(a1.key_members == std::vector<int>{0});
    CHECK(a1.non_members.empty());

    // gamma = 0.75: threshold exactly 0.25, ties are in
    const AttendedSet a2 = attended_set(row, 0.75, stats, 0);
    CHECK(a2.members == std::vector<int>{0, 1, 2});
    CHECK(a2.key_members == std::vector<int>{0, 2});
    CHECK(a2.non_members == std::vector<int>{1});

    // enormous gamma: empty set
    const AttendedSet a3 = attended_set(row, 1e9, stats, 0);
    CHECK(a3.members.empty());

    CHECK_THROWS_AS(attended_set({0.5, 0.5}, 1.0, stats, 0), ConfigError);
}

TEST_CASE("theta hand case: weighted 4/6, unweighted 1/2") {
    // attended set: key patches {0, 2} with t = 3 and 1, non patches {1, 3}
    const PatchStats stats = testsup::stats_from_counts({3, 0, 1, 0});
    AttendedSet att;
    att.start = 0;
    att.members = {0, 1, 2, 3};
    att.key_members = {0, 2};
    att.non_members = {1, 3};
    const InterrelationScore sc = theta(att, stats);
    CHECK(sc.defined);
    CHECK(sc.weighted == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK(sc.unweighted == doctest::Approx(0.5).epsilon(1e-15));

    AttendedSet empty;
    empty.start = 1;
    CHECK_FALSE(theta(empty, stats).defined);
}

TEST_CASE("weighted equals unweighted when every keypoint patch has t = 1") {
    const PatchStats stats = testsup::stats_from_counts({1, 0, 1, 1, 0});
    AttendedSet att;
    att.members = {0, 1, 2, 3, 4};
    att.key_members = {0, 2, 3};
    att.non_members = {1, 4};
    const InterrelationScore sc = theta(att, stats);
    CHECK(sc.weighted == sc.unweighted);
    CHECK(sc.weighted == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
}

TEST_CASE("global_thetas matches the oracle on randomized inputs") {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> nd(4, 24);
    std::uniform_int_distribution<int> td(0, 3);
    std::uniform_real_distribution<double> gd(0.5, 2.5);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = nd(rng);
        std::vector<int> t(static_cast<size_t>(n));
        for (auto& v : t) v = td(rng);
        const PatchStats stats = testsup::stats_from_counts(t);
        const Tensor alpha = testsup::random_attention(n, rng);
        const double gamma = gd(rng);

        const GlobalScores got = global_thetas(alpha, stats, gamma, 1, 2);
        const OracleScores want = oracle_global(alpha, stats, gamma);

        CHECK(got.layer == 1);
        CHECK(got.head == 2);
        CHECK(got.undefined_count == want.undefined);
        REQUIRE(got.theta_kk.has_value() == want.kk.has_value());
        REQUIRE(got.theta_nk.has_value() == want.nk.has_value());
        if (want.kk) {
            CHECK(*got.theta_kk == doctest::Approx(*want.kk).epsilon(1e-12));
            // complementarity holds exactly, not just approximately
            CHECK(*got.theta_kk + *got.theta_kn == 1.0);
        }
        if (want.nk) {
            CHECK(*got.theta_nk == doctest::Approx(*want.nk).epsilon(1e-12));
            CHECK(*got.theta_nk + *got.theta_nn == 1.0);
        }
    }
}

TEST_CASE("global_thetas marks one-sided grids not-applicable") {
    std::mt19937_64 rng(11);
    const Tensor alpha = testsup::random_attention(6, rng);

    // no keypoint patches anywhere: theta_kk undefined, theta_nk defined
    const GlobalScores none = global_thetas(alpha, testsup::stats_from_counts({0, 0, 0, 0, 0, 0}),
                                            1.0);
    CHECK_FALSE(none.theta_kk.has_value());
    CHECK_FALSE(none.theta_kn.has_value());
    CHECK(none.theta_nk.has_value());
    // every attended set contains only non-keypoint patches: theta_nk = 0
    CHECK(*none.theta_nk == doctest::Approx(0.0));
    CHECK(*none.theta_nn == doctest::Approx(1.0));

    // all keypoint patches: theta_nk undefined
    const GlobalScores all = global_thetas(alpha, testsup::stats_from_counts({1, 2, 1, 1, 3, 1}),
                                           1.0);
    CHECK(all.theta_kk.has_value());
    CHECK_FALSE(all.theta_nk.has_value());
    CHECK_FALSE(all.theta_nn.has_value());

    // size mismatch guard
    CHECK_THROWS_AS(global_thetas(alpha, testsup::stats_from_counts({1, 0}), 1.0), ConfigError);
}

TEST_CASE("growing gamma never grows an attended set") {
    std::mt19937_64 rng(500);
    const Tensor alpha = testsup::random_attention(12, rng);
    const PatchStats stats = testsup::stats_from_counts({1, 0, 2, 0, 0, 1, 0, 0, 3, 0, 1, 0});
    for (int i = 0; i < 12; ++i) {
        std::vector<double> row(12);
        for (int j = 0; j < 12; ++j) row[static_cast<size_t>(j)] = alpha.at(i, j);
        size_t prev = SIZE_MAX;
        for (double gamma : {0.5, 1.0, 2.0, 4.0, 8.0}) {
            const size_t sz = attended_set(row, gamma, stats, i).members.size();
            CHECK(sz <= prev);
            prev = sz;
        }
    }
}

TEST_CASE("focus_index_row hand cases") {
    // [0.4, 0.3, 0.2, 0.1] -> normalized [1, 2/3, 1/3, 0] -> q = [1/2, 1/3, 1/6, 0]
    const std::vector<double> row = {0.4, 0.3, 0.2, 0.1};
    const double q0 = 0.5, q1 = 1.0 / 3.0, q2 = 1.0 / 6.0;
    const double want = -(q0 * std::log(q0) + q1 * std::log(q1) + q2 * std::log(q2));
    CHECK(focus_index_row(row.data(), 4) == doctest::Approx(want).epsilon(1e-12));

    // one-hot: zero entropy
    const std::vector<double> onehot = {0.0, 1.0, 0.0, 0.0};
    CHECK(focus_index_row(onehot.data(), 4) == doctest::Approx(0.0));

    // two-hot: ln 2
    const std::vector<double> twohot = {0.5, 0.0, 0.5, 0.0};
    CHECK(focus_index_row(twohot.data(), 4) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // constant rows carry no preference: defined as ln(n)
    const std::vector<double> flat = {0.25, 0.25, 0.25, 0.25};
    CHECK(focus_index_row(flat.data(), 4) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    const std::vector<double> zeros = {0.0, 0.0, 0.0};
    CHECK(focus_index_row(zeros.data(), 3) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("focus ordering: one-hot < two-hot < uniform at every size") {
    for (int n : {4, 16, 64, 256}) {
        Tensor onehot(std::vector<uint32_t>{static_cast<uint32_t>(n), static_cast<uint32_t>(n)});
        Tensor twohot = onehot, uniform = onehot;
        for (int i = 0; i < n; ++i) {
            onehot.at(i, static_cast<size_t>(i)) = 1.0f;
            twohot.at(i, static_cast<size_t>(i)) = 0.5f;
            twohot.at(i, static_cast<size_t>((i + 1) % n)) = 0.5f;
            for (int j = 0; j < n; ++j) uniform.at(i, j) = 1.0f / static_cast<float>(n);
        }
        const double f1 = focus_index(onehot);
        const double f2 = focus_index(twohot);
        const double fu = focus_index(uniform);
        CHECK(f1 < f2);
        CHECK(f2 < fu);
        CHECK(f1 == doctest::Approx(0.0));
        CHECK(f2 == doctest::Approx(std::log(2.0)).epsilon(1e-6));
        CHECK(fu == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-6));
    }
}

TEST_CASE("per_patch_mean_theta averages across records and skips undefined rows") {
    // Two records over 4 patches; patch identities: {key, non, key, non}.
    const PatchStats stats = testsup::stats_from_counts({2, 0, 1, 0});

    // Record A: every row attends to everything (uniform) -> for each row,
    // attended set = all, weighted theta = (2+1)/(2+3) = 0.6.
    Tensor a = tensor_from({{0.25f, 0.25f, 0.25f, 0.25f},
                            {0.25f, 0.25f, 0.25f, 0.25f},
                            {0.25f, 0.25f, 0.25f, 0.25f},
                            {0.25f, 0.25f, 0.25f, 0.25f}});
    // Record B: each row attends only to patch 0 (key, t=2) -> theta = 1.
    Tensor b = tensor_from({{0.97f, 0.01f, 0.01f, 0.01f},
                            {0.97f, 0.01f, 0.01f, 0.01f},
                            {0.97f, 0.01f, 0.01f, 0.01f},
                            {0.97f, 0.01f, 0.01f, 0.01f}});
    std::vector<AttentionRecord> records(2);
    records[0].alpha = a;
    records[1].layer = 1;
    records[1].alpha = b;

    const std::vector<double> bar = per_patch_mean_theta(records, stats, 1.0);
    REQUIRE(bar.size() == 4);
    for (double v : bar) {
        CHECK(v == doctest::Approx((0.6 + 1.0) / 2.0).epsilon(1e-12));
    }

    // gamma so large every set is empty: all-undefined patches fall back to 0
    const std::vector<double> zeroed = per_patch_mean_theta(records, stats, 1e9);
    for (double v : zeroed) CHECK(v == 0.0);

    CHECK_THROWS_AS(per_patch_mean_theta({}, stats, 1.0), ConfigError);
}

TEST_CASE("layer_profile aggregates per-head scores and demands completeness") {
    std::mt19937_64 rng(42);
    const PatchStats stats = testsup::stats_from_counts({1, 0, 0, 2});
    std::vector<AttentionRecord> records;
    for (int l = 0; l < 2; ++l) {
        for (int h = 0; h < 2; ++h) {
            AttentionRecord rec;
            rec.layer = l;
            rec.head = h;
            rec.alpha = testsup::random_attention(4, rng);
            records.push_back(std::move(rec));
        }
    }

    const LayerProfile profile = layer_profile(records, stats, 1.0, 2, 2);
    REQUIRE(profile.size() == 2);
    for (int l = 0; l < 2; ++l) {
        const LayerProfileRow& row = profile[static_cast<size_t>(l)];
        CHECK(row.layer == l);
        REQUIRE(row.heads.size() == 2);
        double focus_sum = 0.0, kk_sum = 0.0;
        int kk_count = 0;
        for (int h = 0; h < 2; ++h) {
            const GlobalScores direct =
                global_thetas(records[static_cast<size_t>(l) * 2 + h].alpha, stats, 1.0, l, h);
            const HeadProfile& hp = row.heads[static_cast<size_t>(h)];
            CHECK(hp.scores.theta_kk == direct.theta_kk);
            CHECK(hp.scores.theta_nk == direct.theta_nk);
            const double direct_focus =
                focus_index(records[static_cast<size_t>(l) * 2 + h].alpha);
            CHECK(hp.focus == direct_focus);
            focus_sum += hp.focus;
            if (hp.scores.theta_kk) {
                kk_sum += *hp.scores.theta_kk;
                ++kk_count;
            }
        }
        CHECK(row.mean_focus == doctest::Approx(focus_sum / 2.0).epsilon(1e-15));
        REQUIRE(kk_count > 0);
        CHECK(*row.mean_kk == doctest::Approx(kk_sum / kk_count).epsilon(1e-15));
        CHECK(*row.mean_kk + *row.mean_kn == 1.0);
    }

    // a missing (layer, head) slot is an input-completeness failure
    std::vector<AttentionRecord> incomplete(records.begin(), records.end() - 1);
    CHECK_THROWS_AS(layer_profile(incomplete, stats, 1.0, 2, 2), FormatError);

    // a record outside the declared grid is rejected too
    std::vector<AttentionRecord> stray = records;
    stray[3].head = 5;
    CHECK_THROWS_AS(layer_profile(stray, stats, 1.0, 2, 2), FormatError);
}

TEST_CASE("layer_profile slices away a leading CLS token") {
    std::mt19937_64 rng(77);
    const PatchStats stats = testsup::stats_from_counts({1, 0, 2, 0});

    // 5x5 attention with CLS at index 0; the patch-patch block is rows/cols 1..4.
    const Tensor full = testsup::random_attention(5, rng);
    AttentionRecord rec;
    rec.alpha = full;
    const LayerProfile profile = layer_profile({rec}, stats, 1.0, 1, 1, true);

    Tensor sliced(std::vector<uint32_t>{4, 4});
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) sliced.at(i, j) = full.at(i + 1, j + 1);
    }
    const GlobalScores direct = global_thetas(sliced, stats, 1.0);
    CHECK(profile[0].heads[0].scores.theta_kk == direct.theta_kk);
    CHECK(profile[0].heads[0].scores.theta_nk == direct.theta_nk);
    CHECK(profile[0].heads[0].focus == focus_index(sliced));
}

TEST_CASE("segment_stages finds the constructed transition windows") {
    // 24 layers shaped like the canonical interrelation/focus profile:
    // K low then high with a late decline, F high then low with a late rebound.
    LayerProfile profile;
    for (int l = 0; l < 24; ++l) {
        double k, f;
        if (l < 8) {
            k = 0.2;
            f = 3.0;
        } else if (l < 20) {
            k = 0.8;
            f = 1.0;
        } else {
            k = 0.8 - 0.05 * (l - 19);
            f = 1.0 + 0.2 * (l - 19);
        }
        profile.push_back(profile_row(l, k, f));
    }
    const StageSegmentation seg = segment_stages(profile);
    CHECK(seg.applicable);
    CHECK_FALSE(seg.fallback);
    CHECK(seg.b1 == 8);
    CHECK(seg.b2 == 20);
    CHECK(seg.b1 >= 1);
    CHECK(seg.b2 > seg.b1);
    CHECK(seg.b2 <= 22);
}

TEST_CASE("segment_stages thirds fallback on flat profiles") {
    LayerProfile flat;
    for (int l = 0; l < 24; ++l) flat.push_back(profile_row(l, 0.5, 2.0));
    const StageSegmentation seg = segment_stages(flat);
    CHECK(seg.applicable);
    CHECK(seg.fallback);
    CHECK(seg.b1 == 8);
    CHECK(seg.b2 == 16);

    // four flat layers: 4/3 = 1 and 8/3 = 2
    LayerProfile four;
    for (int l = 0; l < 4; ++l) four.push_back(profile_row(l, 0.3, 1.0));
    const StageSegmentation s4 = segment_stages(four);
    CHECK(s4.fallback);
    CHECK(s4.b1 == 1);
    CHECK(s4.b2 == 2);
}

TEST_CASE("segment_stages on three layers with a single interior peak") {
    LayerProfile p;
    p.push_back(profile_row(0, 0.2, 2.0));
    p.push_back(profile_row(1, 0.9, 1.0));
    p.push_back(profile_row(2, 0.3, 1.5));
    const StageSegmentation seg = segment_stages(p);
    CHECK(seg.applicable);
    CHECK(seg.b1 == 1);
    CHECK(seg.b2 == 2);
}

TEST_CASE("segment_stages degenerate inputs") {
    // fewer than three layers: not applicable
    LayerProfile two;
    two.push_back(profile_row(0, 0.5, 1.0));
    two.push_back(profile_row(1, 0.6, 1.0));
    CHECK_FALSE(segment_stages(two).applicable);
    CHECK_FALSE(segment_stages({}).applicable);

    // an incomplete interrelation series forces both boundaries to fall back
    LayerProfile holes;
    for (int l = 0; l < 9; ++l) {
        holes.push_back(profile_row(l, l == 4 ? std::nullopt : std::optional<double>(0.2 + 0.1 * l),
                                    3.0 - 0.2 * l));
    }
    const StageSegmentation seg = segment_stages(holes);
    CHECK(seg.applicable);
    CHECK(seg.fallback);
    CHECK(seg.b1 == 3);   // 9 / 3
    CHECK(seg.b2 == 6);   // 2 * 9 / 3
}
