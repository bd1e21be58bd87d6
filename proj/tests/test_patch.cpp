#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "evmae/patch.hpp"
#include "evmae/rng.hpp"
#include "evmae/sampler.hpp"

using namespace evmae;

namespace {

PointSet make_point_set(const std::vector<double>& xyz, const std::vector<std::uint8_t>& pol) {
    PointSet ps;
    ps.xyz = xyz;
    ps.polarity = pol;
    ps.source_index.resize(pol.size());
    std::iota(ps.source_index.begin(), ps.source_index.end(), std::size_t{0});
    return ps;
}

/// Brute-force KNN oracle: full sort of (squared distance, index) pairs.
std::vector<std::size_t> knn_oracle(const std::vector<double>& xyz, std::size_t center,
                                    std::size_t k) {
    const std::size_t n = xyz.size() / 3;
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int c = 0; c < 3; ++c) {
            const double diff = xyz[3 * i + c] - xyz[3 * center + c];
            s += diff * diff;
        }
        d.emplace_back(s, i);
    }
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
    return out;
}

/// Brute-force FPS oracle: recompute the maximin choice from scratch each
/// round, ties to the lower index.
std::vector<std::size_t> fps_oracle(const PointSet& ps, std::size_t m, std::size_t start) {
    std::vector<std::size_t> sel = {start};
    while (sel.size() < m) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            double dmin = std::numeric_limits<double>::infinity();
            for (std::size_t s : sel) {
                const double dx = ps.x(i) - ps.x(s), dy = ps.y(i) - ps.y(s),
                             dz = ps.t(i) - ps.t(s);
                dmin = std::min(dmin, dx * dx + dy * dy + dz * dz);
            }
            if (dmin > best_d) {
                best_d = dmin;
                best = i;
            }
        }
        sel.push_back(best);
    }
    return sel;
}

/// Planar inliers plus uniform noise in the unit cube; the first
/// n_inlier rows are inliers. Polarities alternate so both subsets carry
/// the same structure.
PointSet planar_noise_set(std::size_t n_inlier, std::size_t n_noise, double jitter, Rng& rng) {
    std::vector<double> xyz;
    std::vector<std::uint8_t> pol;
    for (std::size_t i = 0; i < n_inlier; ++i) {
        const double x = rng.uniform(), y = rng.uniform();
        const double t = 0.4 * x + 0.3 * y + 0.15 + jitter * (rng.uniform() - 0.5);
        xyz.insert(xyz.end(), {x, y, t});
        pol.push_back(static_cast<std::uint8_t>(i % 2));
    }
    for (std::size_t i = 0; i < n_noise; ++i) {
        xyz.insert(xyz.end(), {rng.uniform(), rng.uniform(), rng.uniform()});
        pol.push_back(static_cast<std::uint8_t>(i % 2));
    }
    return make_point_set(xyz, pol);
}

double noise_fraction(const PatchSet& set, std::size_t first_noise_row) {
    std::size_t noise = 0, total = 0;
    for (const Patch& p : set.patches)
        for (std::size_t idx : p.point_index) {
            ++total;
            if (idx >= first_noise_row) ++noise;
        }
    return static_cast<double>(noise) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("knn matches the collinear hand case") {
    std::vector<double> xyz = {0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0};
    CHECK(knn_group(xyz, 0, 2) == std::vector<std::size_t>{0, 1});
    CHECK(knn_group(xyz, 0, 4) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(knn_group(xyz, 2, 1) == std::vector<std::size_t>{2});
    CHECK_THROWS_MATCHES(knn_group(xyz, 0, 5), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::k_too_large; }));
}

TEST_CASE("knn matches the brute-force oracle on random sets") {
    Rng rng(21);
    for (int iter = 0; iter < 30; ++iter) {
        const std::size_t n = 20 + rng.index(180);
        std::vector<double> xyz;
        for (std::size_t i = 0; i < 3 * n; ++i) xyz.push_back(rng.uniform());
        const std::size_t center = rng.index(n);
        const std::size_t k = 1 + rng.index(n);
        CHECK(knn_group(xyz, center, k) == knn_oracle(xyz, center, k));
    }
}

TEST_CASE("knn breaks distance ties by lower index") {
    // four points equidistant from the center, exactly representable coords
    std::vector<double> xyz = {0, 0,  0,    0.5, 0, 0,   -0.5, 0, 0,
                               0, 0.5, 0,   0,  -0.5, 0};
    const auto nn = knn_group(xyz, 0, 3);
    CHECK(nn == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("fps picks the far corner then matches the oracle") {
    PointSet corners = make_point_set({0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0}, {1, 1, 1, 1});
    const auto two = fps_centers(corners, 2, 0);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == 0);
    CHECK(two[1] == 3);  // (1,1) is the unique farthest corner from (0,0)

    CHECK(fps_centers(corners, 1, 2) == std::vector<std::size_t>{2});
    auto all = fps_centers(corners, 4, 1);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK_THROWS_MATCHES(fps_centers(corners, 5, 0), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::m_too_large; }));

    Rng rng(22);
    for (int iter = 0; iter < 10; ++iter) {
        const std::size_t n = 10 + rng.index(60);
        std::vector<double> xyz;
        for (std::size_t i = 0; i < 3 * n; ++i) xyz.push_back(rng.uniform());
        PointSet ps = make_point_set(xyz, std::vector<std::uint8_t>(n, 1));
        const std::size_t start = rng.index(n);
        const std::size_t m = 1 + rng.index(n);
        CHECK(fps_centers(ps, m, start) == fps_oracle(ps, m, start));
    }
}

TEST_CASE("random_centers draws distinct reproducible indices") {
    PointSet ps = make_point_set({0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0}, {1, 0, 1, 0});
    Rng a(5), b(5);
    const auto ia = random_centers(ps, 3, a);
    const auto ib = random_centers(ps, 3, b);
    CHECK(ia == ib);
    Rng c(6);
    auto perm = random_centers(ps, 4, c);
    std::sort(perm.begin(), perm.end());
    CHECK(perm == std::vector<std::size_t>{0, 1, 2, 3});
    Rng d(7);
    CHECK(random_centers(ps, 0, d).empty());
}

TEST_CASE("inlier generation with a huge threshold yields exactly m full patches") {
    Rng data_rng(100);
    const PointSet ps = planar_noise_set(900, 124, 2e-4, data_rng);
    PatchConfig cfg;
    cfg.m = 64;
    cfg.k = 32;
    cfg.threshold_h = 10.0;
    Rng rng(1);
    const PatchSet set = generate_patches_inlier(ps, cfg, rng);
    REQUIRE(set.size() == 64);
    CHECK(set.fallback_count == 0);
    CHECK(set.k == 32);
    for (const Patch& p : set.patches) {
        CHECK(p.k() == 32);
        CHECK(p.local_xyz.size() == 32 * 3);
        CHECK_FALSE(p.fallback);
    }
    // distinct centers
    std::set<std::size_t> centers;
    for (const Patch& p : set.patches) centers.insert(p.center_index);
    CHECK(centers.size() == 64);
}

TEST_CASE("pure noise with a tiny threshold exercises the fallback path") {
    Rng data_rng(101);
    const PointSet ps = planar_noise_set(0, 512, 0.0, data_rng);
    PatchConfig cfg;
    cfg.m = 32;
    cfg.k = 16;
    cfg.threshold_h = 1e-6;
    Rng rng(2);
    const PatchSet set = generate_patches_inlier(ps, cfg, rng);
    REQUIRE(set.size() == 32);
    CHECK(set.fallback_count == 32);
    for (const Patch& p : set.patches) CHECK(p.fallback);
}

TEST_CASE("same seed gives a bit-identical patch set") {
    Rng data_rng(102);
    const PointSet ps = planar_noise_set(700, 100, 2e-4, data_rng);
    PatchConfig cfg;
    cfg.seed = 44;
    for (PatchMethod method : {PatchMethod::inlier, PatchMethod::fps, PatchMethod::random}) {
        const PatchSet a = generate_patches(ps, cfg, method);
        const PatchSet b = generate_patches(ps, cfg, method);
        REQUIRE(a.size() == b.size());
        CHECK(a.fallback_count == b.fallback_count);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.patches[i].center == b.patches[i].center);
            CHECK(a.patches[i].local_xyz == b.patches[i].local_xyz);
            CHECK(a.patches[i].point_index == b.patches[i].point_index);
            CHECK(a.patches[i].residual == b.patches[i].residual);
        }
    }
}

TEST_CASE("accepted patches satisfy the threshold and the sign convention") {
    Rng data_rng(103);
    const PointSet ps = planar_noise_set(900, 124, 2e-4, data_rng);
    PatchConfig cfg;
    Rng rng(3);
    const PatchSet set = generate_patches_inlier(ps, cfg, rng);
    REQUIRE(set.size() == cfg.m);
    for (const Patch& p : set.patches) {
        if (!p.fallback) CHECK(p.residual < cfg.threshold_h);
        CHECK(ps.polarity[p.center_index] == p.polarity);
        for (std::size_t j = 0; j < p.k(); ++j) {
            const std::size_t row = p.point_index[j];
            // center + (-delta) recovers the source point (one rounding each way)
            for (int c = 0; c < 3; ++c) {
                const double recon = p.center[c] - p.local_xyz[3 * j + c];
                CHECK_THAT(recon, Catch::Matchers::WithinAbs(ps.xyz[3 * row + c], 1e-15));
            }
        }
        // polarity purity: every patch member shares the center's polarity
        for (std::size_t row : p.point_index) CHECK(ps.polarity[row] == p.polarity);
    }
}

TEST_CASE("per-polarity quotas are proportional with small-subset push-over") {
    // 75% positive: m_pos = round(16*0.75) = 12
    std::vector<double> xyz;
    std::vector<std::uint8_t> pol;
    Rng rng(104);
    for (int i = 0; i < 96; ++i) {
        xyz.insert(xyz.end(), {rng.uniform(), rng.uniform(), rng.uniform()});
        pol.push_back(i < 72 ? 1 : 0);
    }
    PointSet ps = make_point_set(xyz, pol);
    PatchConfig cfg;
    cfg.m = 16;
    cfg.k = 8;
    cfg.threshold_h = 10.0;
    Rng gen(5);
    const PatchSet set = generate_patches_inlier(ps, cfg, gen);
    std::size_t pos = 0;
    for (const Patch& p : set.patches) pos += p.polarity == 1;
    CHECK(pos == 12);
    CHECK(set.size() - pos == 4);

    // a polarity subset smaller than k cannot host patches: all quota shifts
    std::vector<std::uint8_t> pol2(96, 1);
    for (int i = 0; i < 6; ++i) pol2[i] = 0;  // 6 negatives < k=8
    PointSet ps2 = make_point_set(xyz, pol2);
    Rng gen2(6);
    const PatchSet set2 = generate_patches_inlier(ps2, cfg, gen2);
    REQUIRE(set2.size() == 16);
    for (const Patch& p : set2.patches) CHECK(p.polarity == 1);
}

TEST_CASE("too few points raise typed errors") {
    Rng data_rng(105);
    const PointSet tiny = planar_noise_set(8, 0, 1e-4, data_rng);
    PatchConfig cfg;  // k=32 > 8 points
    Rng rng(7);
    CHECK_THROWS_MATCHES(generate_patches_inlier(tiny, cfg, rng), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::k_too_large; }));
    PatchConfig small;
    small.m = 64;
    small.k = 4;
    Rng rng2(8);
    // 8 points hold k=4 neighborhoods but not 64 distinct centers
    CHECK_THROWS_MATCHES(generate_patches_inlier(tiny, small, rng2), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::too_few_points; }));
}

TEST_CASE("inlier selection admits less noise than fps at equal m and k") {
    Rng data_rng(106);
    const std::size_t n_inlier = 900, n_noise = 124;
    const PointSet ps = planar_noise_set(n_inlier, n_noise, 2e-4, data_rng);
    PatchConfig cfg;  // m=64, k=32, H=0.85e-3
    Rng rng_a(9), rng_b(9);
    const PatchSet inlier_set = generate_patches_inlier(ps, cfg, rng_a);
    const PatchSet fps_set = generate_patches_baseline(ps, cfg, PatchMethod::fps, rng_b);
    const double f_inlier = noise_fraction(inlier_set, n_inlier);
    const double f_fps = noise_fraction(fps_set, n_inlier);
    INFO("inlier noise fraction " << f_inlier << " vs fps " << f_fps);
    CHECK(f_inlier < f_fps);
}
