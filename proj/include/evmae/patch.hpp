#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "evmae/plane.hpp"
#include "evmae/rng.hpp"
#include "evmae/sampler.hpp"

namespace evmae {

enum class PatchMethod { inlier, fps, random };

inline const char* to_string(PatchMethod m) {
    switch (m) {
        case PatchMethod::inlier: return "inlier";
        case PatchMethod::fps: return "fps";
        case PatchMethod::random: return "random";
    }
    return "?";
}

inline PatchMethod patch_method_from_string(const std::string& s) {
    if (s == "inlier") return PatchMethod::inlier;
    if (s == "fps") return PatchMethod::fps;
    if (s == "random") return PatchMethod::random;
    raise(errc::invalid_config, "unknown patch method '" + s + "'");
}

struct PatchConfig {
    std::size_t m = 64;            // patches per point set
    std::size_t k = 32;            // neighbours per patch (centre included)
    double threshold_h = 0.85e-3;  // residual acceptance threshold, normalized time units
    std::size_t max_attempts = 0;  // candidate budget per polarity; 0 means 10*m
    std::uint64_t seed = 0;

    std::size_t attempts_budget() const { return max_attempts == 0 ? 10 * m : max_attempts; }

    void validate(std::size_t n_points) const {
        require(m >= 1, errc::invalid_config, "m must be >= 1");
        require(k >= 1, errc::invalid_config, "k must be >= 1");
        require(k <= n_points, errc::k_too_large,
                "k=" + std::to_string(k) + " exceeds point count " + std::to_string(n_points));
        require(threshold_h > 0.0, errc::invalid_config, "threshold H must be > 0");
    }
};

/// A centre event with its k-neighbourhood in patch-local coordinates
/// (delta = centre - point, so the centre's own row is the origin).
struct Patch {
    std::array<double, 3> center{};
    std::vector<double> local_xyz;           // k x 3 deltas
    std::vector<std::size_t> point_index;    // rows into the source PointSet
    std::size_t center_index = 0;            // row of the centre in the source PointSet
    std::uint8_t polarity = 0;
    double residual = 0.0;                   // mean absolute plane-fit error
    bool fallback = false;                   // accepted without passing the threshold

    std::size_t k() const { return point_index.size(); }
};

struct PatchSet {
    std::vector<Patch> patches;
    std::size_t k = 0;
    std::size_t fallback_count = 0;

    std::size_t size() const { return patches.size(); }
};

/// Indices of the k nearest points (Euclidean, normalized x/y/t space) to
/// points[center_index], centre included, ordered by distance with ties
/// broken by lower index.
inline std::vector<std::size_t> knn_group(std::span<const double> xyz, std::size_t center_index,
                                          std::size_t k) {
    const std::size_t n = xyz.size() / 3;
    require(k <= n, errc::k_too_large,
            "k=" + std::to_string(k) + " exceeds point count " + std::to_string(n));
    const double cx = xyz[3 * center_index], cy = xyz[3 * center_index + 1],
                 cz = xyz[3 * center_index + 2];
    std::vector<std::pair<double, std::size_t>> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xyz[3 * i] - cx, dy = xyz[3 * i + 1] - cy, dz = xyz[3 * i + 2] - cz;
        d[i] = {dx * dx + dy * dy + dz * dz, i};
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    std::sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
    return out;
}

/// Farthest point sampling: iteratively pick the point maximizing the
/// distance to the already selected set, starting from start_index. Ties go
/// to the lower index.
inline std::vector<std::size_t> fps_centers(const PointSet& ps, std::size_t m,
                                            std::size_t start_index) {
    const std::size_t n = ps.size();
    require(m <= n, errc::m_too_large,
            "m=" + std::to_string(m) + " exceeds point count " + std::to_string(n));
    std::vector<std::size_t> out;
    if (m == 0) return out;
    out.reserve(m);
    out.push_back(start_index);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t round = 1; round < m; ++round) {
        const auto last = ps.point(out.back());
        std::size_t best = 0;
        double best_d2 = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = ps.x(i) - last[0], dy = ps.y(i) - last[1], dz = ps.t(i) - last[2];
            min_d2[i] = std::min(min_d2[i], dx * dx + dy * dy + dz * dz);
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        out.push_back(best);
    }
    return out;
}

/// m distinct uniform indices.
inline std::vector<std::size_t> random_centers(const PointSet& ps, std::size_t m, Rng& rng) {
    require(m <= ps.size(), errc::m_too_large,
            "m=" + std::to_string(m) + " exceeds point count " + std::to_string(ps.size()));
    return sample_without_replacement(ps.size(), m, rng);
}

namespace detail {

/// Build one patch around a centre: KNN over the given subset, local deltas
/// per centre - point, plane fit for the residual bookkeeping. subset_rows
/// maps subset positions back to PointSet rows (empty = identity).
inline Patch make_patch(const PointSet& ps, std::span<const double> subset_xyz,
                        std::span<const std::size_t> subset_rows, std::size_t center_pos,
                        std::size_t k) {
    const std::vector<std::size_t> nn = knn_group(subset_xyz, center_pos, k);
    Patch patch;
    const double cx = subset_xyz[3 * center_pos], cy = subset_xyz[3 * center_pos + 1],
                 cz = subset_xyz[3 * center_pos + 2];
    patch.center = {cx, cy, cz};
    patch.center_index = subset_rows.empty() ? center_pos : subset_rows[center_pos];
    patch.local_xyz.reserve(3 * k);
    patch.point_index.reserve(k);
    for (std::size_t j : nn) {
        patch.local_xyz.push_back(cx - subset_xyz[3 * j]);
        patch.local_xyz.push_back(cy - subset_xyz[3 * j + 1]);
        patch.local_xyz.push_back(cz - subset_xyz[3 * j + 2]);
        patch.point_index.push_back(subset_rows.empty() ? j : subset_rows[j]);
    }
    patch.polarity = ps.polarity[patch.center_index];
    try {
        patch.residual = fit_plane(patch.local_xyz).residual_mean_abs;
    } catch (const Error& e) {
        if (e.code() != errc::degenerate_neighborhood) throw;
        patch.residual = std::numeric_limits<double>::infinity();
    }
    return patch;
}

/// The inlier acceptance loop over one polarity subset. Draws random centre
/// candidates, keeps those whose neighbourhood fits a plane with mean
/// absolute error below H, and falls back to unfiltered random centres if the
/// attempt budget runs out before the quota is met.
inline void inlier_patches_for_subset(const PointSet& ps, const std::vector<std::size_t>& rows,
                                      const PatchConfig& cfg, std::size_t quota, Rng& rng,
                                      PatchSet& out) {
    if (quota == 0) return;
    std::vector<double> subset_xyz;
    subset_xyz.reserve(3 * rows.size());
    for (std::size_t r : rows) {
        subset_xyz.push_back(ps.x(r));
        subset_xyz.push_back(ps.y(r));
        subset_xyz.push_back(ps.t(r));
    }
    std::vector<bool> taken(rows.size(), false);
    std::size_t accepted = 0;
    for (std::size_t attempt = 0; attempt < cfg.attempts_budget() && accepted < quota; ++attempt) {
        const std::size_t cand = rng.index(rows.size());
        if (taken[cand]) continue;
        Patch patch = make_patch(ps, subset_xyz, rows, cand, cfg.k);
        if (!(patch.residual < cfg.threshold_h)) continue;
        taken[cand] = true;
        ++accepted;
        out.patches.push_back(std::move(patch));
    }
    if (accepted < quota) {
        // fallback: fill the remainder with random centres regardless of error
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!taken[i]) open.push_back(i);
        const std::vector<std::size_t> picks =
            sample_without_replacement(open.size(), quota - accepted, rng);
        for (std::size_t p : picks) {
            Patch patch = make_patch(ps, subset_xyz, rows, open[p], cfg.k);
            patch.fallback = true;
            ++out.fallback_count;
            out.patches.push_back(std::move(patch));
        }
    }
}

}  // namespace detail

/// Generate cfg.m patches with the plane-inlier model: centres are
/// drawn per polarity subset (quota proportional to subset size), accepted
/// when the local plane fit stays below the threshold, topped up with random
/// fallback centres when attempts run out.
inline PatchSet generate_patches_inlier(const PointSet& ps, const PatchConfig& cfg, Rng& rng) {
    const std::size_t n = ps.size();
    cfg.validate(n);
    require(n >= cfg.k, errc::too_few_points, "need at least k points");

    std::vector<std::size_t> pos_rows, neg_rows;
    for (std::size_t i = 0; i < n; ++i) (ps.polarity[i] == 1 ? pos_rows : neg_rows).push_back(i);

    // proportional quota split; a subset too small to host a k-neighbourhood
    // (or its share of distinct centres) hands the excess to the other one
    const std::size_t cap_pos = pos_rows.size() >= cfg.k ? pos_rows.size() : 0;
    const std::size_t cap_neg = neg_rows.size() >= cfg.k ? neg_rows.size() : 0;
    require(cap_pos > 0 || cap_neg > 0, errc::too_few_points,
            "neither polarity subset holds k=" + std::to_string(cfg.k) + " points");
    require(cap_pos + cap_neg >= cfg.m, errc::too_few_points,
            "cannot place " + std::to_string(cfg.m) + " distinct centres");
    std::size_t m_pos = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.m) * static_cast<double>(pos_rows.size()) /
                     static_cast<double>(n)));
    m_pos = std::min(m_pos, cfg.m);
    std::size_t m_neg = cfg.m - m_pos;
    if (m_pos > cap_pos) {
        m_pos = cap_pos;
        m_neg = cfg.m - m_pos;
    }
    if (m_neg > cap_neg) {
        m_neg = cap_neg;
        m_pos = cfg.m - m_neg;
    }

    PatchSet out;
    out.k = cfg.k;
    detail::inlier_patches_for_subset(ps, pos_rows, cfg, m_pos, rng, out);
    detail::inlier_patches_for_subset(ps, neg_rows, cfg, m_neg, rng, out);
    return out;
}

/// Ablation baselines: centres by FPS or uniform sampling over the full point
/// set, same KNN grouping and residual bookkeeping, no filtering.
inline PatchSet generate_patches_baseline(const PointSet& ps, const PatchConfig& cfg,
                                          PatchMethod method, Rng& rng) {
    const std::size_t n = ps.size();
    cfg.validate(n);
    require(n >= cfg.k, errc::too_few_points, "need at least k points");
    require(cfg.m <= n, errc::m_too_large, "m exceeds point count");
    std::vector<std::size_t> centers;
    if (method == PatchMethod::fps) {
        centers = fps_centers(ps, cfg.m, rng.index(n));
    } else {
        centers = random_centers(ps, cfg.m, rng);
    }
    PatchSet out;
    out.k = cfg.k;
    for (std::size_t c : centers) out.patches.push_back(detail::make_patch(ps, ps.xyz, {}, c, cfg.k));
    return out;
}

inline PatchSet generate_patches(const PointSet& ps, const PatchConfig& cfg, PatchMethod method,
                                 Rng& rng) {
    if (method == PatchMethod::inlier) return generate_patches_inlier(ps, cfg, rng);
    return generate_patches_baseline(ps, cfg, method, rng);
}

/// Convenience overload deriving the RNG from cfg.seed.
inline PatchSet generate_patches(const PointSet& ps, const PatchConfig& cfg, PatchMethod method) {
    Rng rng(cfg.seed);
    return generate_patches(ps, cfg, method, rng);
}

}  // namespace evmae
