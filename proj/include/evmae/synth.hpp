#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "evmae/events.hpp"
#include "evmae/rng.hpp"

namespace evmae {

/// Moving-edge stream generator. A straight edge perpendicular to its
/// velocity sweeps across the sensor; its events lie near a plane in
/// normalized (x, y, t), which is the ground truth the patch selector is
/// supposed to find. Uniform background noise is labeled out-of-band.
struct SynthConfig {
    std::uint32_t width = 1024;
    std::uint32_t height = 1024;
    double duration_s = 0.5;
    double speed_px_s = 2048.0;   // sweep covers speed*duration pixels
    double direction_rad = 0.0;   // velocity angle; also the class signal
    double inlier_rate = 4000.0;  // events per second on the edge
    double noise_rate = 600.0;    // uniform background events per second
    std::uint64_t seed = 0;

    void validate() const {
        require(width >= 2 && height >= 2, errc::invalid_config, "sensor must be at least 2x2");
        require(duration_s > 0.0, errc::invalid_config, "duration must be > 0");
        require(speed_px_s > 0.0, errc::invalid_config, "speed must be > 0");
        require(inlier_rate >= 0.0 && noise_rate >= 0.0, errc::invalid_config,
                "rates must be >= 0");
    }
};

/// A generated stream with one label per event (parallel to stream.events).
struct SynthStream {
    EventStream stream;
    std::vector<std::uint8_t> is_noise;
};

namespace detail {

/// Poisson count via exponential inter-arrival gaps; exact for any rate and
/// free of the underflow issues of the product method.
inline std::size_t poisson_count(double rate, double duration, Rng& rng) {
    if (rate <= 0.0) return 0;
    std::size_t n = 0;
    double t = 0.0;
    while (true) {
        const double u = rng.uniform();
        t += -std::log1p(-u) / rate;
        if (t >= duration) break;
        ++n;
    }
    return n;
}

}  // namespace detail

inline SynthStream gen_planar_stream(const SynthConfig& cfg, Rng& rng) {
    cfg.validate();
    const double w = static_cast<double>(cfg.width);
    const double h = static_cast<double>(cfg.height);
    const double vx = std::cos(cfg.direction_rad), vy = std::sin(cfg.direction_rad);
    // edge center sweeps symmetrically through the sensor center
    const double half_sweep = 0.5 * cfg.speed_px_s * cfg.duration_s;
    const double c0x = 0.5 * w - half_sweep * vx;
    const double c0y = 0.5 * h - half_sweep * vy;
    const double s_max = std::sqrt(w * w + h * h);  // edge overhangs every cross-section

    const std::size_t n_inlier = detail::poisson_count(cfg.inlier_rate, cfg.duration_s, rng);
    const std::size_t n_noise = detail::poisson_count(cfg.noise_rate, cfg.duration_s, rng);

    struct Tagged {
        Event e;
        std::uint8_t noise;
    };
    std::vector<Tagged> all;
    all.reserve(n_inlier + n_noise);

    for (std::size_t i = 0; i < n_inlier; ++i) {
        // redraw the full tuple until the pixel lands on the sensor; keeps
        // the Poisson count exact and the accepted samples uniform
        while (true) {
            const double tau = cfg.duration_s * rng.uniform();
            const double s = s_max * (2.0 * rng.uniform() - 1.0);
            const double xi = rng.uniform() - 0.5;  // jitter along the motion axis
            const double px = c0x + cfg.speed_px_s * tau * vx - s * vy + xi * vx;
            const double py = c0y + cfg.speed_px_s * tau * vy + s * vx + xi * vy;
            const long lx = std::lround(px);
            const long ly = std::lround(py);
            if (lx < 0 || ly < 0 || lx >= static_cast<long>(cfg.width) ||
                ly >= static_cast<long>(cfg.height))
                continue;
            Event e;
            e.x = static_cast<std::uint16_t>(lx);
            e.y = static_cast<std::uint16_t>(ly);
            e.t = static_cast<std::uint64_t>(std::llround(tau * 1e6));
            e.p = xi >= 0.0 ? 1 : 0;  // leading vs trailing side of the edge
            all.push_back({e, 0});
            break;
        }
    }
    for (std::size_t i = 0; i < n_noise; ++i) {
        Event e;
        e.x = static_cast<std::uint16_t>(rng.index(cfg.width));
        e.y = static_cast<std::uint16_t>(rng.index(cfg.height));
        e.t = static_cast<std::uint64_t>(std::llround(cfg.duration_s * rng.uniform() * 1e6));
        e.p = static_cast<std::uint8_t>(rng.index(2));
        all.push_back({e, 1});
    }

    std::stable_sort(all.begin(), all.end(),
                     [](const Tagged& a, const Tagged& b) { return a.e.t < b.e.t; });
    SynthStream out;
    out.stream.width = cfg.width;
    out.stream.height = cfg.height;
    out.stream.events.reserve(all.size());
    out.is_noise.reserve(all.size());
    for (const Tagged& t : all) {
        out.stream.events.push_back(t.e);
        out.is_noise.push_back(t.noise);
    }
    return out;
}

struct LabeledStream {
    std::string id;
    EventStream stream;
    std::size_t label = 0;
    double direction_rad = 0.0;
};

/// Balanced labeled set: sample i gets class i mod n_classes; class c moves
/// along direction 2*pi*c/n_classes. Per-sample RNG streams derive from the
/// set seed, so any subset regenerates identically.
inline std::vector<LabeledStream> gen_classification_set(std::size_t n_samples,
                                                         std::size_t n_classes,
                                                         const SynthConfig& base,
                                                         std::uint64_t seed) {
    require(n_classes >= 2 && n_classes <= 8, errc::invalid_config,
            "n_classes must lie in 2..8");
    std::vector<LabeledStream> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t label = i % n_classes;
        SynthConfig cfg = base;
        cfg.direction_rad =
            2.0 * 3.14159265358979323846 * static_cast<double>(label) / static_cast<double>(n_classes);
        cfg.seed = mix64(seed, i);
        Rng rng(cfg.seed);
        LabeledStream ls;
        char buf[32];
        std::snprintf(buf, sizeof buf, "sample_%04zu", i);
        ls.id = buf;
        ls.stream = gen_planar_stream(cfg, rng).stream;
        ls.label = label;
        ls.direction_rad = cfg.direction_rad;
        out.push_back(std::move(ls));
    }
    return out;
}

}  // namespace evmae
