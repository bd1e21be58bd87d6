#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "evmae/events.hpp"
#include "evmae/rng.hpp"

namespace evmae {

struct SamplerConfig {
    double window_s = 0.5;
    double step_s = 0.25;
    std::size_t n_points = 1024;
    std::uint64_t seed = 0;

    void validate() const {
        require(window_s > 0.0, errc::invalid_config, "window_s must be > 0");
        require(step_s > 0.0 && step_s <= window_s, errc::invalid_config,
                "step_s must be in (0, window_s]");
        require(n_points >= 1, errc::invalid_config, "n_points must be >= 1");
    }
};

/// A time slice of a stream, still in raw sensor units.
struct EventWindow {
    std::vector<Event> events;
    std::uint64_t t_start = 0;  // inclusive, us
    std::uint64_t t_end = 0;    // exclusive, us
    std::uint32_t width = 0;
    std::uint32_t height = 0;
};

/// Fixed-size set of normalized (x, y, t) points with polarity labels.
/// Coordinates live in [0,1]; row order after resampling is arbitrary.
/// source_index maps each row back to its pre-resample window position.
struct PointSet {
    std::vector<double> xyz;  // row-major n x 3
    std::vector<std::uint8_t> polarity;
    std::vector<std::size_t> source_index;
    std::uint64_t window_start_us = 0;
    std::uint64_t window_end_us = 0;

    std::size_t size() const { return polarity.size(); }
    double x(std::size_t i) const { return xyz[3 * i]; }
    double y(std::size_t i) const { return xyz[3 * i + 1]; }
    double t(std::size_t i) const { return xyz[3 * i + 2]; }
    std::array<double, 3> point(std::size_t i) const {
        return {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    }
};

/// Slice a stream into sliding windows of cfg.window_s every cfg.step_s,
/// starting at the first event. Each window holds events with
/// t_start <= t < t_start + window. A stream shorter than one window yields
/// exactly one window covering everything.
inline std::vector<EventWindow> slide_windows(const EventStream& s, const SamplerConfig& cfg) {
    cfg.validate();
    require(!s.empty(), errc::empty_stream, "cannot window an empty stream");
    const std::uint64_t t0 = s.events.front().t;
    const std::uint64_t t_last = s.events.back().t;
    const std::uint64_t window_us = static_cast<std::uint64_t>(std::llround(cfg.window_s * 1e6));
    const std::uint64_t step_us = static_cast<std::uint64_t>(std::llround(cfg.step_s * 1e6));

    std::vector<EventWindow> windows;
    std::size_t lo = 0;  // events are time sorted; advance a window over them
    for (std::uint64_t i = 0;; ++i) {
        const std::uint64_t start = t0 + i * step_us;
        if (start + window_us > t_last) break;
        EventWindow w;
        w.t_start = start;
        w.t_end = start + window_us;
        w.width = s.width;
        w.height = s.height;
        while (lo < s.events.size() && s.events[lo].t < start) ++lo;
        for (std::size_t j = lo; j < s.events.size() && s.events[j].t < w.t_end; ++j)
            w.events.push_back(s.events[j]);
        windows.push_back(std::move(w));
    }
    if (windows.empty()) {
        // degenerate: whole span shorter than one window
        EventWindow w;
        w.t_start = t0;
        w.t_end = t0 + window_us;
        w.width = s.width;
        w.height = s.height;
        w.events = s.events;
        windows.push_back(std::move(w));
    }
    return windows;
}

/// Normalize a window into [0,1]^3: x/(width-1), y/(height-1), and
/// t = (t_n - t_0) / (t_max - t_0) over the window's own events.
inline PointSet normalize_window(const EventWindow& w) {
    require(!w.events.empty(), errc::empty_stream, "cannot normalize an empty window");
    std::uint64_t tmin = w.events.front().t, tmax = w.events.front().t;
    for (const Event& e : w.events) {
        tmin = std::min(tmin, e.t);
        tmax = std::max(tmax, e.t);
    }
    const double tspan = static_cast<double>(tmax - tmin);
    const double xden = w.width > 1 ? static_cast<double>(w.width - 1) : 1.0;
    const double yden = w.height > 1 ? static_cast<double>(w.height - 1) : 1.0;
    PointSet ps;
    ps.window_start_us = w.t_start;
    ps.window_end_us = w.t_end;
    ps.xyz.reserve(3 * w.events.size());
    ps.polarity.reserve(w.events.size());
    ps.source_index.reserve(w.events.size());
    for (std::size_t i = 0; i < w.events.size(); ++i) {
        const Event& e = w.events[i];
        ps.xyz.push_back(static_cast<double>(e.x) / xden);
        ps.xyz.push_back(static_cast<double>(e.y) / yden);
        ps.xyz.push_back(tspan > 0.0 ? static_cast<double>(e.t - tmin) / tspan : 0.0);
        ps.polarity.push_back(e.p);
        ps.source_index.push_back(i);
    }
    return ps;
}

/// Index plan for resampling |input| -> n: with enough points, n distinct
/// uniform indices; otherwise every index once plus uniform draws with
/// replacement. Exposed separately so the inclusion property is testable.
inline std::vector<std::size_t> resample_indices(std::size_t input_size, std::size_t n, Rng& rng) {
    require(input_size > 0, errc::empty_input, "cannot resample an empty point set");
    if (input_size >= n) return sample_without_replacement(input_size, n, rng);
    std::vector<std::size_t> idx(input_size);
    for (std::size_t i = 0; i < input_size; ++i) idx[i] = i;
    for (std::size_t i = input_size; i < n; ++i) idx.push_back(rng.index(input_size));
    return idx;
}

inline PointSet resample_to_n(const PointSet& ps, std::size_t n, Rng& rng) {
    const std::vector<std::size_t> idx = resample_indices(ps.size(), n, rng);
    PointSet out;
    out.window_start_us = ps.window_start_us;
    out.window_end_us = ps.window_end_us;
    out.xyz.reserve(3 * n);
    out.polarity.reserve(n);
    out.source_index.reserve(n);
    for (std::size_t i : idx) {
        out.xyz.push_back(ps.x(i));
        out.xyz.push_back(ps.y(i));
        out.xyz.push_back(ps.t(i));
        out.polarity.push_back(ps.polarity[i]);
        out.source_index.push_back(ps.source_index.empty() ? i : ps.source_index[i]);
    }
    return out;
}

/// Whole sampling stage for one stream: windows -> normalize -> resample.
/// Empty windows are skipped. Per-window RNG streams are derived as
/// seed xor window_index so results do not depend on processing order.
inline std::vector<PointSet> sample_stream(const EventStream& s, const SamplerConfig& cfg) {
    std::vector<EventWindow> windows = slide_windows(s, cfg);
    std::vector<PointSet> out;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].events.empty()) continue;
        Rng rng(cfg.seed ^ static_cast<std::uint64_t>(i));
        out.push_back(resample_to_n(normalize_window(windows[i]), cfg.n_points, rng));
    }
    return out;
}

}  // namespace evmae
