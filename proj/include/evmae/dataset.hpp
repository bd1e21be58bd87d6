#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evmae/patch.hpp"
#include "evmae/rng.hpp"
#include "evmae/sampler.hpp"
#include "evmae/synth.hpp"

namespace evmae {

/// One training sample: a window's patches plus provenance and, for
/// classification, a label.
struct Sample {
    std::string id;  // stream id + window index; the hash-split key
    PatchSet patches;
    std::size_t label = 0;
    std::vector<std::uint8_t> point_is_noise;  // per PointSet row, when known
};

/// Deterministic 80/20 split: a sample is held out iff its id hashes to 0 mod 5.
inline bool is_holdout(const std::string& id) { return fnv1a(id) % 5 == 0; }

/// Window, normalize, resample, and patch one stream. Patch RNG streams are
/// derived from the patch seed and the sample id, so per-sample regeneration
/// is order-independent.
inline std::vector<Sample> samples_from_stream(const std::string& stream_id,
                                               const EventStream& stream,
                                               const SamplerConfig& sampler_cfg,
                                               const PatchConfig& patch_cfg, PatchMethod method,
                                               std::size_t label = 0,
                                               const std::vector<std::uint8_t>* is_noise = nullptr) {
    std::vector<Sample> out;
    const std::vector<EventWindow> windows = slide_windows(stream, sampler_cfg);
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        if (windows[wi].events.empty()) continue;
        // per-event noise labels ride along via window-relative source rows
        std::vector<std::uint8_t> window_noise;
        if (is_noise != nullptr) {
            std::size_t base = 0;
            while (base < stream.events.size() && stream.events[base].t < windows[wi].t_start)
                ++base;
            window_noise.assign(is_noise->begin() + static_cast<std::ptrdiff_t>(base),
                                is_noise->begin() +
                                    static_cast<std::ptrdiff_t>(base + windows[wi].events.size()));
        }
        Rng window_rng(sampler_cfg.seed ^ static_cast<std::uint64_t>(wi));
        PointSet ps =
            resample_to_n(normalize_window(windows[wi]), sampler_cfg.n_points, window_rng);

        Sample s;
        s.id = stream_id + "#" + std::to_string(wi);
        s.label = label;
        Rng patch_rng(mix64(patch_cfg.seed, fnv1a(s.id)));
        s.patches = generate_patches(ps, patch_cfg, method, patch_rng);
        if (is_noise != nullptr) {
            s.point_is_noise.reserve(ps.size());
            for (std::size_t row = 0; row < ps.size(); ++row)
                s.point_is_noise.push_back(window_noise[ps.source_index[row]]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Fraction of patch member points carrying the noise label.
inline double patch_noise_fraction(const Sample& s) {
    require(!s.point_is_noise.empty(), errc::empty_input, "sample has no noise labels");
    std::size_t noise = 0, total = 0;
    for (const Patch& p : s.patches.patches)
        for (std::size_t row : p.point_index) {
            ++total;
            noise += s.point_is_noise[row];
        }
    require(total > 0, errc::empty_set, "no patch members");
    return static_cast<double>(noise) / static_cast<double>(total);
}

}  // namespace evmae
