#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <vector>

#include "evmae/dataset.hpp"
#include "evmae/plane.hpp"
#include "evmae/sampler.hpp"
#include "evmae/synth.hpp"

using namespace evmae;

namespace {

bool streams_equal(const EventStream& a, const EventStream& b) {
    if (a.width != b.width || a.height != b.height) return false;
    if (a.events.size() != b.events.size()) return false;
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        const Event &ea = a.events[i], &eb = b.events[i];
        if (ea.x != eb.x || ea.y != eb.y || ea.t != eb.t || ea.p != eb.p) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("planar stream respects sensor bounds and time order") {
    SynthConfig cfg;
    cfg.seed = 11;
    Rng rng(cfg.seed);
    const SynthStream s = gen_planar_stream(cfg, rng);
    REQUIRE(s.stream.width == cfg.width);
    REQUIRE(s.stream.height == cfg.height);
    REQUIRE(s.is_noise.size() == s.stream.events.size());
    REQUIRE(!s.stream.events.empty());
    const std::uint64_t max_t = static_cast<std::uint64_t>(cfg.duration_s * 1e6);
    for (std::size_t i = 0; i < s.stream.events.size(); ++i) {
        const Event& e = s.stream.events[i];
        CHECK(e.x < cfg.width);
        CHECK(e.y < cfg.height);
        CHECK(e.t <= max_t);
        CHECK((e.p == 0 || e.p == 1));
        if (i > 0) CHECK(s.stream.events[i - 1].t <= e.t);
    }
}

TEST_CASE("event counts track the configured rates") {
    SynthConfig cfg;
    cfg.inlier_rate = 10000.0;  // 5000 expected edge events over 0.5 s
    cfg.noise_rate = 1000.0;    // 500 expected background events
    cfg.seed = 3;
    Rng rng(cfg.seed);
    const SynthStream s = gen_planar_stream(cfg, rng);
    std::size_t noise = 0;
    for (std::uint8_t f : s.is_noise) noise += f;
    const std::size_t edge = s.stream.events.size() - noise;
    // 5 sigma of the respective Poisson counts
    CHECK(std::llabs(static_cast<long long>(edge) - 5000) < 354);
    CHECK(std::llabs(static_cast<long long>(noise) - 500) < 112);
}

TEST_CASE("edge polarity splits roughly evenly") {
    SynthConfig cfg;
    cfg.noise_rate = 0.0;
    cfg.seed = 5;
    Rng rng(cfg.seed);
    const SynthStream s = gen_planar_stream(cfg, rng);
    std::size_t pos = 0;
    for (const Event& e : s.stream.events) pos += e.p;
    const double frac = static_cast<double>(pos) / static_cast<double>(s.stream.events.size());
    CHECK(frac > 0.4);
    CHECK(frac < 0.6);
}

TEST_CASE("same seed reproduces the stream and its labels") {
    SynthConfig cfg;
    cfg.direction_rad = 1.1;
    cfg.seed = 42;
    Rng r1(cfg.seed), r2(cfg.seed);
    const SynthStream a = gen_planar_stream(cfg, r1);
    const SynthStream b = gen_planar_stream(cfg, r2);
    REQUIRE(streams_equal(a.stream, b.stream));
    REQUIRE(a.is_noise == b.is_noise);
}

TEST_CASE("noise-free neighbourhoods all sit near a plane") {
    SynthConfig cfg;
    cfg.noise_rate = 0.0;
    cfg.seed = 9;
    const double angles[] = {0.0, 0.9};
    for (double angle : angles) {
        cfg.direction_rad = angle;
        Rng rng(cfg.seed);
        const SynthStream s = gen_planar_stream(cfg, rng);

        SamplerConfig sc;
        sc.window_s = 1.0;  // longer than the stream: one window holds everything
        sc.step_s = 1.0;
        const std::vector<EventWindow> windows = slide_windows(s.stream, sc);
        REQUIRE(windows.size() == 1);
        const PointSet ps = normalize_window(windows[0]);

        const std::size_t k = 32;
        REQUIRE(ps.size() > 10 * k);
        double worst = 0.0;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const std::vector<std::size_t> nn = knn_group(ps.xyz, i, k);
            std::vector<double> local;
            local.reserve(3 * k);
            for (std::size_t j : nn) {
                local.push_back(ps.x(i) - ps.x(j));
                local.push_back(ps.y(i) - ps.y(j));
                local.push_back(ps.t(i) - ps.t(j));
            }
            const double r = fit_plane(local).residual_mean_abs;
            worst = std::max(worst, r);
        }
        INFO("direction " << angle << " worst residual " << worst);
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("zero rates produce an empty stream without failing") {
    SynthConfig cfg;
    cfg.inlier_rate = 0.0;
    cfg.noise_rate = 0.0;
    Rng rng(1);
    const SynthStream s = gen_planar_stream(cfg, rng);
    CHECK(s.stream.events.empty());
    CHECK(s.is_noise.empty());
}

TEST_CASE("config validation rejects bad fields") {
    auto code_is = [](errc c) {
        return Catch::Matchers::Predicate<Error>([c](const Error& e) { return e.code() == c; });
    };
    SynthConfig cfg;
    cfg.duration_s = 0.0;
    CHECK_THROWS_MATCHES(cfg.validate(), Error, code_is(errc::invalid_config));
    cfg = SynthConfig{};
    cfg.inlier_rate = -1.0;
    CHECK_THROWS_MATCHES(cfg.validate(), Error, code_is(errc::invalid_config));
    cfg = SynthConfig{};
    CHECK_THROWS_MATCHES(gen_classification_set(10, 1, cfg, 0), Error,
                         code_is(errc::invalid_config));
    CHECK_THROWS_MATCHES(gen_classification_set(10, 9, cfg, 0), Error,
                         code_is(errc::invalid_config));
}

TEST_CASE("classification set is balanced with spaced directions") {
    SynthConfig base;
    base.inlier_rate = 400.0;  // keep the set small; balance is what matters
    base.noise_rate = 60.0;
    const std::size_t n_classes = 3;
    const auto set = gen_classification_set(300, n_classes, base, 7);
    REQUIRE(set.size() == 300);
    std::vector<std::size_t> per_class(n_classes, 0);
    std::vector<double> dir(n_classes, -1.0);
    for (const LabeledStream& ls : set) {
        REQUIRE(ls.label < n_classes);
        ++per_class[ls.label];
        dir[ls.label] = ls.direction_rad;
    }
    for (std::size_t c = 0; c < n_classes; ++c) CHECK(per_class[c] == 100);

    const double two_pi = 2.0 * 3.14159265358979323846;
    for (std::size_t a = 0; a < n_classes; ++a)
        for (std::size_t b = a + 1; b < n_classes; ++b) {
            double d = std::fabs(dir[a] - dir[b]);
            d = std::min(d, two_pi - d);
            CHECK(d >= two_pi / static_cast<double>(n_classes) - 1e-12);
        }
}

TEST_CASE("classification set regenerates identically") {
    SynthConfig base;
    base.inlier_rate = 500.0;
    base.noise_rate = 50.0;
    const auto a = gen_classification_set(12, 4, base, 21);
    const auto b = gen_classification_set(12, 4, base, 21);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].label == b[i].label);
        CHECK(streams_equal(a[i].stream, b[i].stream));
    }
    // same class, different sample index: independent draws, not clones
    CHECK_FALSE(streams_equal(a[0].stream, a[4].stream));
}

TEST_CASE("samples_from_stream propagates noise labels into patches") {
    SynthConfig cfg;
    cfg.inlier_rate = 3000.0;
    cfg.noise_rate = 600.0;
    cfg.seed = 17;
    Rng rng(cfg.seed);
    const SynthStream s = gen_planar_stream(cfg, rng);

    SamplerConfig sc;
    sc.n_points = 512;
    sc.seed = 1;
    PatchConfig pc;
    pc.m = 24;
    pc.k = 16;
    pc.seed = 2;
    const auto inlier =
        samples_from_stream("s", s.stream, sc, pc, PatchMethod::inlier, 0, &s.is_noise);
    const auto fps = samples_from_stream("s", s.stream, sc, pc, PatchMethod::fps, 0, &s.is_noise);
    REQUIRE(!inlier.empty());
    REQUIRE(inlier.size() == fps.size());
    double inlier_frac = 0, fps_frac = 0;
    for (const Sample& smp : inlier) inlier_frac += patch_noise_fraction(smp);
    for (const Sample& smp : fps) fps_frac += patch_noise_fraction(smp);
    inlier_frac /= static_cast<double>(inlier.size());
    fps_frac /= static_cast<double>(fps.size());
    INFO("inlier " << inlier_frac << " fps " << fps_frac);
    CHECK(inlier_frac < fps_frac);
    // ~17% of generated events are noise; both fractions must be plausible
    CHECK(fps_frac > 0.01);
    CHECK(inlier_frac < 0.25);
}

TEST_CASE("holdout split is deterministic and roughly 20 percent") {
    std::size_t held = 0;
    const std::size_t total = 5000;
    for (std::size_t i = 0; i < total; ++i) {
        const std::string id = "sample_" + std::to_string(i) + "#0";
        const bool h = is_holdout(id);
        CHECK(h == is_holdout(id));
        held += h;
    }
    const double frac = static_cast<double>(held) / static_cast<double>(total);
    CHECK(frac > 0.15);
    CHECK(frac < 0.25);
}
