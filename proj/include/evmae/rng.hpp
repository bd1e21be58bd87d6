#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace evmae {

/// splitmix64 scrambler; used to spread seeds and to derive independent
/// sub-stream seeds so results do not depend on processing order.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

/// FNV-1a, used to key deterministic per-sample behaviour off stable ids.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic RNG. mt19937_64 supplies the bit stream; the distributions
/// are implemented here because the std ones are implementation-defined and
/// outputs must be reproducible bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    /// uniform in [0,1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n); n must be > 0. Rejection sampling keeps the
    /// draw unbiased.
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = gen_();
        } while (r >= limit);
        return static_cast<std::size_t>(r % bound);
    }

    bool coin() { return (gen_() >> 63) != 0; }

    /// standard normal via Box-Muller (cached spare kept for determinism)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// normal(0, sigma) clipped by resampling to [-2 sigma, 2 sigma]
    double truncated_normal(double sigma) {
        double v;
        do {
            v = normal();
        } while (v < -2.0 || v > 2.0);
        return v * sigma;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Fisher-Yates draw of n distinct indices from [0, pool). Order of the
/// result is the draw order. Returns the first n entries of a partially
/// shuffled identity permutation.
inline std::vector<std::size_t> sample_without_replacement(std::size_t pool, std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n && i + 1 < pool; ++i) {
        std::size_t j = i + rng.index(pool - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

}  // namespace evmae
