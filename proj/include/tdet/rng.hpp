#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tdet {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Derive an independent stream seed from a root seed and a purpose tag.
// Every stochastic stage pulls its own stream so the call order of one
// stage can never perturb another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    return detail::splitmix64(seed ^ detail::fnv1a64(tag));
}

// Deterministic random source. All draws go through explicit helpers
// instead of std distributions, which keeps the byte-for-byte
// reproducibility contract independent of the standard library build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
    // draw unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % range);
    }

    // Standard normal via Box-Muller. Always consumes exactly two uniforms;
    // no cached spare, so the stream position is a pure function of the
    // number of calls.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Independent child stream.
    Rng fork(std::string_view tag) {
        return Rng(derive_seed(next_u64(), tag));
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace tdet
