#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace uniview {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic random stream. mt19937_64 is bit-exact across platforms and
// the distributions below are hand-rolled, so sequences never depend on the
// standard library's (implementation-defined) distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = ~0ull - (~0ull % span);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return lo + static_cast<std::int64_t>(v % span);
    }

    // Standard normal via Box-Muller; consumes exactly two draws per call.
    double gauss() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gauss(double mean, double stddev) { return mean + stddev * gauss(); }

private:
    std::mt19937_64 eng_;
};

// Every random choice in the system flows from one top-level seed through
// named substreams ("data", "noise", "sampling", "reference", ...), optionally
// indexed per item so work units stay independent of processing order.
inline Rng substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(root_seed ^ fnv1a64(name));
    s = splitmix64(s ^ (0x9e3779b97f4a7c15ull * (index + 1)));
    return Rng(s);
}

}  // namespace uniview
