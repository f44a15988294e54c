#pragma once

#include <cstdint>

namespace chaosld {

/// splitmix64: tiny counter-friendly generator with a well mixed avalanche.
/// One instance per sample keeps ensemble generation order-independent.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// uniform in [0, 1), 53-bit resolution, identical on every platform
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// uniform in [lo, hi)
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        // 64-bit multiply-shift; bias is negligible for the n used here
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }
};

/// Derive an independent stream key from a seed and stream indices.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0) {
    SplitMix64 g(seed);
    std::uint64_t k = g.next_u64();
    k ^= a + 0x9e3779b97f4a7c15ULL + (k << 6) + (k >> 2);
    SplitMix64 h(k);
    std::uint64_t m = h.next_u64();
    m ^= b + 0x9e3779b97f4a7c15ULL + (m << 6) + (m >> 2);
    return SplitMix64(m).next_u64();
}

} // namespace chaosld
