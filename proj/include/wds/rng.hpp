#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

// Counter-based deterministic randomness. Every random quantity in the
// toolkit is a pure function of a 64-bit key tuple, so results never depend
// on call order, thread count, or hidden generator state.

namespace wds::rng {

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer; full avalanche on 64 bits.
[[nodiscard]] constexpr uint64_t mix64(uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

// Folds one word into a running key. Chain absorb() calls to key on tuples.
[[nodiscard]] constexpr uint64_t absorb(uint64_t state, uint64_t v) noexcept {
    return mix64((state + kGolden) ^ v);
}

// Labeled sub-seed so one --seed can drive independent streams.
[[nodiscard]] inline uint64_t derive(uint64_t seed, std::string_view label) noexcept {
    uint64_t h = seed;
    for (char ch : label) h = absorb(h, static_cast<unsigned char>(ch));
    return mix64(h);
}

// Uniform draws strictly inside (0,1); never 0, so logs are always finite.
[[nodiscard]] constexpr double unit_from_bits32(uint32_t w) noexcept {
    return (static_cast<double>(w) + 0.5) * 0x1p-32;
}

[[nodiscard]] constexpr double unit_from_bits64(uint64_t w) noexcept {
    return (static_cast<double>(w >> 12) + 0.5) * 0x1p-52;
}

[[nodiscard]] inline double unit(uint64_t key) noexcept {
    return unit_from_bits64(mix64(key));
}

// One standard normal per key (Box-Muller, cosine branch).
[[nodiscard]] inline double gaussian(uint64_t key) noexcept {
    const double u1 = unit_from_bits64(mix64(key ^ 0x58f1d9d4e2a3c6b7ULL));
    const double u2 = unit_from_bits64(mix64(key ^ 0xa2c9d7e5f3b1a897ULL));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Tiny sequential stream for shuffles and rejection loops.
class Stream {
public:
    explicit constexpr Stream(uint64_t state) noexcept : state_(state) {}

    constexpr uint64_t next() noexcept { return mix64(state_ += kGolden); }

    // Unbiased-enough range map (multiply-shift); bias < 2^-32 per draw.
    uint64_t below(uint64_t n) noexcept {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    double unit() noexcept { return unit_from_bits64(next()); }

private:
    uint64_t state_;
};

}  // namespace wds::rng
