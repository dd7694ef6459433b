#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "wds/cell.hpp"
#include "wds/fast_log.hpp"
#include "wds/rng.hpp"

// 0-bit consistent weighted sampling. For a random member of this family,
// two sparse nonnegative vectors collide with probability equal to their
// Min-Max similarity (up to a small additive term), plus a ~1/B floor from
// rehashing the winning index into [0, B).
//
// Parameters for every (row, gene) pair are generated lazily from the
// counter-based PRNG; nothing per-dimension is ever materialized, keeping
// memory independent of the vocabulary size.

namespace wds {

struct HashFamilyConfig {
    uint64_t seed = 0;
    uint32_t n_rows = 100;   // R, number of independent hash functions
    uint32_t range = 10000;  // B, bucket count per row
};

inline void validate(const HashFamilyConfig& cfg) {
    if (cfg.n_rows < 1) throw std::invalid_argument("hash config: R must be >= 1");
    if (cfg.range < 2) throw std::invalid_argument("hash config: B must be >= 2");
}

struct CwsParams {
    double r;     // Gamma(2,1)
    double c;     // Gamma(2,1)
    double beta;  // Uniform[0,1)
};

namespace cws_detail {

inline constexpr uint64_t kSaltR = 0x7c4f1d2e9b8a6053ULL;
inline constexpr uint64_t kSaltC = 0x3b9e2c7f501d8a64ULL;
inline constexpr uint64_t kSaltBeta = 0xd16c5b3a8e7f4921ULL;
inline constexpr uint64_t kSaltBucket = 0x94e3a1c6d2b87f05ULL;

[[nodiscard]] constexpr uint64_t row_state(uint64_t seed, uint32_t row) noexcept {
    return rng::absorb(seed, row);
}

// Gamma(2,1) as the sum of two exponentials: -ln(u1) - ln(u2) = -ln(u1*u2).
// Branch-free and exact for (0,1) inputs.
[[nodiscard]] inline CwsParams params_from_state(uint64_t h) noexcept {
    const uint64_t o1 = rng::mix64(h ^ kSaltR);
    const uint64_t o2 = rng::mix64(h ^ kSaltC);
    const uint64_t o3 = rng::mix64(h ^ kSaltBeta);
    const double u12 = rng::unit_from_bits32(static_cast<uint32_t>(o1 >> 32)) *
                       rng::unit_from_bits32(static_cast<uint32_t>(o1));
    const double u34 = rng::unit_from_bits32(static_cast<uint32_t>(o2 >> 32)) *
                       rng::unit_from_bits32(static_cast<uint32_t>(o2));
    return CwsParams{-fastmath::fast_log(u12), -fastmath::fast_log(u34),
                     rng::unit_from_bits32(static_cast<uint32_t>(o3 >> 32))};
}

[[nodiscard]] inline uint32_t rehash_index(uint64_t row_st, uint32_t gene,
                                           uint32_t range) noexcept {
    const uint64_t h = rng::mix64(rng::absorb(row_st, gene) ^ kSaltBucket);
    return static_cast<uint32_t>((static_cast<uint64_t>(h >> 32) * range) >> 32);
}

// Core of one hash row over a cell's entries. ln_levels[i] must hold
// ln(entries[i].level); callers cache it once per cell across all rows.
[[nodiscard]] inline uint32_t hash_entries(std::span<const CellEntry> entries,
                                           std::span<const double> ln_levels,
                                           uint64_t row_st, uint32_t range) noexcept {
    double best = std::numeric_limits<double>::infinity();
    uint32_t best_gene = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
        const uint32_t gene = entries[i].gene;
        const uint64_t h = rng::absorb(row_st, gene);
        const CwsParams p = params_from_state(h);
        const double t = std::floor(ln_levels[i] / p.r + p.beta);
        const double ln_y = p.r * (t - p.beta);
        const double ln_a = fastmath::fast_log(p.c) - ln_y - p.r;
        if (ln_a < best) {
            best = ln_a;
            best_gene = gene;
        }
    }
    return rehash_index(row_st, best_gene, range);
}

}  // namespace cws_detail

// Deterministic lazy parameter triple for dimension `gene` in hash row `row`.
[[nodiscard]] inline CwsParams cws_params(uint64_t seed, uint32_t row, uint32_t gene) noexcept {
    return cws_detail::params_from_state(
        rng::absorb(cws_detail::row_state(seed, row), gene));
}

// Bucket of cell x under hash row `row`; always in [0, config.range).
[[nodiscard]] uint32_t hash_cell(const CellVector& x, const HashFamilyConfig& config,
                                 uint32_t row);

// Fills ln(level) for each entry; scratch buffer reused by hot loops.
void fill_ln_levels(const CellVector& x, std::vector<double>& ln_levels);

}  // namespace wds
