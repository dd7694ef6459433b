#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wds/interact.hpp"

// Enrichment scoring of a ranked pair list against a ground-truth pair set.
// The running tally rises by 1/N_h at a hit and falls by 1/(N - N_h) at a
// miss; ES is the signed extremum of that trajectory. NES normalizes ES by
// the mean |ES| of uniformly re-shuffled hit positions of the same sign.

namespace wds {

struct GroundTruthSet {
    std::unordered_set<PairKey> pairs;  // canonical i < j
    uint64_t skipped_self = 0;
    uint64_t skipped_unknown = 0;
    uint64_t skipped_duplicate = 0;

    [[nodiscard]] bool contains(uint32_t i, uint32_t j) const {
        return pairs.count(i < j ? pair_key(i, j) : pair_key(j, i)) != 0;
    }
};

// Two whitespace-separated columns per line; integer indices or symbols,
// auto-detected. Symbol mode needs symbol_to_index; unknown symbols and
// self-pairs are skipped and counted, duplicates collapse.
GroundTruthSet parse_ground_truth(
    std::istream& in,
    const std::unordered_map<std::string, uint32_t>* symbol_to_index = nullptr);

struct EnrichmentResult {
    double es = 0.0;
    double nes = 0.0;
    uint64_t n_hits = 0;
    uint64_t n_total = 0;
    uint64_t n_permutations = 0;
    uint64_t seed = 0;
    // Set when no permutation ES shared the sign of ES and the
    // normalization fell back to the all-permutation mean.
    bool sign_fallback = false;
};

// Tally values are computed from the integer hit/miss counts, so the
// extremal placements evaluate to exactly +1 or -1. The trajectory only
// moves up at hits, which makes the hit positions (plus the first miss and
// the final zero) a complete set of extremum candidates; this matches the
// full per-position walk value for value.
double es_from_hit_positions(std::span<const uint32_t> sorted_hit_positions,
                             uint64_t n_total);

// Throws when there are zero hits or when every ranked pair is a hit.
double enrichment_score(const RankedPairs& ranked, const GroundTruthSet& gt);

// Permutation-normalized score; permutation streams are keyed on
// (seed, permutation index), so results are thread-count independent.
EnrichmentResult nes(const RankedPairs& ranked, const GroundTruthSet& gt,
                     uint64_t n_perm, uint64_t seed);
EnrichmentResult nes_serial(const RankedPairs& ranked, const GroundTruthSet& gt,
                            uint64_t n_perm, uint64_t seed);

void write_enrichment(std::ostream& out, const EnrichmentResult& result);

}  // namespace wds
