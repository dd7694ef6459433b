#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "wds/attention.hpp"
#include "wds/cell.hpp"
#include "wds/sampler.hpp"

// Scatter-accumulation of per-cell attention maps into global sparse Z
// (interaction sums) and M (pair weights), and the finalize step that ranks
// gene pairs by Z/M. V can be tens of thousands, so dense V x V arrays are
// out; sparse maps keyed by the directed gene pair preserve the exact
// semantics for every observed pair.

namespace wds {

using PairKey = uint64_t;

[[nodiscard]] constexpr PairKey pair_key(uint32_t i, uint32_t j) noexcept {
    return (static_cast<uint64_t>(i) << 32) | j;
}
[[nodiscard]] constexpr uint32_t pair_first(PairKey k) noexcept {
    return static_cast<uint32_t>(k >> 32);
}
[[nodiscard]] constexpr uint32_t pair_second(PairKey k) noexcept {
    return static_cast<uint32_t>(k);
}

class InteractionAccumulator {
public:
    struct ZM {
        double z = 0.0;  // weighted sum of attention values
        double m = 0.0;  // weighted pair occurrence count
    };

    // Scatter-add every off-diagonal map entry: Z[(g_p,g_q)] += w * A[p][q],
    // M[(g_p,g_q)] += w. Diagonal entries are self-interaction and dropped.
    void accumulate_cell(const AttentionMap& map, double weight = 1.0);

    void merge(const InteractionAccumulator& other);

    [[nodiscard]] bool empty() const noexcept { return zm_.empty(); }
    [[nodiscard]] size_t n_pairs() const noexcept { return zm_.size(); }
    [[nodiscard]] double weight_total() const noexcept { return weight_total_; }
    [[nodiscard]] const std::unordered_map<PairKey, ZM>& entries() const noexcept {
        return zm_;
    }

    // Checkpoint: "ZM1 n_pairs weight_total" header, then "i j z m" lines in
    // key order.
    void save(std::ostream& out) const;
    static InteractionAccumulator load(std::istream& in);

private:
    std::unordered_map<PairKey, ZM> zm_;
    double weight_total_ = 0.0;
};

struct RankedPair {
    uint32_t i = 0;  // canonical: i < j
    uint32_t j = 0;
    double score = 0.0;
    double support = 0.0;
};

using RankedPairs = std::vector<RankedPair>;

// Per-key score Z/M; the two directions of a pair are averaged (or the one
// present is kept), keys canonicalized to i < j, sorted by descending score
// with (i, j) lexicographic tie-break. Summation order is fixed by a key
// sort, so the output does not depend on accumulation order.
RankedPairs finalize(const InteractionAccumulator& acc);

enum class AggregationMode { kAll, kPositiveOnly, kContrastive };

AggregationMode parse_aggregation_mode(const std::string& name);

// Runs the forward pass over the requested cells and accumulates. kAll uses
// every cell, kPositiveOnly the label-1 cells, kContrastive subtracts the
// finalized negative scores from the finalized positive scores pair-wise
// (missing side = 0) and re-ranks.
RankedPairs aggregate(const Dataset& dataset, const Model& model, AggregationMode mode,
                      size_t batch_size = 64);

// Weighted estimator over a sampled subset: accumulate_cell(weight = I(x)),
// so finalize yields sum(Z_x * I(x)) / sum over occurrences of I(x) per pair.
RankedPairs estimated_interaction(const Dataset& dataset, const Model& model,
                                  const SampledSubset& subset, size_t batch_size = 64);

enum class CorrelationMethod { kPearson, kSpearman };

// Co-expression difference baseline: per canonical pair of genes expressed
// in at least min_cells cells of each label group, score = corr within
// positive cells minus corr within negative cells (zeros included as 0).
RankedPairs baseline_correlation_rank(const Dataset& dataset, CorrelationMethod method,
                                      size_t min_cells = 10);

void write_ranked_pairs(std::ostream& out, const RankedPairs& pairs,
                        const Dataset* symbol_source = nullptr);
RankedPairs read_ranked_pairs(std::istream& in);

}  // namespace wds
