#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wds/sketch.hpp"

// Inverse Min-Max density sampling: softmax of 1/density gives each cell a
// probability, then a weighted without-replacement draw keeps the k cells
// with the largest exponential keys.

namespace wds {

struct SamplingPlan {
    std::vector<std::string> ids;
    std::vector<double> prob;  // sums to 1, every entry > 0
    uint64_t seed = 0;
};

struct SampledSubset {
    std::vector<std::pair<std::string, double>> members;  // (cell_id, probability)
    size_t target_k = 0;
};

// Numerically stable softmax (max subtraction); exact under a common shift
// of the inputs whenever the shifted values round to the same doubles.
std::vector<double> softmax_stable(std::span<const double> scores);

// I(q) = softmax over cells of 1/w_q. Rejects non-positive densities.
SamplingPlan imd(const DiversityScores& scores, uint64_t seed);

SamplingPlan uniform_plan(std::vector<std::string> ids, uint64_t seed);

// Weighted sampling without replacement via exponential keys: cell x gets
// key ln(u_x)/I(x) and the k largest keys win. The first draw is
// proportional to I(x) exactly; later draws follow the usual
// without-replacement conditioning. Deterministic in (plan, seed, k).
SampledSubset sample_without_replacement(const SamplingPlan& plan, size_t k);

// Variance factor of the weighted estimator: sum(I^2) / (sum I)^2 over the
// subset. Equals 1/k for k equal weights.
double variance_factor(const SampledSubset& subset);

void write_plan(std::ostream& out, const SamplingPlan& plan);
void write_subset(std::ostream& out, const SampledSubset& subset);
SampledSubset read_subset(std::istream& in);

}  // namespace wds
