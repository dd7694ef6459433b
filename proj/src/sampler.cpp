#include "wds/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <istream>
#include <stdexcept>

#include "wds/rng.hpp"

namespace wds {

namespace {
constexpr uint64_t kKeyTag = 0x5ca1ab1e0ddba11ULL;
}

std::vector<double> softmax_stable(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("softmax of empty input");
    double c = scores[0];
    for (double s : scores) c = std::max(c, s);
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - c);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

SamplingPlan imd(const DiversityScores& scores, uint64_t seed) {
    if (scores.w.empty()) throw std::invalid_argument("imd: no densities");
    std::vector<double> inv(scores.w.size());
    for (size_t i = 0; i < scores.w.size(); ++i) {
        if (!(scores.w[i] > 0.0))
            throw std::invalid_argument("imd: non-positive density for cell '" +
                                        scores.ids[i] + "'");
        inv[i] = 1.0 / scores.w[i];
    }
    SamplingPlan plan;
    plan.ids = scores.ids;
    plan.prob = softmax_stable(inv);
    plan.seed = seed;
    return plan;
}

SamplingPlan uniform_plan(std::vector<std::string> ids, uint64_t seed) {
    if (ids.empty()) throw std::invalid_argument("uniform_plan: no cells");
    SamplingPlan plan;
    plan.prob.assign(ids.size(), 1.0 / static_cast<double>(ids.size()));
    plan.ids = std::move(ids);
    plan.seed = seed;
    return plan;
}

SampledSubset sample_without_replacement(const SamplingPlan& plan, size_t k) {
    const size_t n = plan.ids.size();
    SampledSubset subset;
    subset.target_k = k;
    const size_t take = std::min(k, n);
    if (take == 0) return subset;

    // Keys in log domain: ln(u)^(1/I) would underflow for tiny I, but the
    // ordering of ln(u)/I is identical.
    const uint64_t base = rng::absorb(plan.seed, kKeyTag);
    std::vector<std::pair<double, size_t>> keyed(n);
    const auto n64 = static_cast<int64_t>(n);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n64; ++i) {
        const double u = rng::unit(rng::absorb(base, static_cast<uint64_t>(i)));
        keyed[i] = {std::log(u) / plan.prob[i], static_cast<size_t>(i)};
    }
    auto larger = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<ptrdiff_t>(take),
                      keyed.end(), larger);
    subset.members.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        const size_t idx = keyed[i].second;
        subset.members.emplace_back(plan.ids[idx], plan.prob[idx]);
    }
    return subset;
}

double variance_factor(const SampledSubset& subset) {
    if (subset.members.empty()) throw std::invalid_argument("variance_factor: empty subset");
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& [id, p] : subset.members) {
        sum += p;
        sum_sq += p * p;
    }
    return sum_sq / (sum * sum);
}

namespace {
void write_pairs(std::ostream& out, const std::vector<std::string>& ids,
                 const std::vector<double>& probs) {
    char buf[40];
    for (size_t i = 0; i < ids.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", probs[i]);
        out << ids[i] << '\t' << buf << '\n';
    }
}
}  // namespace

void write_plan(std::ostream& out, const SamplingPlan& plan) {
    write_pairs(out, plan.ids, plan.prob);
}

void write_subset(std::ostream& out, const SampledSubset& subset) {
    char buf[40];
    for (const auto& [id, p] : subset.members) {
        std::snprintf(buf, sizeof buf, "%.17g", p);
        out << id << '\t' << buf << '\n';
    }
}

SampledSubset read_subset(std::istream& in) {
    SampledSubset subset;
    std::string id;
    double p = 0.0;
    while (in >> id >> p) subset.members.emplace_back(id, p);
    subset.target_k = subset.members.size();
    return subset;
}

}  // namespace wds
