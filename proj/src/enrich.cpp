#include "wds/enrich.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wds/rng.hpp"

namespace wds {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

bool is_index_token(const std::string& tok) {
    return !tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos;
}

std::vector<uint32_t> hit_positions(const RankedPairs& ranked, const GroundTruthSet& gt) {
    std::vector<uint32_t> pos;
    for (size_t idx = 0; idx < ranked.size(); ++idx)
        if (gt.contains(ranked[idx].i, ranked[idx].j)) pos.push_back(static_cast<uint32_t>(idx));
    return pos;
}

}  // namespace

GroundTruthSet parse_ground_truth(
    std::istream& in, const std::unordered_map<std::string, uint32_t>* symbol_to_index) {
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    bool all_indices = true;
    while (std::getline(in, line)) {
        const size_t at = line.find_first_not_of(" \t\r\n");
        if (at == std::string::npos) continue;
        if (line[at] == '%' || line[at] == '#') continue;
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a >> b) || (ss >> extra))
            fail("malformed ground-truth line: '" + line + "'");
        all_indices = all_indices && is_index_token(a) && is_index_token(b);
        rows.emplace_back(std::move(a), std::move(b));
    }

    GroundTruthSet gt;
    if (!all_indices && symbol_to_index == nullptr)
        fail("ground truth uses gene symbols but no symbol table was given");
    for (const auto& [a, b] : rows) {
        uint32_t i = 0, j = 0;
        if (all_indices) {
            i = static_cast<uint32_t>(std::stoul(a));
            j = static_cast<uint32_t>(std::stoul(b));
        } else {
            const auto ia = symbol_to_index->find(a);
            const auto ib = symbol_to_index->find(b);
            if (ia == symbol_to_index->end() || ib == symbol_to_index->end()) {
                ++gt.skipped_unknown;
                continue;
            }
            i = ia->second;
            j = ib->second;
        }
        if (i == j) {
            ++gt.skipped_self;
            continue;
        }
        if (!gt.pairs.insert(i < j ? pair_key(i, j) : pair_key(j, i)).second)
            ++gt.skipped_duplicate;
    }
    return gt;
}

double es_from_hit_positions(std::span<const uint32_t> pos, uint64_t n_total) {
    const uint64_t n_hits = pos.size();
    if (n_hits == 0) fail("enrichment score: zero hits in the ranked list");
    if (n_hits >= n_total) fail("enrichment score: every ranked pair is a hit");
    const auto hits = static_cast<double>(n_hits);
    const auto misses = static_cast<double>(n_total - n_hits);

    double max_dev = -std::numeric_limits<double>::infinity();
    double min_dev = 0.0;  // trajectory ends at exactly 0
    for (uint64_t j = 1; j <= n_hits; ++j) {
        const double before = static_cast<double>(pos[j - 1] - (j - 1));
        const double pre = static_cast<double>(j - 1) / hits - before / misses;
        const double post = static_cast<double>(j) / hits - before / misses;
        min_dev = std::min(min_dev, pre);
        max_dev = std::max(max_dev, post);
    }
    if (pos[0] > 0) max_dev = std::max(max_dev, -1.0 / misses);
    return std::abs(max_dev) >= std::abs(min_dev) ? max_dev : min_dev;
}

double enrichment_score(const RankedPairs& ranked, const GroundTruthSet& gt) {
    const auto pos = hit_positions(ranked, gt);
    return es_from_hit_positions(pos, ranked.size());
}

namespace {

EnrichmentResult nes_impl(const RankedPairs& ranked, const GroundTruthSet& gt,
                          uint64_t n_perm, uint64_t seed, bool parallel) {
    if (n_perm < 1) fail("nes: n_perm must be >= 1");
    const auto pos = hit_positions(ranked, gt);
    const uint64_t n_total = ranked.size();
    const double es = es_from_hit_positions(pos, n_total);

    const uint64_t perm_base = rng::derive(seed, "nes-permutation");
    std::vector<double> perm_es(n_perm);
    const auto np = static_cast<int64_t>(n_perm);
    const auto n_hits = pos.size();

#pragma omp parallel if (parallel)
    {
        std::vector<uint32_t> index;
        std::vector<uint32_t> picked(n_hits);
#pragma omp for schedule(static)
        for (int64_t p = 0; p < np; ++p) {
            rng::Stream stream(rng::absorb(perm_base, static_cast<uint64_t>(p)));
            // partial Fisher-Yates: uniform n_hits-subset of [0, n_total)
            index.resize(n_total);
            std::iota(index.begin(), index.end(), 0u);
            for (size_t k = 0; k < n_hits; ++k) {
                const auto pick = k + static_cast<size_t>(stream.below(n_total - k));
                std::swap(index[k], index[pick]);
                picked[k] = index[k];
            }
            std::sort(picked.begin(), picked.end());
            perm_es[p] = es_from_hit_positions(picked, n_total);
        }
    }

    double same_sign_sum = 0.0;
    uint64_t same_sign_count = 0;
    double all_sum = 0.0;
    for (double e : perm_es) {
        all_sum += std::abs(e);
        const bool same = es >= 0.0 ? e >= 0.0 : e < 0.0;
        if (same) {
            same_sign_sum += std::abs(e);
            ++same_sign_count;
        }
    }

    EnrichmentResult result;
    result.es = es;
    result.n_hits = n_hits;
    result.n_total = n_total;
    result.n_permutations = n_perm;
    result.seed = seed;
    if (same_sign_count > 0) {
        result.nes = es / (same_sign_sum / static_cast<double>(same_sign_count));
    } else {
        result.sign_fallback = true;
        result.nes = es / (all_sum / static_cast<double>(n_perm));
    }
    return result;
}

}  // namespace

EnrichmentResult nes(const RankedPairs& ranked, const GroundTruthSet& gt, uint64_t n_perm,
                     uint64_t seed) {
    return nes_impl(ranked, gt, n_perm, seed, true);
}

EnrichmentResult nes_serial(const RankedPairs& ranked, const GroundTruthSet& gt,
                            uint64_t n_perm, uint64_t seed) {
    return nes_impl(ranked, gt, n_perm, seed, false);
}

void write_enrichment(std::ostream& out, const EnrichmentResult& r) {
    char es_buf[40], nes_buf[40];
    std::snprintf(es_buf, sizeof es_buf, "%.17g", r.es);
    std::snprintf(nes_buf, sizeof nes_buf, "%.17g", r.nes);
    out << es_buf << '\t' << nes_buf << '\t' << r.n_hits << '\t' << r.n_total << '\t'
        << r.n_permutations << '\t' << r.seed;
    if (r.sign_fallback) out << "\tsign_fallback";
    out << '\n';
}

}  // namespace wds
