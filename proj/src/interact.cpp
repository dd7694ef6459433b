#include "wds/interact.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace wds {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr size_t kChunk = 64;  // cells per accumulation chunk == forward batch

void sort_ranked(RankedPairs& pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const RankedPair& a, const RankedPair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
}

// Deterministic parallel map-accumulate: fixed-size chunks are accumulated
// independently and merged in chunk order, so results are identical for any
// thread count.
InteractionAccumulator accumulate_cells(const std::vector<const CellVector*>& cells,
                                        const std::vector<double>& weights,
                                        const Model& model, size_t batch_size) {
    const size_t n_chunks = (cells.size() + kChunk - 1) / kChunk;
    std::vector<InteractionAccumulator> chunks(n_chunks);
    const auto nc = static_cast<int64_t>(n_chunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t c = 0; c < nc; ++c) {
        const size_t begin = static_cast<size_t>(c) * kChunk;
        const size_t end = std::min(begin + kChunk, cells.size());
        std::vector<CellVector> block;
        block.reserve(end - begin);
        for (size_t i = begin; i < end; ++i) block.push_back(*cells[i]);
        std::vector<AttentionMap> maps = model.forward_batch(block, batch_size);
        for (size_t i = 0; i < maps.size(); ++i)
            chunks[c].accumulate_cell(maps[i], weights[begin + i]);
    }
    InteractionAccumulator total;
    for (auto& chunk : chunks) total.merge(chunk);
    return total;
}

}  // namespace

void InteractionAccumulator::accumulate_cell(const AttentionMap& map, double weight) {
    if (!(weight > 0.0)) throw std::invalid_argument("accumulate_cell: weight must be > 0");
    const size_t m = map.m();
    for (size_t p = 0; p < m; ++p) {
        const uint32_t gp = map.gene_indices[p];
        for (size_t q = 0; q < m; ++q) {
            if (p == q) continue;  // self-interaction
            auto& e = zm_[pair_key(gp, map.gene_indices[q])];
            e.z += weight * map.values[p * m + q];
            e.m += weight;
        }
    }
    weight_total_ += weight;
}

void InteractionAccumulator::merge(const InteractionAccumulator& other) {
    for (const auto& [key, e] : other.zm_) {
        auto& mine = zm_[key];
        mine.z += e.z;
        mine.m += e.m;
    }
    weight_total_ += other.weight_total_;
}

void InteractionAccumulator::save(std::ostream& out) const {
    std::vector<PairKey> keys;
    keys.reserve(zm_.size());
    for (const auto& [key, e] : zm_) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    char zbuf[40], mbuf[40];
    std::snprintf(zbuf, sizeof zbuf, "%.17g", weight_total_);
    out << "ZM1 " << zm_.size() << ' ' << zbuf << '\n';
    for (PairKey key : keys) {
        const auto& e = zm_.at(key);
        std::snprintf(zbuf, sizeof zbuf, "%.17g", e.z);
        std::snprintf(mbuf, sizeof mbuf, "%.17g", e.m);
        out << pair_first(key) << ' ' << pair_second(key) << ' ' << zbuf << ' ' << mbuf
            << '\n';
    }
}

InteractionAccumulator InteractionAccumulator::load(std::istream& in) {
    std::string tag;
    size_t n = 0;
    double weight_total = 0.0;
    if (!(in >> tag >> n >> weight_total) || tag != "ZM1")
        fail("not an accumulator checkpoint");
    InteractionAccumulator acc;
    acc.weight_total_ = weight_total;
    for (size_t k = 0; k < n; ++k) {
        uint32_t i = 0, j = 0;
        ZM e;
        if (!(in >> i >> j >> e.z >> e.m)) fail("truncated accumulator checkpoint");
        acc.zm_[pair_key(i, j)] = e;
    }
    return acc;
}

RankedPairs finalize(const InteractionAccumulator& acc) {
    if (acc.empty()) fail("finalize: empty accumulator");
    std::vector<PairKey> keys;
    keys.reserve(acc.entries().size());
    for (const auto& [key, e] : acc.entries()) keys.push_back(key);
    std::sort(keys.begin(), keys.end());

    RankedPairs out;
    out.reserve(keys.size() / 2 + 1);
    const auto& zm = acc.entries();
    for (PairKey key : keys) {
        const uint32_t i = pair_first(key), j = pair_second(key);
        if (i == j) fail("finalize: diagonal key present");
        if (i > j) continue;  // handled from the (i < j) side
        const auto& fwd = zm.at(key);
        const auto rev_it = zm.find(pair_key(j, i));
        double score, support;
        if (rev_it != zm.end()) {
            score = (fwd.z / fwd.m + rev_it->second.z / rev_it->second.m) / 2.0;
            support = (fwd.m + rev_it->second.m) / 2.0;
        } else {
            score = fwd.z / fwd.m;
            support = fwd.m;
        }
        out.push_back({i, j, score, support});
    }
    // reverse-only keys
    for (PairKey key : keys) {
        const uint32_t i = pair_first(key), j = pair_second(key);
        if (i < j) continue;
        if (zm.find(pair_key(j, i)) != zm.end()) continue;
        const auto& rev = zm.at(key);
        out.push_back({j, i, rev.z / rev.m, rev.m});
    }
    sort_ranked(out);
    return out;
}

AggregationMode parse_aggregation_mode(const std::string& name) {
    if (name == "all") return AggregationMode::kAll;
    if (name == "positive") return AggregationMode::kPositiveOnly;
    if (name == "contrastive") return AggregationMode::kContrastive;
    fail("unknown aggregation mode '" + name + "' (expected all|positive|contrastive)");
}

RankedPairs aggregate(const Dataset& dataset, const Model& model, AggregationMode mode,
                      size_t batch_size) {
    if (mode != AggregationMode::kAll && !dataset.has_labels())
        fail("aggregation mode requires labels but the dataset has none");

    auto select = [&](auto keep) {
        std::vector<const CellVector*> cells;
        for (const auto& cell : dataset.cells)
            if (keep(cell)) cells.push_back(&cell);
        return cells;
    };

    if (mode == AggregationMode::kAll || mode == AggregationMode::kPositiveOnly) {
        auto cells = mode == AggregationMode::kAll
                         ? select([](const CellVector&) { return true; })
                         : select([&](const CellVector& c) {
                               return dataset.label_of(c.id) == 1;
                           });
        if (cells.empty()) fail("aggregate: no cells selected");
        const std::vector<double> weights(cells.size(), 1.0);
        return finalize(accumulate_cells(cells, weights, model, batch_size));
    }

    auto pos = select([&](const CellVector& c) { return dataset.label_of(c.id) == 1; });
    auto neg = select([&](const CellVector& c) { return dataset.label_of(c.id) == 0; });
    if (pos.empty() || neg.empty()) fail("contrastive aggregation needs both label groups");
    const RankedPairs rp = finalize(
        accumulate_cells(pos, std::vector<double>(pos.size(), 1.0), model, batch_size));
    const RankedPairs rn = finalize(
        accumulate_cells(neg, std::vector<double>(neg.size(), 1.0), model, batch_size));

    std::unordered_map<PairKey, RankedPair> diff;
    for (const auto& p : rp) diff[pair_key(p.i, p.j)] = p;
    for (const auto& n : rn) {
        auto [it, inserted] = diff.try_emplace(pair_key(n.i, n.j), RankedPair{n.i, n.j, 0, 0});
        it->second.score -= n.score;
        it->second.support += n.support;
    }
    RankedPairs out;
    out.reserve(diff.size());
    for (const auto& [key, p] : diff) out.push_back(p);
    sort_ranked(out);
    return out;
}

RankedPairs estimated_interaction(const Dataset& dataset, const Model& model,
                                  const SampledSubset& subset, size_t batch_size) {
    if (subset.members.empty()) fail("estimated_interaction: empty subset");
    std::unordered_map<std::string, const CellVector*> by_id;
    by_id.reserve(dataset.size());
    for (const auto& cell : dataset.cells) by_id[cell.id] = &cell;

    std::vector<const CellVector*> cells;
    std::vector<double> weights;
    cells.reserve(subset.members.size());
    for (const auto& [id, prob] : subset.members) {
        auto it = by_id.find(id);
        if (it == by_id.end()) fail("subset cell '" + id + "' not in dataset");
        if (!(prob > 0.0)) fail("subset cell '" + id + "' has non-positive weight");
        cells.push_back(it->second);
        weights.push_back(prob);
    }
    return finalize(accumulate_cells(cells, weights, model, batch_size));
}

namespace {

// Average ranks with ties (zeros form one large tie block).
std::vector<double> rank_transform(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;  // constant column
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

RankedPairs baseline_correlation_rank(const Dataset& dataset, CorrelationMethod method,
                                      size_t min_cells) {
    if (!dataset.has_labels()) fail("correlation baseline requires labels");
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < dataset.size(); ++i)
        (dataset.label_of(dataset.cells[i].id) == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) fail("correlation baseline: a label group is empty");

    // Genes expressed in >= min_cells cells of each group
    std::vector<uint32_t> pos_count(dataset.n_genes, 0), neg_count(dataset.n_genes, 0);
    for (size_t i : pos)
        for (const auto& e : dataset.cells[i].entries) ++pos_count[e.gene];
    for (size_t i : neg)
        for (const auto& e : dataset.cells[i].entries) ++neg_count[e.gene];
    std::vector<uint32_t> kept;
    for (uint32_t g = 0; g < dataset.n_genes; ++g)
        if (pos_count[g] >= min_cells && neg_count[g] >= min_cells) kept.push_back(g);
    if (kept.size() < 2) fail("correlation baseline: fewer than two genes pass min_cells");

    std::vector<uint32_t> col_of(dataset.n_genes, UINT32_MAX);
    for (uint32_t c = 0; c < kept.size(); ++c) col_of[kept[c]] = c;

    // Dense per-group columns, zeros included
    auto build_columns = [&](const std::vector<size_t>& members) {
        std::vector<std::vector<double>> cols(kept.size(),
                                              std::vector<double>(members.size(), 0.0));
        for (size_t r = 0; r < members.size(); ++r)
            for (const auto& e : dataset.cells[members[r]].entries)
                if (col_of[e.gene] != UINT32_MAX) cols[col_of[e.gene]][r] = e.level;
        if (method == CorrelationMethod::kSpearman)
            for (auto& col : cols) col = rank_transform(col);
        return cols;
    };
    const auto pos_cols = build_columns(pos);
    const auto neg_cols = build_columns(neg);

    const size_t g = kept.size();
    RankedPairs out;
    out.resize(g * (g - 1) / 2);
    std::vector<size_t> row_offset(g, 0);
    for (size_t a = 1, off = 0; a < g; ++a) {
        row_offset[a] = off;
        off += a;
    }
    const auto g64 = static_cast<int64_t>(g);
#pragma omp parallel for schedule(dynamic, 4)
    for (int64_t b = 1; b < g64; ++b) {
        for (int64_t a = 0; a < b; ++a) {
            const double score = pearson(pos_cols[a], pos_cols[b]) -
                                 pearson(neg_cols[a], neg_cols[b]);
            out[row_offset[b] + static_cast<size_t>(a)] = {
                kept[a], kept[b], score,
                static_cast<double>(std::min(pos_count[kept[a]], pos_count[kept[b]]))};
        }
    }
    sort_ranked(out);
    return out;
}

void write_ranked_pairs(std::ostream& out, const RankedPairs& pairs,
                        const Dataset* symbol_source) {
    const bool with_symbols =
        symbol_source != nullptr && symbol_source->gene_symbols.has_value();
    char sbuf[40], mbuf[40];
    for (const auto& p : pairs) {
        std::snprintf(sbuf, sizeof sbuf, "%.17g", p.score);
        std::snprintf(mbuf, sizeof mbuf, "%.17g", p.support);
        out << p.i << '\t' << p.j << '\t' << sbuf << '\t' << mbuf;
        if (with_symbols) {
            const auto& sym = *symbol_source->gene_symbols;
            auto si = sym.find(p.i);
            auto sj = sym.find(p.j);
            out << '\t' << (si != sym.end() ? si->second : "?") << '\t'
                << (sj != sym.end() ? sj->second : "?");
        }
        out << '\n';
    }
}

RankedPairs read_ranked_pairs(std::istream& in) {
    RankedPairs out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '%' || line[0] == '#') continue;
        RankedPair p;
        if (std::sscanf(line.c_str(), "%u %u %lg %lg", &p.i, &p.j, &p.score, &p.support) < 3)
            fail("malformed ranked-pair line: '" + line + "'");
        out.push_back(p);
    }
    return out;
}

}  // namespace wds
