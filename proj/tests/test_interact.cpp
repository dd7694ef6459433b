#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "support/synthetic.hpp"
#include "wds/interact.hpp"
#include "wds/rng.hpp"

using namespace wds;

namespace {

AttentionMap map_of(std::vector<uint32_t> genes, std::vector<double> values) {
    AttentionMap map;
    map.gene_indices = std::move(genes);
    map.values = std::move(values);
    return map;
}

// random row-stochastic map over a random support
AttentionMap random_map(uint64_t seed, uint32_t n_genes, size_t m) {
    rng::Stream s(rng::derive(seed, "map"));
    std::vector<uint32_t> genes;
    std::vector<uint8_t> used(n_genes, 0);
    while (genes.size() < m) {
        const auto g = static_cast<uint32_t>(s.below(n_genes));
        if (!used[g]) {
            used[g] = 1;
            genes.push_back(g);
        }
    }
    std::vector<double> values(m * m);
    for (size_t p = 0; p < m; ++p) {
        double sum = 0.0;
        for (size_t q = 0; q < m; ++q) {
            values[p * m + q] = 0.05 + s.unit();
            sum += values[p * m + q];
        }
        for (size_t q = 0; q < m; ++q) values[p * m + q] /= sum;
    }
    return map_of(std::move(genes), std::move(values));
}

double score_of(const RankedPairs& pairs, uint32_t i, uint32_t j) {
    for (const auto& p : pairs)
        if (p.i == i && p.j == j) return p.score;
    throw std::runtime_error("pair not ranked");
}

}  // namespace

TEST_CASE("diagonal mass is dropped; co-occurrence is still counted") {
    InteractionAccumulator acc;
    acc.accumulate_cell(map_of({4, 9}, {1.0, 0.0, 0.0, 1.0}));
    REQUIRE(acc.n_pairs() == 2);  // both directions of (4,9), zero-valued
    for (const auto& [key, e] : acc.entries()) {
        CHECK(e.z == 0.0);
        CHECK(e.m == 1.0);
    }
    const auto ranked = finalize(acc);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].score == 0.0);
}

TEST_CASE("uniform map scatter-adds 1/3 everywhere off-diagonal") {
    InteractionAccumulator acc;
    const double third = 1.0 / 3.0;
    acc.accumulate_cell(map_of({1, 5, 8}, {third, third, third, third, third, third,
                                           third, third, third}));
    CHECK(acc.n_pairs() == 6);
    for (const auto& [key, e] : acc.entries()) {
        CHECK(e.z == third);
        CHECK(e.m == 1.0);
    }
    const auto ranked = finalize(acc);
    REQUIRE(ranked.size() == 3);  // canonical pairs after symmetrization
    for (const auto& p : ranked) {
        CHECK(p.score == third);
        CHECK(p.support == 1.0);
    }
}

TEST_CASE("weight w equals accumulating the same map w times") {
    const auto map = random_map(3, 30, 5);
    InteractionAccumulator twice, weighted;
    twice.accumulate_cell(map);
    twice.accumulate_cell(map);
    weighted.accumulate_cell(map, 2.0);
    for (const auto& [key, e] : weighted.entries()) {
        CHECK(e.z == twice.entries().at(key).z);
        CHECK(e.m == twice.entries().at(key).m);
    }
    CHECK_THROWS(weighted.accumulate_cell(map, 0.0));
    CHECK_THROWS(weighted.accumulate_cell(map, -1.0));
}

TEST_CASE("finalize averages repeat observations and both directions") {
    InteractionAccumulator acc;
    acc.accumulate_cell(map_of({2, 6}, {0.8, 0.2, 0.4, 0.6}));
    acc.accumulate_cell(map_of({2, 6}, {0.6, 0.4, 0.8, 0.2}));
    // direction (2,6): (0.2 + 0.4)/2 = 0.3; direction (6,2): (0.4 + 0.8)/2 = 0.6
    const auto ranked = finalize(acc);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].i == 2);
    CHECK(ranked[0].j == 6);
    CHECK(ranked[0].score == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(ranked[0].support == 2.0);
    CHECK_THROWS(finalize(InteractionAccumulator{}));
}

TEST_CASE("sparse pipeline equals the dense V x V oracle") {
    for (uint64_t trial = 0; trial < 20; ++trial) {
        const uint32_t v = 10 + trial % 11;  // V <= 20
        InteractionAccumulator acc;
        testing::DenseAggregationOracle oracle(v);
        rng::Stream s(trial);
        for (int c = 0; c < 5; ++c) {
            const auto map = random_map(trial * 31 + c, v, 2 + s.below(v - 2));
            const double w = (c % 2) ? 1.0 : 0.5;
            acc.accumulate_cell(map, w);
            oracle.accumulate(map, w);
        }
        const auto sparse = finalize(acc);
        const auto dense = oracle.finalize();
        REQUIRE(sparse.size() == dense.size());
        for (size_t i = 0; i < sparse.size(); ++i) {
            CHECK(sparse[i].i == dense[i].i);
            CHECK(sparse[i].j == dense[i].j);
            CHECK(std::abs(sparse[i].score - dense[i].score) <= 1e-12);
            CHECK(std::abs(sparse[i].support - dense[i].support) <= 1e-12);
        }
    }
}

TEST_CASE("accumulation order does not change finalize output") {
    std::vector<AttentionMap> maps;
    for (int c = 0; c < 12; ++c) maps.push_back(random_map(500 + c, 15, 6));
    InteractionAccumulator forward, backward;
    for (const auto& m : maps) forward.accumulate_cell(m);
    for (auto it = maps.rbegin(); it != maps.rend(); ++it) backward.accumulate_cell(*it);
    const auto a = finalize(forward);
    const auto b = finalize(backward);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].i == b[i].i);
        CHECK(a[i].j == b[i].j);
        CHECK(std::abs(a[i].score - b[i].score) <= 1e-12);
    }
}

TEST_CASE("merge is key-wise addition") {
    InteractionAccumulator a, b, whole;
    const auto m1 = random_map(61, 12, 5);
    const auto m2 = random_map(62, 12, 7);
    a.accumulate_cell(m1);
    b.accumulate_cell(m2);
    whole.accumulate_cell(m1);
    whole.accumulate_cell(m2);
    a.merge(b);
    CHECK(a.n_pairs() == whole.n_pairs());
    CHECK(a.weight_total() == whole.weight_total());
    for (const auto& [key, e] : whole.entries()) {
        CHECK(a.entries().at(key).z == e.z);
        CHECK(a.entries().at(key).m == e.m);
    }
}

TEST_CASE("checkpoint save/load round trip") {
    InteractionAccumulator acc;
    acc.accumulate_cell(random_map(71, 25, 8), 0.75);
    acc.accumulate_cell(random_map(72, 25, 4), 1.0);
    std::ostringstream out;
    acc.save(out);
    std::istringstream in(out.str());
    const auto back = InteractionAccumulator::load(in);
    CHECK(back.n_pairs() == acc.n_pairs());
    CHECK(back.weight_total() == acc.weight_total());
    for (const auto& [key, e] : acc.entries()) {
        CHECK(back.entries().at(key).z == e.z);
        CHECK(back.entries().at(key).m == e.m);
    }
}

TEST_CASE("aggregate modes against labels") {
    auto ds = testing::make_random_cells(81, 40, 24, 3, 10);
    const auto model = Model::seeded(ModelConfig{.n_genes = 40, .seed = 5});

    SUBCASE("modes needing labels reject unlabeled data") {
        CHECK_THROWS(aggregate(ds, model, AggregationMode::kPositiveOnly));
        CHECK_THROWS(aggregate(ds, model, AggregationMode::kContrastive));
        CHECK_NOTHROW(aggregate(ds, model, AggregationMode::kAll));
    }

    SUBCASE("all labels positive makes positive_only equal all") {
        std::unordered_map<std::string, int> labels;
        for (const auto& c : ds.cells) labels[c.id] = 1;
        ds.labels = labels;
        const auto all = aggregate(ds, model, AggregationMode::kAll);
        const auto pos = aggregate(ds, model, AggregationMode::kPositiveOnly);
        REQUIRE(all.size() == pos.size());
        for (size_t i = 0; i < all.size(); ++i) {
            CHECK(all[i].i == pos[i].i);
            CHECK(all[i].score == pos[i].score);
        }
    }

    SUBCASE("contrastive on identical populations cancels to zero") {
        // second half duplicates the first half's entries under label 0
        Dataset mirrored;
        mirrored.n_genes = ds.n_genes;
        std::unordered_map<std::string, int> labels;
        for (size_t i = 0; i < ds.size(); ++i) {
            auto p = ds.cells[i];
            p.id = "p" + std::to_string(i);
            labels[p.id] = 1;
            auto n = ds.cells[i];
            n.id = "n" + std::to_string(i);
            labels[n.id] = 0;
            mirrored.cells.push_back(std::move(p));
            mirrored.cells.push_back(std::move(n));
        }
        mirrored.labels = labels;
        const auto diff = aggregate(mirrored, model, AggregationMode::kContrastive);
        for (const auto& p : diff) CHECK(p.score == 0.0);
    }
}

TEST_CASE("parse_aggregation_mode") {
    CHECK(parse_aggregation_mode("all") == AggregationMode::kAll);
    CHECK(parse_aggregation_mode("positive") == AggregationMode::kPositiveOnly);
    CHECK(parse_aggregation_mode("contrastive") == AggregationMode::kContrastive);
    CHECK_THROWS(parse_aggregation_mode("sideways"));
}

TEST_CASE("weighted estimator identities") {
    const auto ds = testing::make_random_cells(91, 32, 8, 4, 9);
    const auto model = Model::seeded(ModelConfig{.n_genes = 32, .seed = 11});

    SUBCASE("equal weights match the unweighted aggregate exactly") {
        SampledSubset subset;
        for (const auto& c : ds.cells) subset.members.emplace_back(c.id, 0.125);
        const auto weighted = estimated_interaction(ds, model, subset);
        const auto plain = aggregate(ds, model, AggregationMode::kAll);
        REQUIRE(weighted.size() == plain.size());
        for (size_t i = 0; i < weighted.size(); ++i) {
            CHECK(weighted[i].i == plain[i].i);
            CHECK(weighted[i].j == plain[i].j);
            CHECK(weighted[i].score == plain[i].score);
        }
    }

    SUBCASE("a single-cell subset reproduces that cell's own map") {
        SampledSubset solo;
        solo.members.emplace_back(ds.cells[2].id, 0.4);
        const auto ranked = estimated_interaction(ds, model, solo);
        const auto map = model.forward_attention(ds.cells[2]);
        const size_t m = map.m();
        for (size_t p = 0; p < m; ++p)
            for (size_t q = p + 1; q < m; ++q) {
                const double expect =
                    (map.values[p * m + q] + map.values[q * m + p]) / 2.0;
                CHECK(score_of(ranked, std::min(map.gene_indices[p], map.gene_indices[q]),
                               std::max(map.gene_indices[p], map.gene_indices[q])) ==
                      doctest::Approx(expect).epsilon(1e-12));
            }
    }

    SUBCASE("unknown subset ids and empty subsets are rejected") {
        SampledSubset bad;
        bad.members.emplace_back("nope", 0.3);
        CHECK_THROWS(estimated_interaction(ds, model, bad));
        CHECK_THROWS(estimated_interaction(ds, model, SampledSubset{}));
    }
}

TEST_CASE("weighted estimator is unbiased over uniform resamples") {
    // 30-cell population sharing one support, so every tracked pair occurs
    // in every cell and the estimator denominator is the full weight sum.
    Dataset ds;
    ds.n_genes = 8;
    rng::Stream s(123);
    for (int i = 0; i < 30; ++i) {
        CellVector cell{"c" + std::to_string(i), {}};
        for (uint32_t g = 0; g < 4; ++g)
            cell.entries.push_back({g, 0.8 + 1.5 * s.unit()});
        ds.cells.push_back(std::move(cell));
    }
    const auto model = Model::seeded(ModelConfig{.n_genes = 8, .seed = 3});

    // near-uniform plan with known I (positive, sums to 1)
    std::vector<double> weight(30);
    double wsum = 0.0;
    for (int i = 0; i < 30; ++i) {
        weight[i] = 1.0 + 0.04 * s.unit();
        wsum += weight[i];
    }
    for (auto& w : weight) w /= wsum;

    // population target: E_{x~I}[Z_x(i,j)] per canonical pair
    std::vector<AttentionMap> maps;
    for (const auto& c : ds.cells) maps.push_back(model.forward_attention(c));
    auto pair_value = [&](const AttentionMap& map, uint32_t a, uint32_t b) {
        const size_t m = map.m();
        size_t pa = 0, pb = 0;
        for (size_t p = 0; p < m; ++p) {
            if (map.gene_indices[p] == a) pa = p;
            if (map.gene_indices[p] == b) pb = p;
        }
        return (map.values[pa * m + pb] + map.values[pb * m + pa]) / 2.0;
    };

    const int n_resample = 400, k = 5;
    for (uint32_t a = 0; a < 4; ++a)
        for (uint32_t b = a + 1; b < 4; ++b) {
            double target = 0.0;
            for (int i = 0; i < 30; ++i) target += weight[i] * pair_value(maps[i], a, b);

            double mean = 0.0, sq = 0.0;
            for (int rep = 0; rep < n_resample; ++rep) {
                auto plan = uniform_plan([&] {
                    std::vector<std::string> ids;
                    for (const auto& c : ds.cells) ids.push_back(c.id);
                    return ids;
                }(), 9000 + rep);
                auto subset = sample_without_replacement(plan, k);
                for (auto& [id, prob] : subset.members)
                    prob = weight[std::stoul(id.substr(1))];
                const auto ranked = estimated_interaction(ds, model, subset);
                const double z = score_of(ranked, a, b);
                mean += z;
                sq += z * z;
            }
            mean /= n_resample;
            const double sd = std::sqrt(std::max(0.0, sq / n_resample - mean * mean));
            const double se = sd / std::sqrt(static_cast<double>(n_resample));
            CHECK(std::abs(mean - target) < 3.5 * se + 1e-12);
        }
}

TEST_CASE("correlation baselines") {
    SUBCASE("planted co-variation in positive cells scores near the top") {
        Dataset ds;
        ds.n_genes = 6;
        std::unordered_map<std::string, int> labels;
        rng::Stream s(7);
        for (int i = 0; i < 60; ++i) {
            const bool positive = i < 30;
            CellVector cell{"c" + std::to_string(i), {}};
            const double factor = 0.5 + 2.0 * s.unit();
            for (uint32_t g = 0; g < 6; ++g) {
                double level;
                if (positive && g < 2)
                    level = factor * (g == 0 ? 1.0 : 2.0);  // genes 0,1 co-vary
                else
                    level = 0.5 + 2.0 * s.unit();
                cell.entries.push_back({g, level});
            }
            labels[cell.id] = positive ? 1 : 0;
            ds.cells.push_back(std::move(cell));
        }
        ds.labels = labels;
        const auto pearson = baseline_correlation_rank(ds, CorrelationMethod::kPearson, 5);
        CHECK(pearson[0].i == 0);
        CHECK(pearson[0].j == 1);
        CHECK(pearson[0].score > 0.5);
        const auto spearman =
            baseline_correlation_rank(ds, CorrelationMethod::kSpearman, 5);
        CHECK(spearman[0].i == 0);
        CHECK(spearman[0].j == 1);
    }

    SUBCASE("identical populations cancel exactly") {
        Dataset ds;
        ds.n_genes = 5;
        std::unordered_map<std::string, int> labels;
        rng::Stream s(9);
        for (int i = 0; i < 20; ++i) {
            CellVector proto{"", {}};
            for (uint32_t g = 0; g < 5; ++g) proto.entries.push_back({g, 0.5 + s.unit()});
            auto p = proto;
            p.id = "p" + std::to_string(i);
            auto n = proto;
            n.id = "n" + std::to_string(i);
            labels[p.id] = 1;
            labels[n.id] = 0;
            ds.cells.push_back(std::move(p));
            ds.cells.push_back(std::move(n));
        }
        ds.labels = labels;
        for (auto method : {CorrelationMethod::kPearson, CorrelationMethod::kSpearman})
            for (const auto& p : baseline_correlation_rank(ds, method, 5))
                CHECK(p.score == 0.0);
    }

    SUBCASE("spearman is invariant under monotone level transforms") {
        auto ds = testing::make_random_cells(303, 12, 40, 6, 12);
        std::unordered_map<std::string, int> labels;
        for (size_t i = 0; i < ds.size(); ++i) labels[ds.cells[i].id] = i % 2;
        ds.labels = labels;
        const auto base = baseline_correlation_rank(ds, CorrelationMethod::kSpearman, 3);
        auto cubed = ds;
        for (auto& c : cubed.cells)
            for (auto& e : c.entries) e.level = e.level * e.level * e.level;
        const auto transformed =
            baseline_correlation_rank(cubed, CorrelationMethod::kSpearman, 3);
        REQUIRE(base.size() == transformed.size());
        for (size_t i = 0; i < base.size(); ++i) {
            CHECK(base[i].i == transformed[i].i);
            CHECK(base[i].score == transformed[i].score);
        }
    }

    SUBCASE("errors") {
        auto ds = testing::make_random_cells(305, 10, 10, 3, 6);
        CHECK_THROWS(baseline_correlation_rank(ds, CorrelationMethod::kPearson));
        std::unordered_map<std::string, int> labels;
        for (const auto& c : ds.cells) labels[c.id] = 1;  // no negatives
        ds.labels = labels;
        CHECK_THROWS(baseline_correlation_rank(ds, CorrelationMethod::kPearson));
    }
}

TEST_CASE("ranked pairs file round trip") {
    RankedPairs pairs = {{1, 5, 0.75, 3.0}, {0, 2, -0.125, 1.0}};
    std::ostringstream out;
    write_ranked_pairs(out, pairs);
    std::istringstream in(out.str());
    const auto back = read_ranked_pairs(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].i == 1);
    CHECK(back[0].score == 0.75);
    CHECK(back[1].score == -0.125);
    CHECK(back[1].support == 1.0);
}
