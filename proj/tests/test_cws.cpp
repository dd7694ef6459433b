#include <doctest.h>

#include <cmath>
#include <set>

#include "support/synthetic.hpp"
#include "wds/cws.hpp"

using namespace wds;

TEST_CASE("cws_params is a pure function of (seed, row, gene)") {
    const auto a = cws_params(42, 3, 1000);
    const auto b = cws_params(42, 3, 1000);
    CHECK(a.r == b.r);
    CHECK(a.c == b.c);
    CHECK(a.beta == b.beta);

    CHECK(a.r > 0.0);
    CHECK(a.c > 0.0);
    CHECK(a.beta >= 0.0);
    CHECK(a.beta < 1.0);
}

TEST_CASE("different rows give different parameter triples") {
    std::set<std::tuple<double, double, double>> seen;
    for (uint32_t r = 0; r < 10000; ++r) {
        const auto p = cws_params(7, r, 123);
        seen.insert({p.r, p.c, p.beta});
    }
    CHECK(seen.size() == 10000);  // no full-triple collision over 10^4 keys
}

TEST_CASE("r and c follow Gamma(2,1), beta follows Uniform[0,1)") {
    const size_t n = 100000;
    double sum_r = 0, sq_r = 0, sum_c = 0, sq_c = 0, sum_b = 0;
    for (size_t i = 0; i < n; ++i) {
        const auto p = cws_params(99, static_cast<uint32_t>(i % 1000),
                                  static_cast<uint32_t>(i / 1000));
        sum_r += p.r;
        sq_r += p.r * p.r;
        sum_c += p.c;
        sq_c += p.c * p.c;
        sum_b += p.beta;
    }
    const auto dn = static_cast<double>(n);
    const double mean_r = sum_r / dn, var_r = sq_r / dn - mean_r * mean_r;
    const double mean_c = sum_c / dn, var_c = sq_c / dn - mean_c * mean_c;
    // Gamma(2,1): mean 2, var 2; SE(mean) = sqrt(2/n), SE(var) ~ sqrt(20/n)
    const double se_mean = std::sqrt(2.0 / dn);
    const double se_var = std::sqrt(20.0 / dn);
    CHECK(std::abs(mean_r - 2.0) < 3 * se_mean);
    CHECK(std::abs(var_r - 2.0) < 3 * se_var);
    CHECK(std::abs(mean_c - 2.0) < 3 * se_mean);
    CHECK(std::abs(var_c - 2.0) < 3 * se_var);
    CHECK(std::abs(sum_b / dn - 0.5) < 3 * std::sqrt(1.0 / 12.0 / dn));
}

TEST_CASE("hash_cell is deterministic and in range") {
    const HashFamilyConfig cfg{.seed = 5, .n_rows = 64, .range = 1000};
    const auto x = testing::make_random_cell(1, 200, 10, 30, "x");
    for (uint32_t r = 0; r < cfg.n_rows; ++r) {
        const uint32_t b = hash_cell(x, cfg, r);
        CHECK(b == hash_cell(x, cfg, r));
        CHECK(b < cfg.range);
    }
}

TEST_CASE("identical cells collide on every row") {
    const HashFamilyConfig cfg{.seed = 17, .n_rows = 200, .range = 512};
    const auto x = testing::make_random_cell(2, 300, 15, 40, "x");
    auto y = x;
    y.id = "copy";
    for (uint32_t r = 0; r < cfg.n_rows; ++r)
        CHECK(hash_cell(x, cfg, r) == hash_cell(y, cfg, r));
}

TEST_CASE("hash config validation") {
    CHECK_THROWS(validate(HashFamilyConfig{.seed = 0, .n_rows = 0, .range = 10}));
    CHECK_THROWS(validate(HashFamilyConfig{.seed = 0, .n_rows = 1, .range = 1}));
    CHECK_NOTHROW(validate(HashFamilyConfig{.seed = 0, .n_rows = 1, .range = 2}));
    CHECK_THROWS(hash_cell(CellVector{"e", {}}, HashFamilyConfig{}, 0));
}

TEST_CASE("empirical collision rate tracks Min-Max similarity") {
    // Monte Carlo against the merge-based similarity; the acceptance suite
    // runs the full-scale version of this check.
    const uint32_t rows = 3000;
    const HashFamilyConfig cfg{.seed = 1234, .n_rows = rows, .range = 10000};
    for (uint64_t trial = 0; trial < 30; ++trial) {
        auto x = testing::make_random_cell(1000 + trial, 300, 10, 60, "x");
        CellVector y;
        if (trial % 3 == 0) {
            // overlapping pair: mix of shared and private genes
            y = testing::make_random_cell(5000 + trial, 300, 10, 60, "y");
            const size_t keep = x.nnz() / 2;
            y.entries.insert(y.entries.end(), x.entries.begin(),
                             x.entries.begin() + static_cast<ptrdiff_t>(keep));
            std::sort(y.entries.begin(), y.entries.end(),
                      [](const CellEntry& a, const CellEntry& b) { return a.gene < b.gene; });
            y.entries.erase(std::unique(y.entries.begin(), y.entries.end(),
                                        [](const CellEntry& a, const CellEntry& b) {
                                            return a.gene == b.gene;
                                        }),
                            y.entries.end());
        } else {
            y = testing::make_random_cell(9000 + trial, 300, 10, 60, "y");
        }
        const double mm = min_max_similarity(x, y);
        size_t collisions = 0;
        for (uint32_t r = 0; r < rows; ++r)
            collisions += hash_cell(x, cfg, r) == hash_cell(y, cfg, r);
        const double emp = static_cast<double>(collisions) / rows;
        const double expected = mm + (1.0 - mm) / cfg.range;
        CHECK(std::abs(emp - expected) < 0.03);
    }
}

TEST_CASE("collision rate under scaling follows MinMax(x, c*x) = 1/c") {
    // Pure scalings are the worst case for the 0-bit scheme: discarding the
    // quantized value t inflates collisions (about +0.012 at c=1.5, +0.018
    // at c=2 here). The tolerance bounds that additive term empirically.
    const uint32_t rows = 20000;
    const HashFamilyConfig cfg{.seed = 77, .n_rows = rows, .range = 10000};
    const auto x = testing::make_random_cell(4, 400, 30, 60, "x");
    for (double c : {1.25, 1.5, 2.0}) {
        auto y = x;
        for (auto& e : y.entries) e.level *= c;
        CHECK(min_max_similarity(x, y) == doctest::Approx(1.0 / c).epsilon(1e-12));
        size_t collisions = 0;
        for (uint32_t r = 0; r < rows; ++r)
            collisions += hash_cell(x, cfg, r) == hash_cell(y, cfg, r);
        const double emp = static_cast<double>(collisions) / rows;
        CHECK(std::abs(emp - 1.0 / c) < 0.035);
        CHECK(emp > 1.0 / c - 0.011);  // truncation bias is one-sided
    }
}
