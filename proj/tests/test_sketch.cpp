#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "support/synthetic.hpp"
#include "wds/sketch.hpp"

using namespace wds;

namespace {

Dataset one_cell() {
    Dataset ds;
    ds.n_genes = 50;
    ds.cells = {testing::make_random_cell(3, 50, 5, 10, "solo")};
    return ds;
}

}  // namespace

TEST_CASE("single cell: one increment per row, query reads it back") {
    const HashFamilyConfig cfg{.seed = 1, .n_rows = 32, .range = 64};
    const auto ds = one_cell();
    const auto sketch = RaceSketch::build_serial(ds, cfg);
    CHECK(sketch.n_items() == 1);
    for (uint32_t r = 0; r < cfg.n_rows; ++r) {
        CHECK(sketch.row_sum(r) == 1);
        size_t nonzero = 0;
        for (uint32_t b = 0; b < cfg.range; ++b) nonzero += sketch.count_at(r, b) > 0;
        CHECK(nonzero == 1);
    }
    CHECK(sketch.query(ds.cells[0]) == 1.0);
}

TEST_CASE("n identical cells concentrate in one counter per row") {
    const HashFamilyConfig cfg{.seed = 2, .n_rows = 16, .range = 128};
    Dataset ds;
    ds.n_genes = 50;
    const auto proto = testing::make_random_cell(9, 50, 8, 12, "p");
    for (int i = 0; i < 11; ++i) {
        auto c = proto;
        c.id = "c" + std::to_string(i);
        ds.cells.push_back(c);
    }
    const auto sketch = RaceSketch::build(ds, cfg);
    for (uint32_t r = 0; r < cfg.n_rows; ++r) {
        uint32_t max_count = 0;
        for (uint32_t b = 0; b < cfg.range; ++b)
            max_count = std::max(max_count, sketch.count_at(r, b));
        CHECK(max_count == 11);
        CHECK(sketch.row_sum(r) == 11);
    }
    CHECK(sketch.query(proto) == 11.0);
}

TEST_CASE("every row sums to the number of items") {
    const HashFamilyConfig cfg{.seed = 5, .n_rows = 20, .range = 256};
    const auto ds = testing::make_random_cells(17, 120, 85, 4, 25);
    const auto sketch = RaceSketch::build(ds, cfg);
    for (uint32_t r = 0; r < cfg.n_rows; ++r) CHECK(sketch.row_sum(r) == 85);
}

TEST_CASE("parallel build equals serial build bit-exactly") {
    const HashFamilyConfig cfg{.seed = 23, .n_rows = 40, .range = 512};
    const auto ds = testing::make_random_cells(29, 200, 301, 5, 30);
    CHECK(RaceSketch::build(ds, cfg) == RaceSketch::build_serial(ds, cfg));
}

TEST_CASE("merge identities") {
    const HashFamilyConfig cfg{.seed = 7, .n_rows = 24, .range = 100};
    const auto ds = testing::make_random_cells(31, 80, 60, 3, 15);
    Dataset first, second;
    first.n_genes = second.n_genes = 80;
    first.cells.assign(ds.cells.begin(), ds.cells.begin() + 25);
    second.cells.assign(ds.cells.begin() + 25, ds.cells.end());

    auto a = RaceSketch::build(first, cfg);
    const auto b = RaceSketch::build(second, cfg);
    const auto whole = RaceSketch::build(ds, cfg);

    auto ab = a;
    ab.merge(b);
    CHECK(ab == whole);  // increments commute

    auto ba = b;
    ba.merge(a);
    CHECK(ba == whole);  // merge is commutative

    RaceSketch empty(cfg);
    auto with_empty = a;
    with_empty.merge(empty);
    CHECK(with_empty == a);  // additive identity
}

TEST_CASE("merge rejects mismatched configs") {
    RaceSketch a(HashFamilyConfig{.seed = 1, .n_rows = 4, .range = 16});
    RaceSketch b(HashFamilyConfig{.seed = 2, .n_rows = 4, .range = 16});
    CHECK_THROWS(a.merge(b));
}

TEST_CASE("estimate_all equals build + query composition") {
    const HashFamilyConfig cfg{.seed = 11, .n_rows = 30, .range = 200};
    const auto ds = testing::make_random_cells(37, 90, 70, 4, 18);
    const auto scores = estimate_all(ds, cfg);
    const auto sketch = RaceSketch::build(ds, cfg);
    REQUIRE(scores.w.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(scores.ids[i] == ds.cells[i].id);
        CHECK(scores.w[i] == sketch.query(ds.cells[i]));
        CHECK(scores.w[i] >= 1.0);  // self-collision on every row
    }
    const auto serial = estimate_all_serial(ds, cfg);
    CHECK(scores.w == serial.w);
    CHECK(scores.ids == serial.ids);
}

TEST_CASE("sketch ranks densities like the exact oracle") {
    const HashFamilyConfig cfg{.seed = 43, .n_rows = 100, .range = 2048};
    const auto ds = testing::make_clustered_cells(51, 300, 12, 20, 15, 25);
    const auto scores = estimate_all(ds, cfg);
    const auto exact = exact_density_all(ds);
    CHECK(testing::spearman_rho(scores.w, exact) > 0.85);
}

TEST_CASE("save/load round trip, text and binary") {
    const HashFamilyConfig cfg{.seed = 3, .n_rows = 8, .range = 32};
    const auto ds = testing::make_random_cells(41, 60, 40, 3, 10);
    const auto sketch = RaceSketch::build(ds, cfg);

    const auto dir = std::filesystem::temp_directory_path();
    const auto text_path = (dir / "wds_test_sketch.race").string();
    const auto bin_path = (dir / "wds_test_sketch.bin").string();
    sketch.save(text_path);
    sketch.save(bin_path);
    CHECK(RaceSketch::load(text_path) == sketch);
    CHECK(RaceSketch::load(bin_path) == sketch);
    std::remove(text_path.c_str());
    std::remove(bin_path.c_str());
}

TEST_CASE("counter byte accounting tracks live sketches") {
    const uint64_t before = RaceSketch::counter_bytes_in_use();
    {
        RaceSketch s(HashFamilyConfig{.seed = 0, .n_rows = 10, .range = 100});
        CHECK(RaceSketch::counter_bytes_in_use() == before + 10 * 100 * 4);
    }
    CHECK(RaceSketch::counter_bytes_in_use() == before);
}
