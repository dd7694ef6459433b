#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wds/cell.hpp"
#include "wds/cws.hpp"

// Two-pass Min-Max density estimation. Pass 1 streams the dataset once and
// increments one counter per hash row for every cell; pass 2 streams again
// and averages each cell's own counters. The counter array is the only
// state: R*B uint32 values, independent of dataset size.

namespace wds {

class RaceSketch {
public:
    explicit RaceSketch(const HashFamilyConfig& config);
    RaceSketch(const RaceSketch&);
    RaceSketch(RaceSketch&&) noexcept;
    RaceSketch& operator=(const RaceSketch&);
    RaceSketch& operator=(RaceSketch&&) noexcept;
    ~RaceSketch();

    // Pass 1, whole dataset. The parallel variant shards the cells across
    // threads with one local counter array each, then merges; increments are
    // exchangeable integers, so counts are bit-identical for any thread count.
    static RaceSketch build(const Dataset& dataset, const HashFamilyConfig& config);
    static RaceSketch build_serial(const Dataset& dataset, const HashFamilyConfig& config);

    // Pass-1 increments for a single cell.
    void add(const CellVector& cell);

    // Pass 2 for one cell: mean of its counters over the R rows.
    [[nodiscard]] double query(const CellVector& cell) const;

    void merge(const RaceSketch& other);  // elementwise; configs must match

    [[nodiscard]] const HashFamilyConfig& config() const noexcept { return config_; }
    [[nodiscard]] uint64_t n_items() const noexcept { return n_items_; }
    [[nodiscard]] uint32_t count_at(uint32_t row, uint32_t bucket) const;
    [[nodiscard]] uint64_t row_sum(uint32_t row) const;

    // Text format ("RACE1 seed R B n_items" + R counter lines) by default;
    // a length-prefixed binary layout when the path ends in ".bin".
    void save(const std::string& path) const;
    static RaceSketch load(const std::string& path);

    bool operator==(const RaceSketch& other) const;

    // Live/peak bytes held in counter arrays, for the memory-claim checks.
    static uint64_t counter_bytes_in_use() noexcept;
    static uint64_t counter_bytes_peak() noexcept;
    static void reset_counter_peak() noexcept;

    // Scratch-buffer variants for hot loops; the buffer holds ln(level)s.
    void add_with_scratch(const CellVector& cell, std::vector<double>& ln_scratch);
    double query_with_scratch(const CellVector& cell, std::vector<double>& ln_scratch) const;

private:
    HashFamilyConfig config_;
    uint64_t n_items_ = 0;
    std::vector<uint32_t> counts_;  // row-major R x B
};

struct DiversityScores {
    std::vector<std::string> ids;  // dataset order
    std::vector<double> w;         // estimated Min-Max density per cell
};

// build + query for every cell; two linear scans, O(R*B) auxiliary memory.
DiversityScores estimate_all(const Dataset& dataset, const HashFamilyConfig& config);
DiversityScores estimate_all_serial(const Dataset& dataset, const HashFamilyConfig& config);

// Pass 2 only, against an existing sketch.
DiversityScores query_all(const RaceSketch& sketch, const Dataset& dataset);

void write_densities(std::ostream& out, const DiversityScores& scores);
DiversityScores read_densities(std::istream& in);

}  // namespace wds
