#include "wds/sketch.hpp"

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace wds {

namespace {

std::atomic<uint64_t> g_counter_bytes{0};
std::atomic<uint64_t> g_counter_bytes_peak{0};

void track_alloc(uint64_t bytes) {
    const uint64_t now = g_counter_bytes.fetch_add(bytes) + bytes;
    uint64_t peak = g_counter_bytes_peak.load();
    while (now > peak && !g_counter_bytes_peak.compare_exchange_weak(peak, now)) {
    }
}

void track_free(uint64_t bytes) { g_counter_bytes.fetch_sub(bytes); }

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

RaceSketch::RaceSketch(const HashFamilyConfig& config) : config_(config) {
    validate(config);
    counts_.assign(static_cast<size_t>(config.n_rows) * config.range, 0);
    track_alloc(counts_.size() * sizeof(uint32_t));
}

RaceSketch::RaceSketch(const RaceSketch& other)
    : config_(other.config_), n_items_(other.n_items_), counts_(other.counts_) {
    track_alloc(counts_.size() * sizeof(uint32_t));
}

RaceSketch::RaceSketch(RaceSketch&& other) noexcept
    : config_(other.config_), n_items_(other.n_items_), counts_(std::move(other.counts_)) {
    other.counts_.clear();
    other.counts_.shrink_to_fit();
}

RaceSketch& RaceSketch::operator=(const RaceSketch& other) {
    if (this != &other) {
        track_free(counts_.size() * sizeof(uint32_t));
        config_ = other.config_;
        n_items_ = other.n_items_;
        counts_ = other.counts_;
        track_alloc(counts_.size() * sizeof(uint32_t));
    }
    return *this;
}

RaceSketch& RaceSketch::operator=(RaceSketch&& other) noexcept {
    if (this != &other) {
        track_free(counts_.size() * sizeof(uint32_t));
        config_ = other.config_;
        n_items_ = other.n_items_;
        counts_ = std::move(other.counts_);
        other.counts_.clear();
        other.counts_.shrink_to_fit();
    }
    return *this;
}

RaceSketch::~RaceSketch() { track_free(counts_.size() * sizeof(uint32_t)); }

uint64_t RaceSketch::counter_bytes_in_use() noexcept { return g_counter_bytes.load(); }
uint64_t RaceSketch::counter_bytes_peak() noexcept { return g_counter_bytes_peak.load(); }
void RaceSketch::reset_counter_peak() noexcept {
    g_counter_bytes_peak.store(g_counter_bytes.load());
}

void RaceSketch::add_with_scratch(const CellVector& cell, std::vector<double>& ln_scratch) {
    if (n_items_ == UINT32_MAX)
        fail("RaceSketch counter overflow: more than 2^32-1 items");
    fill_ln_levels(cell, ln_scratch);
    const uint32_t range = config_.range;
    for (uint32_t r = 0; r < config_.n_rows; ++r) {
        const uint64_t st = cws_detail::row_state(config_.seed, r);
        const uint32_t bucket = cws_detail::hash_entries(cell.entries, ln_scratch, st, range);
        ++counts_[static_cast<size_t>(r) * range + bucket];
    }
    ++n_items_;
}

void RaceSketch::add(const CellVector& cell) {
    std::vector<double> scratch;
    add_with_scratch(cell, scratch);
}

double RaceSketch::query_with_scratch(const CellVector& cell,
                                      std::vector<double>& ln_scratch) const {
    fill_ln_levels(cell, ln_scratch);
    const uint32_t range = config_.range;
    uint64_t sum = 0;
    for (uint32_t r = 0; r < config_.n_rows; ++r) {
        const uint64_t st = cws_detail::row_state(config_.seed, r);
        sum += counts_[static_cast<size_t>(r) * range +
                       cws_detail::hash_entries(cell.entries, ln_scratch, st, range)];
    }
    return static_cast<double>(sum) / static_cast<double>(config_.n_rows);
}

double RaceSketch::query(const CellVector& cell) const {
    std::vector<double> scratch;
    return query_with_scratch(cell, scratch);
}

void RaceSketch::merge(const RaceSketch& other) {
    if (config_.seed != other.config_.seed || config_.n_rows != other.config_.n_rows ||
        config_.range != other.config_.range)
        fail("RaceSketch merge: hash configurations differ");
    for (size_t i = 0; i < counts_.size(); ++i) {
        const uint64_t sum = static_cast<uint64_t>(counts_[i]) + other.counts_[i];
        if (sum > UINT32_MAX) fail("RaceSketch merge: counter overflow");
        counts_[i] = static_cast<uint32_t>(sum);
    }
    n_items_ += other.n_items_;
}

uint32_t RaceSketch::count_at(uint32_t row, uint32_t bucket) const {
    return counts_.at(static_cast<size_t>(row) * config_.range + bucket);
}

uint64_t RaceSketch::row_sum(uint32_t row) const {
    const auto* base = counts_.data() + static_cast<size_t>(row) * config_.range;
    uint64_t sum = 0;
    for (uint32_t b = 0; b < config_.range; ++b) sum += base[b];
    return sum;
}

bool RaceSketch::operator==(const RaceSketch& other) const {
    return config_.seed == other.config_.seed && config_.n_rows == other.config_.n_rows &&
           config_.range == other.config_.range && n_items_ == other.n_items_ &&
           counts_ == other.counts_;
}

RaceSketch RaceSketch::build_serial(const Dataset& dataset, const HashFamilyConfig& config) {
    RaceSketch sketch(config);
    std::vector<double> scratch;
    for (const auto& cell : dataset.cells) sketch.add_with_scratch(cell, scratch);
    return sketch;
}

RaceSketch RaceSketch::build(const Dataset& dataset, const HashFamilyConfig& config) {
    RaceSketch total(config);
    const auto n = static_cast<int64_t>(dataset.size());
#pragma omp parallel
    {
        RaceSketch local(config);
        std::vector<double> scratch;
#pragma omp for schedule(static) nowait
        for (int64_t i = 0; i < n; ++i) local.add_with_scratch(dataset.cells[i], scratch);
#pragma omp critical(wds_sketch_merge)
        total.merge(local);
    }
    return total;
}

DiversityScores query_all(const RaceSketch& sketch, const Dataset& dataset) {
    DiversityScores out;
    out.ids.reserve(dataset.size());
    for (const auto& cell : dataset.cells) out.ids.push_back(cell.id);
    out.w.resize(dataset.size());
    const auto n = static_cast<int64_t>(dataset.size());
#pragma omp parallel
    {
        std::vector<double> scratch;
#pragma omp for schedule(static)
        for (int64_t i = 0; i < n; ++i)
            out.w[i] = sketch.query_with_scratch(dataset.cells[i], scratch);
    }
    return out;
}

DiversityScores estimate_all(const Dataset& dataset, const HashFamilyConfig& config) {
    if (dataset.size() == 0) fail("estimate_all: empty dataset");
    const RaceSketch sketch = RaceSketch::build(dataset, config);
    return query_all(sketch, dataset);
}

DiversityScores estimate_all_serial(const Dataset& dataset, const HashFamilyConfig& config) {
    if (dataset.size() == 0) fail("estimate_all: empty dataset");
    const RaceSketch sketch = RaceSketch::build_serial(dataset, config);
    DiversityScores out;
    out.ids.reserve(dataset.size());
    std::vector<double> scratch;
    for (const auto& cell : dataset.cells) {
        out.ids.push_back(cell.id);
        out.w.push_back(sketch.query_with_scratch(cell, scratch));
    }
    return out;
}

void RaceSketch::save(const std::string& path) const {
    const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) fail("cannot open '" + path + "' for writing");
    if (binary) {
        const char magic[8] = {'R', 'A', 'C', 'E', '1', 'B', 'I', 'N'};
        out.write(magic, 8);
        auto put64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
        auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        put64(config_.seed);
        put32(config_.n_rows);
        put32(config_.range);
        put64(n_items_);
        put64(counts_.size());
        out.write(reinterpret_cast<const char*>(counts_.data()),
                  static_cast<std::streamsize>(counts_.size() * sizeof(uint32_t)));
    } else {
        out << "RACE1 " << config_.seed << ' ' << config_.n_rows << ' ' << config_.range
            << ' ' << n_items_ << '\n';
        for (uint32_t r = 0; r < config_.n_rows; ++r) {
            const auto* base = counts_.data() + static_cast<size_t>(r) * config_.range;
            for (uint32_t b = 0; b < config_.range; ++b) {
                if (b) out << ' ';
                out << base[b];
            }
            out << '\n';
        }
    }
    if (!out) fail("write to '" + path + "' failed");
}

RaceSketch RaceSketch::load(const std::string& path) {
    const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) fail("cannot open sketch file '" + path + "'");
    HashFamilyConfig cfg;
    uint64_t n_items = 0;
    if (binary) {
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "RACE1BIN", 8) != 0)
            fail("'" + path + "' is not a binary sketch file");
        auto get64 = [&] {
            uint64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        auto get32 = [&] {
            uint32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        cfg.seed = get64();
        cfg.n_rows = get32();
        cfg.range = get32();
        n_items = get64();
        const uint64_t len = get64();
        if (!in || len != static_cast<uint64_t>(cfg.n_rows) * cfg.range)
            fail("sketch file '" + path + "': inconsistent counter length");
        RaceSketch sketch(cfg);
        in.read(reinterpret_cast<char*>(sketch.counts_.data()),
                static_cast<std::streamsize>(len * sizeof(uint32_t)));
        if (!in) fail("sketch file '" + path + "' truncated");
        sketch.n_items_ = n_items;
        return sketch;
    }
    std::string tag;
    in >> tag;
    if (tag != "RACE1") fail("'" + path + "' is not a sketch file");
    in >> cfg.seed >> cfg.n_rows >> cfg.range >> n_items;
    if (!in) fail("sketch file '" + path + "': bad header");
    RaceSketch sketch(cfg);
    for (size_t i = 0; i < sketch.counts_.size(); ++i) {
        if (!(in >> sketch.counts_[i])) fail("sketch file '" + path + "' truncated");
    }
    sketch.n_items_ = n_items;
    return sketch;
}

void write_densities(std::ostream& out, const DiversityScores& scores) {
    char buf[40];
    for (size_t i = 0; i < scores.ids.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", scores.w[i]);
        out << scores.ids[i] << '\t' << buf << '\n';
    }
}

DiversityScores read_densities(std::istream& in) {
    DiversityScores out;
    std::string id;
    double w = 0.0;
    while (in >> id >> w) {
        out.ids.push_back(id);
        out.w.push_back(w);
    }
    return out;
}

}  // namespace wds
