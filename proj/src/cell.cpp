#include "wds/cell.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace wds {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        size_t pos = line.find_first_not_of(" \t\r\n");
        if (pos == std::string::npos) continue;  // blank
        if (line[pos] == '%') continue;          // comment
        return true;
    }
    return false;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(std::move(tok));
    return out;
}

uint64_t parse_uint(const std::string& tok, const char* what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        fail(std::string("expected a non-negative integer for ") + what + ", got '" + tok + "'");
    errno = 0;
    char* end = nullptr;
    uint64_t v = std::strtoull(tok.c_str(), &end, 10);
    if (errno != 0 || end != tok.c_str() + tok.size())
        fail(std::string("integer out of range for ") + what + ": '" + tok + "'");
    return v;
}

double parse_level(const std::string& tok) {
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || errno == ERANGE)
        fail("malformed expression level '" + tok + "'");
    return v;
}

}  // namespace

void validate_cell(const CellVector& cell, uint32_t n_genes) {
    if (cell.entries.empty()) fail("cell '" + cell.id + "' has no entries");
    uint32_t prev = 0;
    bool first = true;
    for (const auto& [gene, level] : cell.entries) {
        if (gene >= n_genes)
            fail("cell '" + cell.id + "': gene index " + std::to_string(gene) +
                 " out of range (V=" + std::to_string(n_genes) + ")");
        if (!first && gene <= prev)
            fail("cell '" + cell.id + "': gene indices not strictly increasing");
        if (!(level > 0.0) || !std::isfinite(level))
            fail("cell '" + cell.id + "': non-positive level at gene " + std::to_string(gene));
        prev = gene;
        first = false;
    }
}

int Dataset::label_of(const std::string& cell_id) const {
    if (!labels) fail("dataset has no labels");
    auto it = labels->find(cell_id);
    if (it == labels->end()) fail("no label for cell '" + cell_id + "'");
    return it->second;
}

uint64_t Dataset::total_nnz() const noexcept {
    uint64_t n = 0;
    for (const auto& c : cells) n += c.nnz();
    return n;
}

void Dataset::validate() const {
    std::unordered_set<std::string> seen;
    seen.reserve(cells.size());
    for (const auto& cell : cells) {
        validate_cell(cell, n_genes);
        if (!seen.insert(cell.id).second) fail("duplicate cell id '" + cell.id + "'");
    }
    if (labels) {
        for (const auto& cell : cells) {
            auto it = labels->find(cell.id);
            if (it == labels->end()) fail("no label for cell '" + cell.id + "'");
            if (it->second != 0 && it->second != 1)
                fail("label for cell '" + cell.id + "' must be 0 or 1");
        }
    }
}

Dataset parse_triplet_file(std::istream& expr, std::istream* labels, std::istream* symbols) {
    std::string line;
    if (!next_data_line(expr, line)) fail("empty expression file");
    auto header = split_ws(line);
    if (header.size() != 3) fail("header must be 'n_cells n_genes nnz'");
    const uint64_t n_cells = parse_uint(header[0], "n_cells");
    const uint64_t n_genes = parse_uint(header[1], "n_genes");
    const uint64_t nnz = parse_uint(header[2], "nnz");
    if (n_genes == 0 || n_genes > UINT32_MAX) fail("n_genes out of range");

    Dataset ds;
    ds.n_genes = static_cast<uint32_t>(n_genes);
    std::unordered_map<std::string, size_t> index_of;
    index_of.reserve(n_cells);

    for (uint64_t k = 0; k < nnz; ++k) {
        if (!next_data_line(expr, line))
            fail("expected " + std::to_string(nnz) + " triplets, got " + std::to_string(k));
        auto tok = split_ws(line);
        if (tok.size() != 3) fail("malformed triplet line: '" + line + "'");
        const uint64_t gene = parse_uint(tok[1], "gene index");
        if (gene >= n_genes)
            fail("gene index " + tok[1] + " out of range (V=" + std::to_string(n_genes) + ")");
        const double level = parse_level(tok[2]);
        if (!(level > 0.0) || !std::isfinite(level))
            fail("non-positive level for cell '" + tok[0] + "', gene " + tok[1] +
                 " (zeros must be omitted)");
        auto [it, inserted] = index_of.try_emplace(tok[0], ds.cells.size());
        if (inserted) ds.cells.push_back(CellVector{tok[0], {}});
        ds.cells[it->second].entries.push_back({static_cast<uint32_t>(gene), level});
    }
    if (next_data_line(expr, line)) fail("trailing data after " + std::to_string(nnz) + " triplets");
    if (ds.cells.size() != n_cells)
        fail("header declared " + std::to_string(n_cells) + " cells, file has " +
             std::to_string(ds.cells.size()));

    for (auto& cell : ds.cells) {
        std::sort(cell.entries.begin(), cell.entries.end(),
                  [](const CellEntry& a, const CellEntry& b) { return a.gene < b.gene; });
        for (size_t i = 1; i < cell.entries.size(); ++i)
            if (cell.entries[i].gene == cell.entries[i - 1].gene)
                fail("duplicate entry for cell '" + cell.id + "', gene " +
                     std::to_string(cell.entries[i].gene));
    }

    if (labels) {
        std::unordered_map<std::string, int> lab;
        while (next_data_line(*labels, line)) {
            auto tok = split_ws(line);
            if (tok.size() != 2) fail("malformed label line: '" + line + "'");
            const uint64_t v = parse_uint(tok[1], "label");
            if (v > 1) fail("label must be 0 or 1, got '" + tok[1] + "'");
            if (!lab.emplace(tok[0], static_cast<int>(v)).second)
                fail("duplicate label for cell '" + tok[0] + "'");
        }
        ds.labels = std::move(lab);
    }

    if (symbols) {
        std::unordered_map<uint32_t, std::string> sym;
        while (next_data_line(*symbols, line)) {
            auto tok = split_ws(line);
            if (tok.size() != 2) fail("malformed symbol line: '" + line + "'");
            const uint64_t idx = parse_uint(tok[0], "gene index");
            if (idx >= n_genes) fail("symbol gene index " + tok[0] + " out of range");
            if (!sym.emplace(static_cast<uint32_t>(idx), tok[1]).second)
                fail("duplicate symbol for gene " + tok[0]);
        }
        ds.gene_symbols = std::move(sym);
    }

    ds.validate();
    return ds;
}

Dataset load_dataset(const std::string& expr_path, const std::string& labels_path,
                     const std::string& symbols_path) {
    std::ifstream expr(expr_path);
    if (!expr) fail("cannot open expression file '" + expr_path + "'");
    std::ifstream labels, symbols;
    std::istream* labels_p = nullptr;
    std::istream* symbols_p = nullptr;
    if (!labels_path.empty()) {
        labels.open(labels_path);
        if (!labels) fail("cannot open labels file '" + labels_path + "'");
        labels_p = &labels;
    }
    if (!symbols_path.empty()) {
        symbols.open(symbols_path);
        if (!symbols) fail("cannot open symbols file '" + symbols_path + "'");
        symbols_p = &symbols;
    }
    return parse_triplet_file(expr, labels_p, symbols_p);
}

void write_triplet_file(std::ostream& out, const Dataset& dataset) {
    out << dataset.size() << ' ' << dataset.n_genes << ' ' << dataset.total_nnz() << '\n';
    char buf[40];
    for (const auto& cell : dataset.cells) {
        for (const auto& [gene, level] : cell.entries) {
            std::snprintf(buf, sizeof buf, "%.17g", level);
            out << cell.id << ' ' << gene << ' ' << buf << '\n';
        }
    }
}

CellVector normalize_cell(const CellVector& cell, double total_scale) {
    if (cell.entries.empty()) fail("cannot normalize an empty cell");
    if (!(total_scale > 0.0)) fail("total_scale must be positive");
    double sum = 0.0;
    for (const auto& e : cell.entries) sum += e.level;
    const double factor = total_scale / sum;
    CellVector out{cell.id, cell.entries};
    for (auto& e : out.entries) e.level = std::log1p(e.level * factor);
    return out;
}

void normalize_dataset(Dataset& dataset, double total_scale) {
    for (auto& cell : dataset.cells) cell = normalize_cell(cell, total_scale);
}

double min_max_similarity(const CellVector& x, const CellVector& y) {
    double num = 0.0, den = 0.0;
    const auto& a = x.entries;
    const auto& b = y.entries;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].gene == b[j].gene) {
            num += std::min(a[i].level, b[j].level);
            den += std::max(a[i].level, b[j].level);
            ++i;
            ++j;
        } else if (a[i].gene < b[j].gene) {
            den += a[i].level;
            ++i;
        } else {
            den += b[j].level;
            ++j;
        }
    }
    for (; i < a.size(); ++i) den += a[i].level;
    for (; j < b.size(); ++j) den += b[j].level;
    return num / den;  // den > 0 by the CellVector invariant
}

double exact_density(const Dataset& dataset, const CellVector& q) {
    double sum = 0.0;
    for (const auto& cell : dataset.cells) sum += min_max_similarity(q, cell);
    return sum;
}

std::vector<double> exact_density_all_serial(const Dataset& dataset) {
    std::vector<double> out(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i)
        out[i] = exact_density(dataset, dataset.cells[i]);
    return out;
}

std::vector<double> exact_density_all(const Dataset& dataset) {
    std::vector<double> out(dataset.size());
    const auto n = static_cast<int64_t>(dataset.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (int64_t i = 0; i < n; ++i)
        out[i] = exact_density(dataset, dataset.cells[i]);
    return out;
}

}  // namespace wds
