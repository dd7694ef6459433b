#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace wds {

// One expressed gene: index into the vocabulary plus a positive level.
// Zeros are structural and never stored.
struct CellEntry {
    uint32_t gene = 0;
    double level = 0.0;
};

// A sparse cell: entries sorted by strictly increasing gene index, all
// levels > 0, never empty.
struct CellVector {
    std::string id;
    std::vector<CellEntry> entries;

    [[nodiscard]] size_t nnz() const noexcept { return entries.size(); }
};

// Throws std::invalid_argument on any invariant violation.
void validate_cell(const CellVector& cell, uint32_t n_genes);

struct Dataset {
    uint32_t n_genes = 0;  // vocabulary size V
    std::vector<CellVector> cells;
    // 0 = negative/control, 1 = positive/disease
    std::optional<std::unordered_map<std::string, int>> labels;
    std::optional<std::unordered_map<uint32_t, std::string>> gene_symbols;

    [[nodiscard]] size_t size() const noexcept { return cells.size(); }
    [[nodiscard]] bool has_labels() const noexcept { return labels.has_value(); }
    [[nodiscard]] int label_of(const std::string& cell_id) const;
    [[nodiscard]] uint64_t total_nnz() const noexcept;
    void validate() const;
};

// Expression triplet text format:
//   header line "n_cells n_genes nnz", then nnz lines "cell_id gene level".
//   Lines starting with '%' are comments. Cells are kept in order of first
//   appearance; triplets for one cell need not be contiguous or sorted.
Dataset parse_triplet_file(std::istream& expr, std::istream* labels = nullptr,
                           std::istream* symbols = nullptr);
Dataset load_dataset(const std::string& expr_path,
                     const std::string& labels_path = {},
                     const std::string& symbols_path = {});
void write_triplet_file(std::ostream& out, const Dataset& dataset);

// Seurat-style transform: level -> log(1 + level / sum(levels) * total_scale).
// Support is unchanged; opt-in only, never applied implicitly.
CellVector normalize_cell(const CellVector& cell, double total_scale = 1e4);
void normalize_dataset(Dataset& dataset, double total_scale = 1e4);

// Min-Max similarity: sum_i min(x_i,y_i) / sum_i max(x_i,y_i), merged over
// the two sorted supports in O(nnz(x) + nnz(y)). Always in [0,1]; exactly 1
// iff the vectors are elementwise equal.
double min_max_similarity(const CellVector& x, const CellVector& y);

// Brute-force Min-Max density: sum of similarities of q against every cell.
// The validation oracle for the sketch; O(n * nnz) per query.
double exact_density(const Dataset& dataset, const CellVector& q);
std::vector<double> exact_density_all_serial(const Dataset& dataset);
std::vector<double> exact_density_all(const Dataset& dataset);  // OpenMP

}  // namespace wds
