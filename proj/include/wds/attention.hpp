#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wds/cell.hpp"

// Minimal permutation-invariant encoder producing per-cell attention maps.
// A cell's expressed genes form an unordered set, so there are no positional
// encodings and no causal mask; the map returned for a cell is the
// elementwise mean of the post-softmax attention matrices over all layers
// and heads. Inference only; weights are seeded-random or loaded from file.

namespace wds {

struct ModelConfig {
    uint32_t n_genes = 0;
    uint32_t d_model = 32;
    uint32_t n_layers = 2;
    uint32_t n_heads = 4;
    uint32_t d_ff = 64;
    uint64_t seed = 0;
};

void validate(const ModelConfig& cfg);

// Row-stochastic m x m matrix over the cell's expressed genes, in the order
// they were fed to the model.
struct AttentionMap {
    std::vector<uint32_t> gene_indices;
    std::vector<double> values;  // row-major m x m

    [[nodiscard]] size_t m() const noexcept { return gene_indices.size(); }
    [[nodiscard]] double at(size_t p, size_t q) const { return values[p * m() + q]; }
};

class Model {
public:
    static Model seeded(const ModelConfig& cfg);

    // `prefix`.manifest lists tensors ("name dim0 dim1 ..."), `prefix`.bin
    // holds little-endian float32 values in manifest order.
    static Model load(const std::string& prefix, uint32_t heads_hint = 0);
    void save(const std::string& prefix) const;

    [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }

    // level_p * E[gene_p], row-major m x d_model.
    [[nodiscard]] std::vector<double> embed_cell(const CellVector& cell) const;

    [[nodiscard]] AttentionMap forward_attention(const CellVector& cell) const;
    // Same forward over entries in an arbitrary (not necessarily sorted) order.
    [[nodiscard]] AttentionMap forward_entries(std::span<const CellEntry> entries) const;

    // Batched forward: consecutive groups of `batch_size` cells are padded to
    // the group maximum m, masked positions get -inf logits pre-softmax.
    // Per-cell results equal the unbatched forward. OpenMP across cells.
    [[nodiscard]] std::vector<AttentionMap> forward_batch(
        std::span<const CellVector> cells, size_t batch_size = 64) const;

    // Tensor access by manifest name, for crafted weights and tests.
    [[nodiscard]] std::vector<double>& tensor_data(const std::string& name);
    [[nodiscard]] const std::vector<double>& tensor_data(const std::string& name) const;
    [[nodiscard]] std::vector<std::pair<std::string, std::vector<size_t>>> manifest() const;

private:
    struct Tensor {
        std::string name;
        std::vector<size_t> shape;
        std::vector<double> data;  // float32-rounded values widened to double
    };

    Model() = default;
    void build_tensor_table();
    AttentionMap forward_padded(std::span<const CellEntry> entries, size_t padded_m) const;

    ModelConfig cfg_;
    std::vector<Tensor> tensors_;

    friend class ModelTestAccess;
};

}  // namespace wds
