#include "wds/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "wds/rng.hpp"

namespace wds {

namespace {

constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

double round_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// C (m x n) = A (m x k) * B (k x n), accumulation over k in index order.
void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + i * k;
        for (size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void layer_norm(const double* x, double* out, size_t rows, size_t d, const double* gamma,
                const double* beta) {
    for (size_t i = 0; i < rows; ++i) {
        const double* row = x + i * d;
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            const double dlt = row[j] - mean;
            var += dlt * dlt;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        double* orow = out + i * d;
        for (size_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
    }
}

}  // namespace

void validate(const ModelConfig& cfg) {
    if (cfg.n_genes == 0 || cfg.d_model == 0 || cfg.n_layers == 0 || cfg.n_heads == 0 ||
        cfg.d_ff == 0)
        throw std::invalid_argument("model config: all dimensions must be positive");
    if (cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("model config: d_model must be divisible by n_heads");
}

void Model::build_tensor_table() {
    const size_t v = cfg_.n_genes, d = cfg_.d_model, f = cfg_.d_ff;
    tensors_.clear();
    tensors_.push_back({"embedding", {v, d}, {}});
    for (uint32_t l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        tensors_.push_back({p + "ln1.gamma", {d}, {}});
        tensors_.push_back({p + "ln1.beta", {d}, {}});
        tensors_.push_back({p + "attn.wq", {d, d}, {}});
        tensors_.push_back({p + "attn.wk", {d, d}, {}});
        tensors_.push_back({p + "attn.wv", {d, d}, {}});
        tensors_.push_back({p + "attn.wo", {d, d}, {}});
        tensors_.push_back({p + "ln2.gamma", {d}, {}});
        tensors_.push_back({p + "ln2.beta", {d}, {}});
        tensors_.push_back({p + "ff.w1", {d, f}, {}});
        tensors_.push_back({p + "ff.b1", {f}, {}});
        tensors_.push_back({p + "ff.w2", {f, d}, {}});
        tensors_.push_back({p + "ff.b2", {d}, {}});
    }
    for (auto& t : tensors_) {
        size_t n = 1;
        for (size_t s : t.shape) n *= s;
        t.data.assign(n, 0.0);
    }
}

Model Model::seeded(const ModelConfig& cfg) {
    validate(cfg);
    Model model;
    model.cfg_ = cfg;
    model.build_tensor_table();
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    const uint64_t base = rng::derive(cfg.seed, "weights");
    for (size_t ti = 0; ti < model.tensors_.size(); ++ti) {
        auto& t = model.tensors_[ti];
        const bool is_gamma = t.name.find(".gamma") != std::string::npos;
        const bool is_bias = t.name.find(".beta") != std::string::npos ||
                             t.name.find(".b1") != std::string::npos ||
                             t.name.find(".b2") != std::string::npos;
        if (is_gamma) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (is_bias) {
            // zeros already
        } else {
            const uint64_t tkey = rng::absorb(base, ti);
            for (size_t i = 0; i < t.data.size(); ++i)
                t.data[i] = round_to_f32(scale * rng::gaussian(rng::absorb(tkey, i)));
        }
    }
    return model;
}

std::vector<double>& Model::tensor_data(const std::string& name) {
    for (auto& t : tensors_)
        if (t.name == name) return t.data;
    fail("no tensor named '" + name + "'");
}

const std::vector<double>& Model::tensor_data(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t.data;
    fail("no tensor named '" + name + "'");
}

std::vector<std::pair<std::string, std::vector<size_t>>> Model::manifest() const {
    std::vector<std::pair<std::string, std::vector<size_t>>> out;
    for (const auto& t : tensors_) out.emplace_back(t.name, t.shape);
    return out;
}

void Model::save(const std::string& prefix) const {
    std::ofstream man(prefix + ".manifest");
    if (!man) fail("cannot open '" + prefix + ".manifest' for writing");
    man << "% wds-model heads " << cfg_.n_heads << '\n';
    for (const auto& t : tensors_) {
        man << t.name;
        for (size_t s : t.shape) man << ' ' << s;
        man << '\n';
    }
    if (!man) fail("write to '" + prefix + ".manifest' failed");

    std::ofstream blob(prefix + ".bin", std::ios::binary);
    if (!blob) fail("cannot open '" + prefix + ".bin' for writing");
    std::vector<float> buf;
    for (const auto& t : tensors_) {
        buf.resize(t.data.size());
        for (size_t i = 0; i < t.data.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
        blob.write(reinterpret_cast<const char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!blob) fail("write to '" + prefix + ".bin' failed");
}

Model Model::load(const std::string& prefix, uint32_t heads_hint) {
    std::ifstream man(prefix + ".manifest");
    if (!man) fail("cannot open manifest '" + prefix + ".manifest'");
    uint32_t heads = heads_hint;
    std::vector<std::pair<std::string, std::vector<size_t>>> entries;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        if (line[0] == '%') {
            std::istringstream ss(line.substr(1));
            std::string tag, key;
            uint32_t value = 0;
            if (ss >> tag >> key >> value && tag == "wds-model" && key == "heads")
                heads = value;
            continue;
        }
        std::istringstream ss(line);
        std::string name;
        ss >> name;
        std::vector<size_t> shape;
        size_t dim = 0;
        while (ss >> dim) shape.push_back(dim);
        if (name.empty() || shape.empty()) fail("malformed manifest line: '" + line + "'");
        entries.emplace_back(std::move(name), std::move(shape));
    }
    if (entries.empty()) fail("manifest '" + prefix + ".manifest' lists no tensors");
    if (entries[0].first != "embedding" || entries[0].second.size() != 2)
        fail("manifest must start with 'embedding V d_model'");
    if (heads == 0) fail("number of heads not in manifest; pass --heads");

    ModelConfig cfg;
    cfg.n_genes = static_cast<uint32_t>(entries[0].second[0]);
    cfg.d_model = static_cast<uint32_t>(entries[0].second[1]);
    cfg.n_heads = heads;
    if ((entries.size() - 1) % 12 != 0) fail("manifest tensor count does not match layout");
    cfg.n_layers = static_cast<uint32_t>((entries.size() - 1) / 12);
    // d_ff from the first ff.w1 shape
    for (const auto& [name, shape] : entries)
        if (name.ends_with("ff.w1") && shape.size() == 2)
            cfg.d_ff = static_cast<uint32_t>(shape[1]);
    validate(cfg);

    Model model;
    model.cfg_ = cfg;
    model.build_tensor_table();
    if (model.tensors_.size() != entries.size())
        fail("manifest tensor count does not match layout");
    for (size_t i = 0; i < entries.size(); ++i) {
        if (model.tensors_[i].name != entries[i].first ||
            model.tensors_[i].shape != entries[i].second)
            fail("manifest tensor '" + entries[i].first + "' does not match expected '" +
                 model.tensors_[i].name + "'");
    }

    std::ifstream blob(prefix + ".bin", std::ios::binary);
    if (!blob) fail("cannot open weights blob '" + prefix + ".bin'");
    std::vector<float> buf;
    for (auto& t : model.tensors_) {
        buf.resize(t.data.size());
        blob.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!blob) fail("weights blob '" + prefix + ".bin' truncated");
        for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(buf[i]);
    }
    blob.peek();
    if (!blob.eof()) fail("weights blob '" + prefix + ".bin' has trailing data");
    return model;
}

std::vector<double> Model::embed_cell(const CellVector& cell) const {
    const size_t d = cfg_.d_model;
    const auto& emb = tensors_[0].data;
    std::vector<double> out(cell.nnz() * d);
    for (size_t p = 0; p < cell.nnz(); ++p) {
        const auto& [gene, level] = cell.entries[p];
        if (gene >= cfg_.n_genes) fail("gene index out of model vocabulary");
        const double* row = emb.data() + static_cast<size_t>(gene) * d;
        for (size_t j = 0; j < d; ++j) out[p * d + j] = level * row[j];
    }
    return out;
}

AttentionMap Model::forward_padded(std::span<const CellEntry> entries, size_t padded_m) const {
    const size_t m = entries.size();
    const size_t d = cfg_.d_model;
    const size_t heads = cfg_.n_heads;
    const size_t dh = d / heads;
    const size_t rows = std::max(padded_m, m);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    AttentionMap map;
    map.gene_indices.reserve(m);
    for (const auto& e : entries) map.gene_indices.push_back(e.gene);
    map.values.assign(m * m, 0.0);

    // X starts as the scaled embeddings; padded rows stay zero. Masked key
    // positions get -inf logits, so padded rows never reach a valid output.
    std::vector<double> x(rows * d, 0.0);
    const auto& emb = tensors_[0].data;
    for (size_t p = 0; p < m; ++p) {
        if (entries[p].gene >= cfg_.n_genes) fail("gene index out of model vocabulary");
        const double* erow = emb.data() + static_cast<size_t>(entries[p].gene) * d;
        for (size_t j = 0; j < d; ++j) x[p * d + j] = entries[p].level * erow[j];
    }

    std::vector<double> norm(rows * d), q(rows * d), k(rows * d), v(rows * d);
    std::vector<double> attended(rows * d), proj(rows * d);
    std::vector<double> logits(rows), weights(rows);
    std::vector<double> ff1(rows * cfg_.d_ff);

    for (uint32_t l = 0; l < cfg_.n_layers; ++l) {
        const size_t t0 = 1 + static_cast<size_t>(l) * 12;
        const auto& ln1_g = tensors_[t0 + 0].data;
        const auto& ln1_b = tensors_[t0 + 1].data;
        const auto& wq = tensors_[t0 + 2].data;
        const auto& wk = tensors_[t0 + 3].data;
        const auto& wv = tensors_[t0 + 4].data;
        const auto& wo = tensors_[t0 + 5].data;
        const auto& ln2_g = tensors_[t0 + 6].data;
        const auto& ln2_b = tensors_[t0 + 7].data;
        const auto& w1 = tensors_[t0 + 8].data;
        const auto& b1 = tensors_[t0 + 9].data;
        const auto& w2 = tensors_[t0 + 10].data;
        const auto& b2 = tensors_[t0 + 11].data;

        layer_norm(x.data(), norm.data(), rows, d, ln1_g.data(), ln1_b.data());
        matmul(norm.data(), wq.data(), q.data(), rows, d, d);
        matmul(norm.data(), wk.data(), k.data(), rows, d, d);
        matmul(norm.data(), wv.data(), v.data(), rows, d, d);

        for (size_t h = 0; h < heads; ++h) {
            const size_t off = h * dh;
            for (size_t p = 0; p < rows; ++p) {
                const double* qrow = q.data() + p * d + off;
                for (size_t c = 0; c < rows; ++c) {
                    if (c >= m) {
                        logits[c] = kNegInf;  // padding mask
                        continue;
                    }
                    const double* krow = k.data() + c * d + off;
                    double dot = 0.0;
                    for (size_t j = 0; j < dh; ++j) dot += qrow[j] * krow[j];
                    logits[c] = dot * inv_sqrt_dh;
                }
                double mx = kNegInf;
                for (size_t c = 0; c < rows; ++c) mx = std::max(mx, logits[c]);
                double denom = 0.0;
                for (size_t c = 0; c < rows; ++c) {
                    weights[c] = std::exp(logits[c] - mx);
                    denom += weights[c];
                }
                const double inv_denom = 1.0 / denom;
                for (size_t c = 0; c < rows; ++c) weights[c] *= inv_denom;
                if (p < m)
                    for (size_t c = 0; c < m; ++c) map.values[p * m + c] += weights[c];
                double* arow = attended.data() + p * d + off;
                std::fill(arow, arow + dh, 0.0);
                for (size_t c = 0; c < rows; ++c) {
                    const double w = weights[c];
                    const double* vrow = v.data() + c * d + off;
                    for (size_t j = 0; j < dh; ++j) arow[j] += w * vrow[j];
                }
            }
        }
        matmul(attended.data(), wo.data(), proj.data(), rows, d, d);
        for (size_t i = 0; i < rows * d; ++i) x[i] += proj[i];

        layer_norm(x.data(), norm.data(), rows, d, ln2_g.data(), ln2_b.data());
        matmul(norm.data(), w1.data(), ff1.data(), rows, d, cfg_.d_ff);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < cfg_.d_ff; ++j)
                ff1[i * cfg_.d_ff + j] = std::max(0.0, ff1[i * cfg_.d_ff + j] + b1[j]);
        matmul(ff1.data(), w2.data(), proj.data(), rows, cfg_.d_ff, d);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < d; ++j) x[i * d + j] += proj[i * d + j] + b2[j];
    }

    const double inv_lh = 1.0 / (static_cast<double>(cfg_.n_layers) * heads);
    for (double& val : map.values) val *= inv_lh;
    return map;
}

AttentionMap Model::forward_entries(std::span<const CellEntry> entries) const {
    if (entries.empty()) fail("forward pass over an empty cell");
    return forward_padded(entries, entries.size());
}

AttentionMap Model::forward_attention(const CellVector& cell) const {
    return forward_entries(cell.entries);
}

std::vector<AttentionMap> Model::forward_batch(std::span<const CellVector> cells,
                                               size_t batch_size) const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    std::vector<AttentionMap> maps(cells.size());
    // Group maxima depend only on batch_size, so results do not depend on the
    // number of worker threads.
    std::vector<size_t> group_max((cells.size() + batch_size - 1) / batch_size, 0);
    for (size_t i = 0; i < cells.size(); ++i) {
        auto& gm = group_max[i / batch_size];
        gm = std::max(gm, cells[i].nnz());
    }
    const auto n = static_cast<int64_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<size_t>(i);
        maps[idx] = forward_padded(cells[idx].entries, group_max[idx / batch_size]);
    }
    return maps;
}

}  // namespace wds
