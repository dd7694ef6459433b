#include "wds/cws.hpp"

namespace wds {

void fill_ln_levels(const CellVector& x, std::vector<double>& ln_levels) {
    ln_levels.resize(x.entries.size());
    for (size_t i = 0; i < x.entries.size(); ++i)
        ln_levels[i] = fastmath::fast_log(x.entries[i].level);
}

uint32_t hash_cell(const CellVector& x, const HashFamilyConfig& config, uint32_t row) {
    if (x.entries.empty()) throw std::invalid_argument("hash_cell: empty cell");
    std::vector<double> ln_levels;
    fill_ln_levels(x, ln_levels);
    return cws_detail::hash_entries(x.entries, ln_levels,
                                    cws_detail::row_state(config.seed, row), config.range);
}

}  // namespace wds
