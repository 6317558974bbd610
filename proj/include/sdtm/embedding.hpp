#pragma once

#include <vector>

#include "sdtm/common.hpp"
#include "sdtm/symbol_tree.hpp"

namespace sdtm {

// Frozen token embeddings: one row per vocabulary entry, unit-normalized at
// init, never updated by training.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(int vocab_size, int dim, Rng& rng);
    EmbeddingTable(int vocab_size, int dim, std::vector<double> rows);

    int vocab_size() const { return vocab_size_; }
    int dim() const { return dim_; }
    const double* row(int id) const { return rows_.data() + static_cast<size_t>(id) * dim_; }
    const std::vector<double>& rows() const { return rows_; }

    std::vector<double> embed(int id) const {
        return std::vector<double>(row(id), row(id) + dim_);
    }

    // Token whose embedding has maximal dot product with v; ties break
    // toward the smaller id.
    int nearest(const double* v) const;

private:
    int vocab_size_ = 0;
    int dim_ = 0;
    std::vector<double> rows_;  // row-major [vocab_size x dim]
};

}  // namespace sdtm
