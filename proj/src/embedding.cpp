#include "sdtm/embedding.hpp"

#include <cmath>

namespace sdtm {

EmbeddingTable::EmbeddingTable(int vocab_size, int dim, Rng& rng)
    : vocab_size_(vocab_size), dim_(dim) {
    rows_.resize(static_cast<size_t>(vocab_size) * dim);
    for (int i = 0; i < vocab_size; ++i) {
        double* r = rows_.data() + static_cast<size_t>(i) * dim;
        double norm2 = 0.0;
        for (int j = 0; j < dim; ++j) {
            r[j] = rng.normal();
            norm2 += r[j] * r[j];
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (int j = 0; j < dim; ++j) r[j] *= inv;
    }
}

EmbeddingTable::EmbeddingTable(int vocab_size, int dim, std::vector<double> rows)
    : vocab_size_(vocab_size), dim_(dim), rows_(std::move(rows)) {
    if (rows_.size() != static_cast<size_t>(vocab_size) * dim) {
        throw DimMismatchError("embedding rows size mismatch");
    }
}

int EmbeddingTable::nearest(const double* v) const {
    int best = 0;
    double best_score = 0.0;
    for (int i = 0; i < vocab_size_; ++i) {
        const double* r = row(i);
        double s = 0.0;
        for (int j = 0; j < dim_; ++j) s += r[j] * v[j];
        if (i == 0 || s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

}  // namespace sdtm
