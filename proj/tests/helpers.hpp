#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sdtm/embedding.hpp"
#include "sdtm/sct.hpp"
#include "sdtm/symbol_tree.hpp"
#include "sdtm/tree_ops.hpp"

namespace sdtm::test {

// Independent index oracle: compose the cons index maps bottom-up
// (left child -> 2i, right child -> 2i+1).
inline TreeIndex cons_index_oracle(const Path& path) {
    TreeIndex idx = 1;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        idx = (*it == Branch::Left) ? 2 * idx : 2 * idx + 1;
    }
    return idx;
}

inline SymbolTree random_symbol_tree(int max_depth, int vocab_size, Rng& rng,
                                     double branch_p = 0.6) {
    std::function<SymbolTree(int)> grow = [&](int depth) -> SymbolTree {
        int label = 1 + static_cast<int>(rng.uniform_int(vocab_size - 1));
        if (depth == 0) return SymbolTree(label);
        double roll = rng.uniform();
        if (roll < 1.0 - branch_p) return SymbolTree(label);
        if (roll < 1.0 - branch_p + 0.15) return SymbolTree(label, grow(depth - 1));
        SymbolTree l = grow(depth - 1);
        SymbolTree r = grow(depth - 1);
        return SymbolTree(label, std::move(l), std::move(r));
    };
    return grow(max_depth);
}

// SymbolTree-level structural operations; the oracle side of the
// sparse-vs-symbolic equivalence checks.
inline std::optional<SymbolTree> sym_left(const SymbolTree& t) {
    return t.left_subtree();
}

inline std::optional<SymbolTree> sym_right(const SymbolTree& t) {
    return t.right_subtree();
}

inline SymbolTree sym_cons(const SymbolTree& l, const SymbolTree& r, int root_label) {
    return SymbolTree(root_label, l, r);
}

inline EmbeddingTable test_table(int vocab_size, int dim, uint64_t seed = 42) {
    Rng rng(seed);
    return EmbeddingTable(vocab_size, dim, rng);
}

inline SparseTree sparse_of(const std::optional<SymbolTree>& t,
                            const EmbeddingTable& table, int max_depth = 16) {
    if (!t) return SparseTree(table.dim());
    return from_symbol_tree(*t, table, max_depth);
}

}  // namespace sdtm::test
