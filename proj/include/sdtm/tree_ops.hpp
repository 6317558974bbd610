#pragma once

#include <optional>
#include <vector>

#include "sdtm/sparse_tree.hpp"

namespace sdtm {

// Simplex weights over {left, right, cons}.
struct OpWeights {
    double w_left = 0.0;
    double w_right = 0.0;
    double w_cons = 0.0;

    void validate(double tol = 1e-6) const;
};

// The four soft-selected tree arguments plus the new root filler.
struct InterpreterArgs {
    SparseTree t_left;
    SparseTree t_right;
    SparseTree t_cons_left;
    SparseTree t_cons_right;
    std::vector<double> root_filler;
};

// left: keep even indices, shift right. The root (odd) is discarded.
SparseTree op_left(const SparseTree& t);

// right: keep odd indices above 1, shift right.
SparseTree op_right(const SparseTree& t);

// cons: left subtree indices to 2i, right to 2i+1, optional new root at 1.
// Throws DepthOverflowError naming the first offending index.
SparseTree op_cons(const SparseTree& l, const SparseTree& r,
                   const std::optional<std::vector<double>>& root = std::nullopt,
                   int max_depth = kDefaultMaxDepth);

// Scales every value vector.
SparseTree scale_tree(const SparseTree& t, double c);

// Entrywise sum, coalesced.
SparseTree add_trees(const SparseTree& a, const SparseTree& b);

// Eq.-1 blended step:
//   w_l*left(T_L) + w_r*right(T_R) + w_c*(cons(T_CL, T_CR) + root at 1)
// Branches with weight exactly 0 are skipped entirely.
SparseTree interpret(const OpWeights& w, const InterpreterArgs& args,
                     int max_depth = kDefaultMaxDepth);

// Keeps the k entries with largest L2 norm; ties break toward the smaller
// index. Trees with at most k entries pass through unchanged.
SparseTree prune_topk(const SparseTree& t, size_t k);

}  // namespace sdtm
