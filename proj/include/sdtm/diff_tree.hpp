#pragma once

#include <optional>
#include <vector>

#include "sdtm/sparse_tree.hpp"
#include "sdtm/tape.hpp"
#include "sdtm/tree_ops.hpp"

namespace sdtm {

// A SparseTree whose value rows live on a tape. The index set is plain data;
// only values carry gradients.
struct DiffTree {
    std::vector<TreeIndex> indices;  // sorted, unique
    Value values;                    // [size x dim]
    int dim = 0;

    size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

DiffTree dtree_from_sparse(Tape& tape, const SparseTree& t, bool differentiable = false);
SparseTree dtree_to_sparse(const Tape& tape, const DiffTree& t);

DiffTree dtree_left(Tape& tape, const DiffTree& t);
DiffTree dtree_right(Tape& tape, const DiffTree& t);
DiffTree dtree_cons(Tape& tape, const DiffTree& l, const DiffTree& r,
                    std::optional<Value> root, int max_depth);

// Places a [1 x d] vector at the root index.
DiffTree dtree_root_insert(Tape& tape, Value vec);

// sum_m weights[m] * trees[m], coalesced over the union index set. Gradients
// flow through the weights and through every tree's values.
DiffTree dtree_weighted_sum(Tape& tape, const std::vector<DiffTree>& trees,
                            const std::vector<Value>& weights);

// Values of `t` aligned to the index set `targets` (rows of zeros where `t`
// has no entry). `targets` must be sorted unique and must cover t's indices.
Value dtree_gather(Tape& tape, const DiffTree& t, const std::vector<TreeIndex>& targets);

DiffTree dtree_prune_topk(Tape& tape, const DiffTree& t, size_t k);

struct DiffInterpreterArgs {
    DiffTree t_left;
    DiffTree t_right;
    DiffTree t_cons_left;
    DiffTree t_cons_right;
    Value root_filler;  // [1 x d]
};

// Eq.-1 step with tape weights: weights is a [1 x 3] simplex row. When
// cons_only is set the op weights are the constant (0,0,1): the left/right
// branches are skipped entirely and no gradient flows to `weights` (which
// may be invalid in that case).
DiffTree dtree_interpret(Tape& tape, Value weights, const DiffInterpreterArgs& args,
                         int max_depth, bool cons_only = false);

}  // namespace sdtm
