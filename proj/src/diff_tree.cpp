#include "sdtm/diff_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdtm/common.hpp"

namespace sdtm {

DiffTree dtree_from_sparse(Tape& tape, const SparseTree& t, bool differentiable) {
    Tensor values({t.size(), static_cast<size_t>(t.dim())}, t.values());
    Value v = differentiable ? tape.leaf(std::move(values))
                             : tape.constant(std::move(values));
    return DiffTree{t.indices(), v, t.dim()};
}

SparseTree dtree_to_sparse(const Tape& tape, const DiffTree& t) {
    return SparseTree::from_sorted(t.dim, t.indices, tape.data(t.values).v);
}

DiffTree dtree_left(Tape& tape, const DiffTree& t) {
    std::vector<TreeIndex> indices;
    std::vector<size_t> rows;
    for (size_t k = 0; k < t.size(); ++k) {
        if ((t.indices[k] & 1) == 0) {
            indices.push_back(t.indices[k] >> 1);
            rows.push_back(k);
        }
    }
    Value v = tape.gather_rows(t.values, std::move(rows));
    return DiffTree{std::move(indices), v, t.dim};
}

DiffTree dtree_right(Tape& tape, const DiffTree& t) {
    std::vector<TreeIndex> indices;
    std::vector<size_t> rows;
    for (size_t k = 0; k < t.size(); ++k) {
        if ((t.indices[k] & 1) == 1 && t.indices[k] > 1) {
            indices.push_back(t.indices[k] >> 1);
            rows.push_back(k);
        }
    }
    Value v = tape.gather_rows(t.values, std::move(rows));
    return DiffTree{std::move(indices), v, t.dim};
}

namespace {

void check_cons_depth(const DiffTree& t, int max_depth) {
    if (t.empty()) return;
    TreeIndex worst = t.indices.back();
    if (depth_of(worst) + 1 > max_depth) {
        throw DepthOverflowError("cons would shift index " + std::to_string(worst) +
                                     " past max depth " + std::to_string(max_depth),
                                 worst);
    }
}

}  // namespace

DiffTree dtree_cons(Tape& tape, const DiffTree& l, const DiffTree& r,
                    std::optional<Value> root, int max_depth) {
    check_cons_depth(l, max_depth);
    check_cons_depth(r, max_depth);
    int d = l.dim ? l.dim : r.dim;
    if (l.dim && r.dim && l.dim != r.dim) {
        throw DimMismatchError("cons arguments disagree on dimension");
    }

    // Stack rows as [root?; left; right] then permute into index order.
    std::vector<Value> parts;
    size_t root_offset = 0;
    if (root) {
        parts.push_back(*root);
        root_offset = 1;
        if (d == 0) d = static_cast<int>(tape.data(*root).cols());
    }
    parts.push_back(l.values);
    parts.push_back(r.values);
    Value stacked = tape.concat_rows(parts);

    std::vector<TreeIndex> indices;
    std::vector<size_t> perm;
    indices.reserve(l.size() + r.size() + root_offset);
    if (root) {
        indices.push_back(1);
        perm.push_back(0);
    }
    size_t a = 0, b = 0;
    while (a < l.size() || b < r.size()) {
        TreeIndex ia = a < l.size() ? (l.indices[a] << 1) : UINT64_MAX;
        TreeIndex ib = b < r.size() ? ((r.indices[b] << 1) | 1) : UINT64_MAX;
        if (ia < ib) {
            indices.push_back(ia);
            perm.push_back(root_offset + a);
            ++a;
        } else {
            indices.push_back(ib);
            perm.push_back(root_offset + l.size() + b);
            ++b;
        }
    }
    Value v = tape.gather_rows(stacked, std::move(perm));
    return DiffTree{std::move(indices), v, d};
}

DiffTree dtree_root_insert(Tape& tape, Value vec) {
    const Tensor& t = tape.data(vec);
    if (t.rows() != 1) throw ShapeError("root_insert expects a [1 x d] row");
    return DiffTree{{1}, vec, static_cast<int>(t.cols())};
}

DiffTree dtree_weighted_sum(Tape& tape, const std::vector<DiffTree>& trees,
                            const std::vector<Value>& weights) {
    if (trees.size() != weights.size() || trees.empty()) {
        throw ShapeError("weighted_tree_sum: need one weight per tree");
    }
    int d = 0;
    for (const auto& t : trees) {
        if (t.dim) {
            if (d && t.dim != d) throw DimMismatchError("weighted_tree_sum dims differ");
            d = t.dim;
        }
    }
    std::vector<TreeIndex> uni;
    for (const auto& t : trees) {
        uni.insert(uni.end(), t.indices.begin(), t.indices.end());
    }
    std::sort(uni.begin(), uni.end());
    uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

    Value acc;
    for (size_t m = 0; m < trees.size(); ++m) {
        if (trees[m].empty()) continue;
        std::vector<size_t> dest;
        dest.reserve(trees[m].size());
        for (TreeIndex idx : trees[m].indices) {
            dest.push_back(static_cast<size_t>(
                std::lower_bound(uni.begin(), uni.end(), idx) - uni.begin()));
        }
        Value scaled = tape.scale(trees[m].values, weights[m]);
        Value spread = tape.scatter_add_rows(scaled, std::move(dest), uni.size());
        acc = acc.valid() ? tape.add(acc, spread) : spread;
    }
    if (!acc.valid()) {
        acc = tape.constant(Tensor({0, static_cast<size_t>(d)}));
        return DiffTree{{}, acc, d};
    }
    return DiffTree{std::move(uni), acc, d};
}

Value dtree_gather(Tape& tape, const DiffTree& t, const std::vector<TreeIndex>& targets) {
    std::vector<size_t> dest;
    dest.reserve(t.size());
    for (TreeIndex idx : t.indices) {
        auto it = std::lower_bound(targets.begin(), targets.end(), idx);
        if (it == targets.end() || *it != idx) {
            throw Error("tree_gather: target set does not cover index " +
                        std::to_string(idx));
        }
        dest.push_back(static_cast<size_t>(it - targets.begin()));
    }
    return tape.scatter_add_rows(t.values, std::move(dest), targets.size());
}

DiffTree dtree_prune_topk(Tape& tape, const DiffTree& t, size_t k) {
    if (k < 1) throw Error("prune_topk requires k >= 1");
    if (t.size() <= k) return t;
    const Tensor& vals = tape.data(t.values);
    size_t d = vals.cols();
    std::vector<double> norms(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        const double* row = vals.rowptr(i);
        double s = 0.0;
        for (size_t c = 0; c < d; ++c) s += row[c] * row[c];
        norms[i] = s;
    }
    std::vector<size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&norms](size_t a, size_t b) { return norms[a] > norms[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    std::vector<TreeIndex> indices;
    indices.reserve(k);
    for (size_t i : order) indices.push_back(t.indices[i]);
    Value v = tape.gather_rows(t.values, std::move(order));
    return DiffTree{std::move(indices), v, t.dim};
}

DiffTree dtree_interpret(Tape& tape, Value weights, const DiffInterpreterArgs& args,
                         int max_depth, bool cons_only) {
    DiffTree cons = dtree_cons(tape, args.t_cons_left, args.t_cons_right,
                               args.root_filler, max_depth);
    if (cons_only) return cons;

    const Tensor& w = tape.data(weights);
    if (w.numel() != 3) {
        throw ShapeError("interpret weights must have 3 entries, got " + w.shape_str());
    }
    DiffTree left = dtree_left(tape, args.t_left);
    DiffTree right = dtree_right(tape, args.t_right);
    Value w_row = tape.reshape(weights, {1, 3});
    std::vector<Value> ws = {tape.slice_cols(w_row, 0, 1), tape.slice_cols(w_row, 1, 1),
                             tape.slice_cols(w_row, 2, 1)};
    return dtree_weighted_sum(tape, {left, right, cons}, ws);
}

}  // namespace sdtm
