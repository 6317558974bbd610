#include "sdtm/tree_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sdtm/common.hpp"

namespace sdtm {

void OpWeights::validate(double tol) const {
    if (w_left < 0 || w_right < 0 || w_cons < 0 ||
        std::abs(w_left + w_right + w_cons - 1.0) > tol) {
        throw Error("operation weights must be a simplex: got (" +
                    std::to_string(w_left) + ", " + std::to_string(w_right) + ", " +
                    std::to_string(w_cons) + ")");
    }
}

SparseTree op_left(const SparseTree& t) {
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    const int d = t.dim();
    for (size_t k = 0; k < t.size(); ++k) {
        TreeIndex i = t.indices()[k];
        if ((i & 1) == 0) {
            indices.push_back(i >> 1);
            values.insert(values.end(), t.row(k), t.row(k) + d);
        }
    }
    return SparseTree::from_sorted(d, std::move(indices), std::move(values));
}

SparseTree op_right(const SparseTree& t) {
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    const int d = t.dim();
    for (size_t k = 0; k < t.size(); ++k) {
        TreeIndex i = t.indices()[k];
        if ((i & 1) == 1 && i > 1) {
            indices.push_back(i >> 1);
            values.insert(values.end(), t.row(k), t.row(k) + d);
        }
    }
    return SparseTree::from_sorted(d, std::move(indices), std::move(values));
}

namespace {

void check_shift_depth(const SparseTree& t, int max_depth) {
    if (t.empty()) return;
    TreeIndex worst = t.indices().back();
    if (depth_of(worst) + 1 > max_depth) {
        throw DepthOverflowError("cons would shift index " + std::to_string(worst) +
                                     " past max depth " + std::to_string(max_depth),
                                 worst);
    }
}

}  // namespace

SparseTree op_cons(const SparseTree& l, const SparseTree& r,
                   const std::optional<std::vector<double>>& root, int max_depth) {
    int d = l.dim();
    if (l.empty() && !r.empty()) d = r.dim();
    if (root && l.empty() && r.empty()) d = static_cast<int>(root->size());
    if ((!l.empty() && l.dim() != d) || (!r.empty() && r.dim() != d) ||
        (root && static_cast<int>(root->size()) != d)) {
        throw DimMismatchError("cons arguments disagree on dimension");
    }
    check_shift_depth(l, max_depth);
    check_shift_depth(r, max_depth);

    // Shifted left indices (all even) and right indices (all odd) interleave;
    // a single merge keeps the result sorted without a coalesce pass.
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    indices.reserve(l.size() + r.size() + 1);
    values.reserve((l.size() + r.size() + 1) * d);
    if (root) {
        indices.push_back(1);
        values.insert(values.end(), root->begin(), root->end());
    }
    size_t a = 0, b = 0;
    while (a < l.size() || b < r.size()) {
        TreeIndex ia = a < l.size() ? (l.indices()[a] << 1) : UINT64_MAX;
        TreeIndex ib = b < r.size() ? ((r.indices()[b] << 1) | 1) : UINT64_MAX;
        if (ia < ib) {
            indices.push_back(ia);
            values.insert(values.end(), l.row(a), l.row(a) + d);
            ++a;
        } else {
            indices.push_back(ib);
            values.insert(values.end(), r.row(b), r.row(b) + d);
            ++b;
        }
    }
    return SparseTree::from_sorted(d, std::move(indices), std::move(values));
}

SparseTree scale_tree(const SparseTree& t, double c) {
    std::vector<double> values(t.values());
    for (double& v : values) v *= c;
    return SparseTree::from_sorted(t.dim(), t.indices(), std::move(values));
}

SparseTree add_trees(const SparseTree& a, const SparseTree& b) {
    if (!a.empty() && !b.empty() && a.dim() != b.dim()) {
        throw DimMismatchError("cannot add trees of dimension " +
                               std::to_string(a.dim()) + " and " +
                               std::to_string(b.dim()));
    }
    const int d = a.empty() ? b.dim() : a.dim();
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        TreeIndex ia = i < a.size() ? a.indices()[i] : UINT64_MAX;
        TreeIndex ib = j < b.size() ? b.indices()[j] : UINT64_MAX;
        if (ia < ib) {
            indices.push_back(ia);
            values.insert(values.end(), a.row(i), a.row(i) + d);
            ++i;
        } else if (ib < ia) {
            indices.push_back(ib);
            values.insert(values.end(), b.row(j), b.row(j) + d);
            ++j;
        } else {
            indices.push_back(ia);
            size_t base = values.size();
            values.insert(values.end(), a.row(i), a.row(i) + d);
            for (int c = 0; c < d; ++c) values[base + c] += b.row(j)[c];
            ++i;
            ++j;
        }
    }
    return SparseTree::from_sorted(d, std::move(indices), std::move(values));
}

SparseTree interpret(const OpWeights& w, const InterpreterArgs& args, int max_depth) {
    w.validate();
    const int d = static_cast<int>(args.root_filler.size());
    SparseTree out(d);
    if (w.w_left != 0.0) {
        out = add_trees(out, scale_tree(op_left(args.t_left), w.w_left));
    }
    if (w.w_right != 0.0) {
        out = add_trees(out, scale_tree(op_right(args.t_right), w.w_right));
    }
    if (w.w_cons != 0.0) {
        SparseTree cons = op_cons(args.t_cons_left, args.t_cons_right,
                                  args.root_filler, max_depth);
        out = add_trees(out, scale_tree(cons, w.w_cons));
    }
    return out;
}

SparseTree prune_topk(const SparseTree& t, size_t k) {
    if (k < 1) throw Error("prune_topk requires k >= 1");
    if (t.size() <= k) return t;
    const int d = t.dim();
    std::vector<double> norms(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += t.row(i)[c] * t.row(i)[c];
        norms[i] = s;
    }
    // Order by norm descending, smaller index first on ties; entries are
    // already index-sorted so stable partial selection gives the tie-break.
    std::vector<size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&norms](size_t a, size_t b) { return norms[a] > norms[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    indices.reserve(k);
    values.reserve(k * d);
    for (size_t i : order) {
        indices.push_back(t.indices()[i]);
        values.insert(values.end(), t.row(i), t.row(i) + d);
    }
    return SparseTree::from_sorted(d, std::move(indices), std::move(values));
}

}  // namespace sdtm
