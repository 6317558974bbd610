#include "sdtm/tpr_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "sdtm/common.hpp"

namespace sdtm {

namespace {

constexpr int kOracleMaxDepth = 10;

void check_oracle_depth(int max_depth) {
    if (max_depth < 0 || max_depth > kOracleMaxDepth) {
        throw Error("dense oracle supports max depth 0..10, got " +
                    std::to_string(max_depth));
    }
}

// Dense role-space transformation: out = T * M with M given row-major
// [d_r x d_r], M[src][dst].
std::vector<double> apply_role_matrix(const DenseTPR& t, const std::vector<double>& m) {
    const size_t d_r = t.role_dim();
    const int d_f = t.filler_dim();
    std::vector<double> out(d_r * d_f, 0.0);
    for (size_t src = 0; src < d_r; ++src) {
        for (size_t dst = 0; dst < d_r; ++dst) {
            double w = m[src * d_r + dst];
            if (w == 0.0) continue;
            for (int j = 0; j < d_f; ++j) {
                out[dst * d_f + j] += w * t.at(j, src);
            }
        }
    }
    return out;
}

}  // namespace

DenseTPR::DenseTPR(int filler_dim, int max_depth)
    : d_f_(filler_dim), max_depth_(max_depth) {
    check_oracle_depth(max_depth);
    d_r_ = size_t{1} << (max_depth + 1);
    m_.assign(d_r_ * d_f_, 0.0);
}

DenseTPR DenseTPR::from_raw(int filler_dim, int max_depth, std::vector<double> raw) {
    DenseTPR out(filler_dim, max_depth);
    if (raw.size() != out.m_.size()) throw DimMismatchError("raw TPR size mismatch");
    out.m_ = std::move(raw);
    return out;
}

DenseTPR DenseTPR::bind_all(
    const std::vector<std::pair<TreeIndex, std::vector<double>>>& entries,
    int filler_dim, int max_depth) {
    DenseTPR t(filler_dim, max_depth);
    for (const auto& [idx, f] : entries) {
        if (idx >= t.d_r_) {
            throw Error("role index " + std::to_string(idx) +
                        " outside role space of size " + std::to_string(t.d_r_));
        }
        if (static_cast<int>(f.size()) != filler_dim) {
            throw DimMismatchError("filler dimension mismatch in bind_all");
        }
        // T += f (x) r_idx ; with one-hot roles the outer product fills
        // exactly column idx.
        for (int j = 0; j < filler_dim; ++j) t.at(j, idx) += f[j];
    }
    return t;
}

std::vector<double> DenseTPR::unbind(TreeIndex i) const {
    if (i >= d_r_) {
        throw Error("role index " + std::to_string(i) + " outside role space");
    }
    std::vector<double> f(d_f_);
    for (int j = 0; j < d_f_; ++j) f[j] = at(j, i);
    return f;
}

DenseTPR DenseTPR::from_sparse(const SparseTree& t, int max_depth) {
    std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
    for (size_t k = 0; k < t.size(); ++k) {
        entries.emplace_back(t.indices()[k],
                             std::vector<double>(t.row(k), t.row(k) + t.dim()));
    }
    return bind_all(entries, t.dim(), max_depth);
}

SparseTree DenseTPR::to_sparse() const {
    std::vector<TreeIndex> indices;
    std::vector<double> values;
    for (size_t i = 1; i < d_r_; ++i) {
        bool nonzero = false;
        for (int j = 0; j < d_f_; ++j) {
            if (at(j, i) != 0.0) {
                nonzero = true;
                break;
            }
        }
        if (nonzero) {
            indices.push_back(i);
            for (int j = 0; j < d_f_; ++j) values.push_back(at(j, i));
        }
    }
    return SparseTree::from_sorted(d_f_, std::move(indices), std::move(values));
}

bool DenseTPR::all_zero() const {
    return std::all_of(m_.begin(), m_.end(), [](double v) { return v == 0.0; });
}

DenseTPR dense_left(const DenseTPR& t) {
    const size_t d_r = t.role_dim();
    std::vector<double> m(d_r * d_r, 0.0);
    for (size_t i = 1; 2 * i < d_r; ++i) m[(2 * i) * d_r + i] = 1.0;
    return DenseTPR::from_raw(t.filler_dim(), t.max_depth(), apply_role_matrix(t, m));
}

DenseTPR dense_right(const DenseTPR& t) {
    const size_t d_r = t.role_dim();
    std::vector<double> m(d_r * d_r, 0.0);
    for (size_t i = 1; 2 * i + 1 < d_r; ++i) m[(2 * i + 1) * d_r + i] = 1.0;
    return DenseTPR::from_raw(t.filler_dim(), t.max_depth(), apply_role_matrix(t, m));
}

DenseTPR dense_cons(const DenseTPR& l, const DenseTPR& r,
                    const std::optional<std::vector<double>>& root) {
    const size_t d_r = l.role_dim();
    const int d_f = l.filler_dim();
    if (r.role_dim() != d_r || r.filler_dim() != d_f) {
        throw DimMismatchError("cons arguments disagree on TPR shape");
    }
    auto check_overflow = [&](const DenseTPR& t, bool right_arg) {
        for (size_t i = d_r / 2; i < d_r; ++i) {
            for (int j = 0; j < d_f; ++j) {
                if (t.at(j, i) != 0.0) {
                    throw DepthOverflowError(
                        "cons would shift role " + std::to_string(i) +
                            " outside the role space",
                        i);
                }
            }
        }
        (void)right_arg;
    };
    check_overflow(l, false);
    check_overflow(r, true);

    std::vector<double> ml(d_r * d_r, 0.0), mr(d_r * d_r, 0.0);
    for (size_t i = 1; 2 * i < d_r; ++i) ml[i * d_r + 2 * i] = 1.0;
    for (size_t i = 1; 2 * i + 1 < d_r; ++i) mr[i * d_r + 2 * i + 1] = 1.0;
    auto out = apply_role_matrix(l, ml);
    auto rshift = apply_role_matrix(r, mr);
    for (size_t i = 0; i < out.size(); ++i) out[i] += rshift[i];
    DenseTPR result = DenseTPR::from_raw(l.filler_dim(), l.max_depth(), out);
    if (root) {
        if (static_cast<int>(root->size()) != d_f) {
            throw DimMismatchError("root filler dimension mismatch");
        }
        for (int j = 0; j < d_f; ++j) result.at(j, 1) += (*root)[j];
    }
    return result;
}

DenseTPR dense_scale(const DenseTPR& t, double c) {
    std::vector<double> raw = t.raw();
    for (double& v : raw) v *= c;
    return DenseTPR::from_raw(t.filler_dim(), t.max_depth(), std::move(raw));
}

DenseTPR dense_add(const DenseTPR& a, const DenseTPR& b) {
    if (a.role_dim() != b.role_dim() || a.filler_dim() != b.filler_dim()) {
        throw DimMismatchError("cannot add TPRs of different shapes");
    }
    std::vector<double> raw = a.raw();
    for (size_t i = 0; i < raw.size(); ++i) raw[i] += b.raw()[i];
    return DenseTPR::from_raw(a.filler_dim(), a.max_depth(), std::move(raw));
}

DenseTPR dense_interpret(const OpWeights& w, const DenseTPR& t_left,
                         const DenseTPR& t_right, const DenseTPR& t_cons_left,
                         const DenseTPR& t_cons_right,
                         const std::vector<double>& root_filler) {
    w.validate();
    DenseTPR out(t_left.filler_dim(), t_left.max_depth());
    out = dense_add(out, dense_scale(dense_left(t_left), w.w_left));
    out = dense_add(out, dense_scale(dense_right(t_right), w.w_right));
    out = dense_add(
        out, dense_scale(dense_cons(t_cons_left, t_cons_right, root_filler), w.w_cons));
    return out;
}

namespace {

SparseTree random_tree_sparse(int depth, int dim, Rng& rng, int max_depth) {
    std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
    std::function<void(TreeIndex, int)> grow = [&](TreeIndex idx, int remaining) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        entries.emplace_back(idx, std::move(v));
        if (remaining == 0) return;
        double roll = rng.uniform();
        if (roll < 0.55) grow(child_index(idx, Branch::Left), remaining - 1);
        roll = rng.uniform();
        if (roll < 0.55) grow(child_index(idx, Branch::Right), remaining - 1);
    };
    grow(1, depth);
    (void)max_depth;
    return SparseTree::coalesce(dim, std::move(entries));
}

double max_abs_diff(const DenseTPR& a, const SparseTree& b, int max_depth) {
    DenseTPR bd = DenseTPR::from_sparse(b, max_depth);
    double worst = 0.0;
    for (size_t i = 0; i < a.raw().size(); ++i) {
        worst = std::max(worst, std::abs(a.raw()[i] - bd.raw()[i]));
    }
    return worst;
}

}  // namespace

TprCheckReport run_tpr_check(int depth, int dim, int trials, uint64_t seed) {
    check_oracle_depth(depth + 1);
    Rng rng(seed);
    TprCheckReport report;
    report.trials = trials;
    report.depth = depth;
    report.dim = dim;
    const int oracle_depth = depth + 1;  // cons shifts one level down
    for (int t = 0; t < trials; ++t) {
        SparseTree a = random_tree_sparse(depth, dim, rng, oracle_depth);
        SparseTree b = random_tree_sparse(depth, dim, rng, oracle_depth);
        DenseTPR da = DenseTPR::from_sparse(a, oracle_depth);
        DenseTPR db = DenseTPR::from_sparse(b, oracle_depth);

        auto track = [&](const DenseTPR& dense, const SparseTree& sparse) {
            report.max_abs_deviation = std::max(
                report.max_abs_deviation, max_abs_diff(dense, sparse, oracle_depth));
        };
        track(dense_left(da), op_left(a));
        track(dense_right(da), op_right(a));
        std::vector<double> s(dim);
        for (double& x : s) x = rng.normal();
        track(dense_cons(da, db, s), op_cons(a, b, s, oracle_depth));

        double u = rng.uniform(), v = rng.uniform();
        double lo = std::min(u, v), hi = std::max(u, v);
        OpWeights w{lo, hi - lo, 1.0 - hi};
        InterpreterArgs args{a, a, a, b, s};
        track(dense_interpret(w, da, da, da, db, s), interpret(w, args, oracle_depth));
    }
    return report;
}

std::string format_tpr_report(const TprCheckReport& r) {
    std::ostringstream os;
    os << "tpr check: depth=" << r.depth << " dim=" << r.dim
       << " trials=" << r.trials;
    os.setf(std::ios::scientific);
    os.precision(3);
    os << " max_abs_deviation=" << r.max_abs_deviation;
    return os.str();
}

}  // namespace sdtm
