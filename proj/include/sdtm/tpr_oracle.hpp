#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sdtm/sparse_tree.hpp"
#include "sdtm/tree_ops.hpp"

namespace sdtm {

// Dense tensor product representation with one-hot roles: T[j][i] is the
// j-th filler coordinate bound to role (tree position) i. Test fixture for
// verifying that the sparse path is exactly a TPR with standard-basis roles;
// never on the training path.
class DenseTPR {
public:
    DenseTPR(int filler_dim, int max_depth);

    int filler_dim() const { return d_f_; }
    size_t role_dim() const { return d_r_; }
    int max_depth() const { return max_depth_; }

    // Column-major access: column i holds the filler bound to role i.
    double at(int j, TreeIndex i) const { return m_[i * d_f_ + j]; }
    double& at(int j, TreeIndex i) { return m_[i * d_f_ + j]; }
    const std::vector<double>& raw() const { return m_; }

    static DenseTPR from_raw(int filler_dim, int max_depth, std::vector<double> raw);

    static DenseTPR bind_all(
        const std::vector<std::pair<TreeIndex, std::vector<double>>>& entries,
        int filler_dim, int max_depth);

    // f_j = T r+_j; the dual basis equals the one-hot basis itself.
    std::vector<double> unbind(TreeIndex i) const;

    static DenseTPR from_sparse(const SparseTree& t, int max_depth);
    SparseTree to_sparse() const;  // nonzero columns only

    bool all_zero() const;

private:
    int d_f_;
    int max_depth_;
    size_t d_r_;  // 2^(max_depth+1)
    std::vector<double> m_;
};

// Role-space linear maps applied by explicit matrix multiplication, mirroring
// the precomputed transformations of the dense formulation.
DenseTPR dense_left(const DenseTPR& t);
DenseTPR dense_right(const DenseTPR& t);
DenseTPR dense_cons(const DenseTPR& l, const DenseTPR& r,
                    const std::optional<std::vector<double>>& root = std::nullopt);

DenseTPR dense_scale(const DenseTPR& t, double c);
DenseTPR dense_add(const DenseTPR& a, const DenseTPR& b);

// Eq.-1 on the dense side.
DenseTPR dense_interpret(const OpWeights& w, const DenseTPR& t_left,
                         const DenseTPR& t_right, const DenseTPR& t_cons_left,
                         const DenseTPR& t_cons_right,
                         const std::vector<double>& root_filler);

// Max absolute deviation between dense and sparse results of all three ops
// and the blended step, over `trials` random trees. Used by `tpr check`.
struct TprCheckReport {
    double max_abs_deviation = 0.0;
    int trials = 0;
    int depth = 0;
    int dim = 0;
};

TprCheckReport run_tpr_check(int depth, int dim, int trials, uint64_t seed);
std::string format_tpr_report(const TprCheckReport& r);

}  // namespace sdtm
