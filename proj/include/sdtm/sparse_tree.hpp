#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "sdtm/tree_index.hpp"

namespace sdtm {

// A binary tree in COO form: sorted unique Gorn addresses paired with value
// vectors of a shared width. Immutable after construction; all operations
// return new trees.
class SparseTree {
public:
    SparseTree() = default;
    explicit SparseTree(int dim) : dim_(dim) {}

    // Coalesces: duplicate indices are summed, entries sorted by index.
    static SparseTree coalesce(int dim,
                               std::vector<std::pair<TreeIndex, std::vector<double>>> entries);

    // Entries must already be sorted and unique (checked in debug only).
    static SparseTree from_sorted(int dim, std::vector<TreeIndex> indices,
                                  std::vector<double> values);

    int dim() const { return dim_; }
    size_t size() const { return indices_.size(); }
    bool empty() const { return indices_.empty(); }

    const std::vector<TreeIndex>& indices() const { return indices_; }
    // Row-major [size x dim] value storage.
    const std::vector<double>& values() const { return values_; }

    const double* row(size_t k) const { return values_.data() + k * dim_; }

    // Position of `idx` in the sorted index list, or npos.
    static constexpr size_t npos = static_cast<size_t>(-1);
    size_t find(TreeIndex idx) const;

    // Value at `idx`; zeros if absent.
    std::vector<double> value_at(TreeIndex idx) const;

    bool operator==(const SparseTree& other) const {
        return dim_ == other.dim_ && indices_ == other.indices_ &&
               values_ == other.values_;
    }

    // Removes entries whose value vector is exactly zero. Pruning and
    // null-decoding are the only other paths that drop nodes.
    SparseTree drop_exact_zeros() const;

    // JSON-lines record: {"entries": [[index, [floats]] ...], "dim": d}
    std::string to_jsonl() const;
    static SparseTree from_jsonl(const std::string& line);

    // Length-prefixed little-endian binary form; size is linear in entry
    // count: 16-byte header + size * (8 + 8*dim) bytes.
    std::vector<uint8_t> serialize_binary() const;
    static SparseTree deserialize_binary(const std::vector<uint8_t>& buf);

private:
    int dim_ = 0;
    std::vector<TreeIndex> indices_;
    std::vector<double> values_;
};

}  // namespace sdtm
