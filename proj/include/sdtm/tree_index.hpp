#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "sdtm/common.hpp"

namespace sdtm {

// Integer Gorn address. The binary digits of the index, read from the least
// significant bit upward, spell the root-to-node branch path (0 = left,
// 1 = right); the most significant 1 is a marker, not a branch. Addressing
// starts at 1 so that leading zeros are unambiguous (010 vs 10).
using TreeIndex = uint64_t;

enum class Branch : uint8_t { Left = 0, Right = 1 };

using Path = std::vector<Branch>;

constexpr int kMaxAddressDepth = 62;
constexpr int kDefaultMaxDepth = 16;

// depth(1) = 0, depth(2) = depth(3) = 1, ...
inline int depth_of(TreeIndex i) {
    if (i == 0) throw InvalidAddressError("tree index 0 is not addressable");
    return std::bit_width(i) - 1;
}

inline Path decode_address(TreeIndex i) {
    if (i == 0) throw InvalidAddressError("tree index 0 is not addressable");
    Path path;
    while (i > 1) {
        path.push_back((i & 1) ? Branch::Right : Branch::Left);
        i >>= 1;
    }
    return path;
}

inline TreeIndex encode_address(const Path& path, int max_depth = kMaxAddressDepth) {
    if (static_cast<int>(path.size()) > max_depth) {
        throw DepthOverflowError(
            "path of length " + std::to_string(path.size()) +
                " exceeds max depth " + std::to_string(max_depth),
            0);
    }
    TreeIndex idx = 1;
    // The first path step must end up in the least significant bit, so the
    // fold consumes the path from deepest step to shallowest.
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        idx = (idx << 1) | static_cast<uint64_t>(*it);
    }
    return idx;
}

// Index of the child reached by taking `b` from node `i`. With LSB-first
// paths, descending appends a branch bit just below the marker.
inline TreeIndex child_index(TreeIndex i, Branch b) {
    int d = depth_of(i);
    TreeIndex marker = TreeIndex{1} << d;
    TreeIndex rest = i ^ marker;
    TreeIndex bit = static_cast<TreeIndex>(b) << d;
    return (marker << 1) | bit | rest;
}

// Index of the structural parent (strips the deepest branch step).
inline TreeIndex parent_index(TreeIndex i) {
    int d = depth_of(i);
    if (d == 0) throw InvalidAddressError("root has no parent");
    TreeIndex low = i & ((TreeIndex{1} << (d - 1)) - 1);
    return (TreeIndex{1} << (d - 1)) | low;
}

inline std::string path_to_string(const Path& p) {
    std::string s = "[";
    for (size_t k = 0; k < p.size(); ++k) {
        s += (p[k] == Branch::Left) ? "L" : "R";
        if (k + 1 < p.size()) s += ",";
    }
    s += "]";
    return s;
}

}  // namespace sdtm
