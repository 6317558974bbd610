#include "sdtm/sparse_tree.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <numeric>

#include "sdtm/common.hpp"
#include "json.hpp"

namespace sdtm {

SparseTree SparseTree::coalesce(
    int dim, std::vector<std::pair<TreeIndex, std::vector<double>>> entries) {
    for (const auto& [idx, v] : entries) {
        if (idx == 0) throw InvalidAddressError("tree index 0 is not addressable");
        if (static_cast<int>(v.size()) != dim) {
            throw DimMismatchError("entry at index " + std::to_string(idx) +
                                   " has dimension " + std::to_string(v.size()) +
                                   ", expected " + std::to_string(dim));
        }
    }
    // Canonical order (index, then value) makes duplicate summation exactly
    // permutation-invariant despite floating-point non-associativity.
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return std::lexicographical_compare(a.second.begin(), a.second.end(),
                                            b.second.begin(), b.second.end());
    });
    SparseTree out(dim);
    for (auto& [idx, v] : entries) {
        if (!out.indices_.empty() && out.indices_.back() == idx) {
            double* dst = out.values_.data() + (out.indices_.size() - 1) * dim;
            for (int j = 0; j < dim; ++j) dst[j] += v[j];
        } else {
            out.indices_.push_back(idx);
            out.values_.insert(out.values_.end(), v.begin(), v.end());
        }
    }
    return out;
}

SparseTree SparseTree::from_sorted(int dim, std::vector<TreeIndex> indices,
                                   std::vector<double> values) {
    assert(values.size() == indices.size() * static_cast<size_t>(dim));
    assert(std::is_sorted(indices.begin(), indices.end()));
    assert(std::adjacent_find(indices.begin(), indices.end()) == indices.end());
    SparseTree out(dim);
    out.indices_ = std::move(indices);
    out.values_ = std::move(values);
    return out;
}

size_t SparseTree::find(TreeIndex idx) const {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), idx);
    if (it == indices_.end() || *it != idx) return npos;
    return static_cast<size_t>(it - indices_.begin());
}

std::vector<double> SparseTree::value_at(TreeIndex idx) const {
    size_t k = find(idx);
    if (k == npos) return std::vector<double>(dim_, 0.0);
    return std::vector<double>(row(k), row(k) + dim_);
}

SparseTree SparseTree::drop_exact_zeros() const {
    SparseTree out(dim_);
    for (size_t k = 0; k < size(); ++k) {
        const double* r = row(k);
        bool all_zero = true;
        for (int j = 0; j < dim_; ++j) {
            if (r[j] != 0.0) {
                all_zero = false;
                break;
            }
        }
        if (!all_zero) {
            out.indices_.push_back(indices_[k]);
            out.values_.insert(out.values_.end(), r, r + dim_);
        }
    }
    return out;
}

std::string SparseTree::to_jsonl() const {
    nlohmann::json j;
    j["dim"] = dim_;
    auto entries = nlohmann::json::array();
    for (size_t k = 0; k < size(); ++k) {
        auto vals = nlohmann::json::array();
        for (int c = 0; c < dim_; ++c) vals.push_back(row(k)[c]);
        entries.push_back(nlohmann::json::array({indices_[k], vals}));
    }
    j["entries"] = entries;
    return j.dump();
}

SparseTree SparseTree::from_jsonl(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad tree record: ") + e.what());
    }
    if (!j.contains("dim") || !j.contains("entries")) {
        throw DataError("tree record needs \"dim\" and \"entries\"");
    }
    int dim = j["dim"].get<int>();
    std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
    for (const auto& e : j["entries"]) {
        TreeIndex idx = e.at(0).get<TreeIndex>();
        std::vector<double> v = e.at(1).get<std::vector<double>>();
        entries.emplace_back(idx, std::move(v));
    }
    return coalesce(dim, std::move(entries));
}

std::vector<uint8_t> SparseTree::serialize_binary() const {
    std::vector<uint8_t> buf;
    buf.reserve(16 + size() * (8 + 8 * static_cast<size_t>(dim_)));
    auto put_u64 = [&buf](uint64_t v) {
        for (int b = 0; b < 8; ++b) buf.push_back(static_cast<uint8_t>(v >> (8 * b)));
    };
    put_u64(static_cast<uint64_t>(dim_));
    put_u64(size());
    for (size_t k = 0; k < size(); ++k) {
        put_u64(indices_[k]);
        for (int c = 0; c < dim_; ++c) {
            uint64_t bits;
            double d = row(k)[c];
            std::memcpy(&bits, &d, 8);
            put_u64(bits);
        }
    }
    return buf;
}

SparseTree SparseTree::deserialize_binary(const std::vector<uint8_t>& buf) {
    size_t pos = 0;
    auto get_u64 = [&buf, &pos]() {
        if (pos + 8 > buf.size()) throw DataError("truncated tree buffer");
        uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(buf[pos + b]) << (8 * b);
        pos += 8;
        return v;
    };
    int dim = static_cast<int>(get_u64());
    size_t n = get_u64();
    SparseTree out(dim);
    for (size_t k = 0; k < n; ++k) {
        out.indices_.push_back(get_u64());
        for (int c = 0; c < dim; ++c) {
            uint64_t bits = get_u64();
            double d;
            std::memcpy(&d, &bits, 8);
            out.values_.push_back(d);
        }
    }
    return out;
}

}  // namespace sdtm
