#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sdtm/common.hpp"

namespace sdtm {

// Dense row-major tensor of rank 1..3. Rank-2 [rows x cols] is the workhorse;
// rank-1 behaves as a single row where an op needs a matrix.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), 0.0);
    }
    Tensor(std::vector<size_t> s, std::vector<double> data)
        : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != numel_of(shape)) throw ShapeError("tensor data/shape mismatch");
    }

    static size_t numel_of(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    static Tensor zeros(std::vector<size_t> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double x) { return Tensor({1}, {x}); }
    static Tensor row(std::vector<double> data) {
        size_t n = data.size();
        return Tensor({1, n}, std::move(data));
    }
    static Tensor vec(std::vector<double> data) {
        size_t n = data.size();
        return Tensor({n}, std::move(data));
    }

    size_t numel() const { return v.size(); }
    size_t rank() const { return shape.size(); }

    // Rank-1 tensors count as one row.
    size_t rows() const {
        if (rank() == 1) return 1;
        if (rank() == 2) return shape[0];
        throw ShapeError("rows() needs rank <= 2, got rank " + std::to_string(rank()));
    }
    size_t cols() const {
        if (rank() == 1) return shape[0];
        if (rank() == 2) return shape[1];
        throw ShapeError("cols() needs rank <= 2, got rank " + std::to_string(rank()));
    }

    double* rowptr(size_t r) { return v.data() + r * cols(); }
    const double* rowptr(size_t r) const { return v.data() + r * cols(); }

    double& at(size_t r, size_t c) { return v[r * cols() + c]; }
    double at(size_t r, size_t c) const { return v[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            s += std::to_string(shape[i]);
            if (i + 1 < shape.size()) s += "x";
        }
        return s + "]";
    }
};

}  // namespace sdtm
