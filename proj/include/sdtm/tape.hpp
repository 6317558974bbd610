#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sdtm/tensor.hpp"

namespace sdtm {

// Handle into a Tape. Plain index; tapes are single-threaded and append-only.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense tensors. Forward ops append nodes; backward
// visits nodes once in reverse creation order, which is a valid reverse
// topological order because parents always precede children. A tape is
// single-use: backward() consumes it.
class Tape {
public:
    // Leaf with gradient routed into `sink` (accumulated, not overwritten).
    Value leaf(Tensor data, Tensor* sink);
    // Leaf that participates in gradients but keeps them on-tape only.
    Value leaf(Tensor data);
    // Non-differentiable input.
    Value constant(Tensor data);

    const Tensor& data(Value v) const { return nodes_[v.id].data; }
    // Gradient of `v` after backward(); throws if none was recorded.
    const Tensor& grad(Value v) const;

    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value add_rowvec(Value a, Value b);  // [r,c] + [c] or [1,c]
    Value mul(Value a, Value b);         // elementwise
    Value scale_const(Value a, double c);
    Value scale(Value a, Value s);       // s has a single element
    Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false);
    Value transpose(Value a);
    Value reshape(Value a, std::vector<size_t> shape);
    Value softmax_rows(Value a);
    Value layer_norm_rows(Value a, Value gain, Value bias, double eps = 1e-5);
    Value gelu(Value a);
    Value relu(Value a);
    Value concat_cols(Value a, Value b);
    Value concat_rows(const std::vector<Value>& parts);
    Value slice_cols(Value a, size_t start, size_t len);
    Value slice_rows(Value a, size_t start, size_t len);
    Value gather_rows(Value a, std::vector<size_t> rows);
    // out[dest[i]] += a[i]; `dest` values < out_rows. This is coalescing:
    // several source rows may share a destination.
    Value scatter_add_rows(Value a, std::vector<size_t> dest, size_t out_rows);
    Value sum_all(Value a);
    // Mean cross-entropy over rows of logits, max-subtraction stabilized.
    Value cross_entropy_mean(Value logits, std::vector<int> labels);
    // Embedding lookup is a row gather on the (usually frozen) table.
    Value embedding_lookup(Value table, const std::vector<int>& ids);

    // out = sum_m weights[m] * parts[m], all parts same shape; gradients
    // flow to both weights and parts. weights entries are scalar Values.
    Value weighted_sum(const std::vector<Value>& parts, const std::vector<Value>& weights);

    void backward(Value root);

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor data;
        Tensor grad;  // allocated lazily during backward
        bool needs_grad = false;
        bool has_grad = false;
        std::function<void(Tape&, int)> back;
        Tensor* sink = nullptr;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    int push(Tensor data, bool needs_grad, std::function<void(Tape&, int)> back);
    Tensor& grad_accum(int id);
    bool needs(Value v) const { return nodes_[v.id].needs_grad; }
    void check(Value v) const;
};

}  // namespace sdtm
