#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdtm/tensor.hpp"

namespace sdtm {

// Named parameter tensors with a stable registration order. Gradient buffers
// are separate same-shaped tensors so that batch workers can each own one.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors_.count(name) > 0; }
    const std::vector<std::string>& order() const { return order_; }
    size_t count() const { return order_.size(); }

    size_t total_elements() const;

    using GradBuffer = std::map<std::string, Tensor>;
    GradBuffer make_grad_buffer() const;

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor> tensors_;
};

}  // namespace sdtm
