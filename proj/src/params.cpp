#include "sdtm/params.hpp"

#include "sdtm/common.hpp"

namespace sdtm {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (tensors_.count(name)) throw Error("duplicate parameter: " + name);
    order_.push_back(name);
    return tensors_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

size_t ParamStore::total_elements() const {
    size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.numel();
    return n;
}

ParamStore::GradBuffer ParamStore::make_grad_buffer() const {
    GradBuffer g;
    for (const auto& [name, t] : tensors_) g.emplace(name, Tensor::zeros(t.shape));
    return g;
}

}  // namespace sdtm
