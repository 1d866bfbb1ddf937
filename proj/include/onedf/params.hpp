#pragma once

#include <string>
#include <utility>
#include <vector>

#include "onedf/tensor.hpp"

namespace onedf {

/// Ordered set of named learnable tensors. Registration order is the
/// canonical order for optimizer state and checkpoint layout; names are
/// unique dotted paths.
template <typename S>
class ParamRegistryT {
 public:
  TensorPtrT<S> add(const std::string& name, std::vector<int> dims) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    auto t = make_tensor<S>(std::move(dims), /*requires_grad=*/true);
    items_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, TensorPtrT<S>>>& items() const { return items_; }

  TensorPtrT<S> find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    return nullptr;
  }

  void zero_grads() {
    for (auto& [n, t] : items_) t->zero_grad();
  }

  int64_t total_size() const {
    int64_t s = 0;
    for (const auto& [n, t] : items_) s += t->size();
    return s;
  }

 private:
  std::vector<std::pair<std::string, TensorPtrT<S>>> items_;
};

using ParamRegistry = ParamRegistryT<float>;

}  // namespace onedf
