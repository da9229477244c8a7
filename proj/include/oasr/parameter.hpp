#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "oasr/tensor.hpp"

namespace oasr {

/// A learnable tensor with its gradient accumulator and Adam moments.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), adam_m(value.shape()), adam_v(value.shape()) {}
};

/// Ordered, name-indexed collection of parameters.
template <class T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.emplace_back(std::move(name), std::move(value));
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  Parameter<T>& at(const std::string& name) { return params_[index_of(name)]; }
  const Parameter<T>& at(const std::string& name) const { return params_[index_of(name)]; }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Value-only copy in another precision (moments and grads start at zero).
  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace oasr
