#include "dfl/autodiff/parameters.hpp"

#include <stdexcept>

namespace dfl::ad {

template <typename Real>
Var<Real> ParameterStore<Real>::add_parameter(const std::string& name, Tensor<Real> init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.push_back({name, Var<Real>::leaf(std::move(init), true), true});
  return entries_.back().var;
}

template <typename Real>
Var<Real> ParameterStore<Real>::add_buffer(const std::string& name, Tensor<Real> init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.push_back({name, Var<Real>::leaf(std::move(init), false), false});
  return entries_.back().var;
}

template <typename Real>
std::vector<NamedTensor<Real>> ParameterStore<Real>::trainable() const {
  std::vector<NamedTensor<Real>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e);
  return out;
}

template <typename Real>
const NamedTensor<Real>* ParameterStore<Real>::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename Real>
void ParameterStore<Real>::zero_grad() const {
  for (const auto& e : entries_) e.var.zero_grad();
}

template <typename Real>
void ParameterStore<Real>::freeze() const {
  for (const auto& e : entries_) {
    Var<Real> v = e.var;
    v.set_requires_grad(false);
  }
}

template <typename Real>
Index ParameterStore<Real>::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.var.value().size();
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace dfl::ad
