#pragma once

#include <string>
#include <vector>

#include "dfl/autodiff/graph.hpp"

namespace dfl::ad {

template <typename Real>
struct NamedTensor {
  std::string name;
  Var<Real> var;
  bool trainable = true;  // false for running statistics and other buffers
};

/// Owns every named tensor of a network in registration order.
template <typename Real>
class ParameterStore {
 public:
  Var<Real> add_parameter(const std::string& name, Tensor<Real> init);
  Var<Real> add_buffer(const std::string& name, Tensor<Real> init);

  const std::vector<NamedTensor<Real>>& entries() const noexcept { return entries_; }
  std::vector<NamedTensor<Real>> trainable() const;
  const NamedTensor<Real>* find(const std::string& name) const;

  void zero_grad() const;
  /// Stops gradient tracking for every parameter (frozen networks).
  void freeze() const;
  Index parameter_count() const;

 private:
  std::vector<NamedTensor<Real>> entries_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace dfl::ad
