#pragma once

#include "dfl/autodiff/graph.hpp"

namespace dfl::ad::detail {

/// Gradient buffer of parent i, or nullptr when that parent is frozen.
template <typename Real>
inline Tensor<Real>* grad_target(Node<Real>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

template <typename Real>
inline Real stable_sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

/// Sum of f(i) for i in [0, n) in double, with a fixed 8-lane order. Unlike
/// Eigen's reductions the result does not depend on buffer alignment.
template <typename F>
inline double lane_sum(Index n, F f) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Index i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(f(i + j));
  for (; i < n; ++i) acc[0] += static_cast<double>(f(i));
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void require_rank(const Shape& s, Index rank, const char* op) {
  if (static_cast<Index>(s.size()) != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
}

}  // namespace dfl::ad::detail

#define DFL_INSTANTIATE_FOR_REALS(MACRO) \
  MACRO(float)                           \
  MACRO(double)
