#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dfl/autodiff/tensor.hpp"

namespace dfl::ad {

template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward;

  Tensor<Real>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Real>(value.shape());
    return grad;
  }
};

/// Handle to a value in the dynamic computation graph.
template <typename Real>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var leaf(Tensor<Real> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<Real>& value() const { return node_->value; }
  Tensor<Real>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index axis) const { return node_->value.dim(axis); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; allocated as zeros on first access.
  Tensor<Real>& grad() const { return node_->grad_buffer(); }
  void zero_grad() const {
    if (!node_->grad.empty()) node_->grad.fill(Real{0});
  }

  Node<Real>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<Real>>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

/// Thread-local switch; while disabled, ops record no graph edges.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Parents and the backward closure are kept only when
/// grad mode is on and at least one parent requires a gradient.
template <typename Real>
Var<Real> make_result(Tensor<Real> value, std::vector<Var<Real>> parents,
                      std::function<void(Node<Real>&)> backward) {
  bool needs = false;
  if (GradMode::enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  n->leaf = false;
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(backward);
  }
  return Var<Real>(std::move(n));
}

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
/// calls; intermediate gradients are reset at the start of every sweep.
template <typename Real>
void backward(const Var<Real>& root);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace dfl::ad
