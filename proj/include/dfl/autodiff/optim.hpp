#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfl/autodiff/parameters.hpp"

namespace dfl::ad {

enum class OptimizerKind { adam, radam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators and step counter for one parameter list.
template <typename Real>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor<Real>> first_moment;
  std::vector<Tensor<Real>> second_moment;
};

/// Length of the approximated simple moving average in RAdam; the
/// rectified update is used only while this exceeds 4.
double radam_rho(std::int64_t step, double beta2);
/// Variance rectification factor r_t, or 0 when the momentum-only branch applies.
double radam_rectification(std::int64_t step, double beta2);

/// Adam and RAdam over the trainable entries of a ParameterStore.
template <typename Real>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamHyper hyper, std::vector<NamedTensor<Real>> params);

  /// Applies one update with the gradients currently held by the parameters.
  void step(double lr);

  const OptimizerState<Real>& state() const noexcept { return state_; }
  OptimizerState<Real>& state() noexcept { return state_; }
  const std::vector<NamedTensor<Real>>& parameters() const noexcept { return params_; }

 private:
  std::vector<NamedTensor<Real>> params_;
  OptimizerState<Real> state_;
};

/// Linear warmup from 0 to base_lr, then base_lr * decay^(epochs since warmup).
struct LrSchedule {
  double base_lr = 1e-3;
  double decay = 1.0;
  std::int64_t warmup_steps = 0;
  std::int64_t steps_per_epoch = 1;

  double lr(std::int64_t step) const;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace dfl::ad
