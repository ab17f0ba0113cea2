#include "dfl/autodiff/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dfl::ad {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "radam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "radam") return OptimizerKind::radam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

double radam_rho(std::int64_t step, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(step));
  return rho_inf - 2.0 * static_cast<double>(step) * b2t / (1.0 - b2t);
}

double radam_rectification(std::int64_t step, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double rho = radam_rho(step, beta2);
  if (rho <= 4.0) return 0.0;
  return std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
}

template <typename Real>
Optimizer<Real>::Optimizer(OptimizerKind kind, AdamHyper hyper, std::vector<NamedTensor<Real>> params)
    : params_(std::move(params)) {
  state_.kind = kind;
  state_.hyper = hyper;
  for (const auto& p : params_) {
    state_.names.push_back(p.name);
    state_.first_moment.emplace_back(p.var.shape());
    state_.second_moment.emplace_back(p.var.shape());
  }
}

template <typename Real>
void Optimizer<Real>::step(double lr) {
  const auto& h = state_.hyper;
  const std::int64_t t = ++state_.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const double rect = state_.kind == OptimizerKind::radam ? radam_rectification(t, h.beta2) : 1.0;
  const bool adaptive = state_.kind == OptimizerKind::adam || rect > 0.0;

  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<Real> p = params_[i].var;
    if (!p.has_grad()) continue;
    Tensor<Real>& value = p.value();
    const Tensor<Real>& g = p.grad();
    Tensor<Real>& m = state_.first_moment[i];
    Tensor<Real>& v = state_.second_moment[i];
    for (Index k = 0; k < value.size(); ++k) {
      const double gk = g[k];
      const double mk = h.beta1 * m[k] + (1.0 - h.beta1) * gk;
      const double vk = h.beta2 * v[k] + (1.0 - h.beta2) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      const double m_hat = mk / bc1;
      double update;
      if (adaptive) {
        const double v_hat = vk / bc2;
        update = rect * m_hat / (std::sqrt(v_hat) + h.eps);
      } else {
        update = m_hat;
      }
      value[k] = static_cast<Real>(value[k] - lr * update);
    }
  }
}

double LrSchedule::lr(std::int64_t step) const {
  if (step < 0) throw std::invalid_argument("LrSchedule: negative step");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const std::int64_t per_epoch = steps_per_epoch > 0 ? steps_per_epoch : 1;
  const auto epochs = static_cast<double>((step - warmup_steps) / per_epoch);
  return base_lr * std::pow(decay, epochs);
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace dfl::ad
