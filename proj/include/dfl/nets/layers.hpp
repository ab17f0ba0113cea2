#pragma once

#include <cmath>
#include <random>
#include <string>

#include "dfl/autodiff/ops.hpp"
#include "dfl/autodiff/parameters.hpp"

// Parameterized building blocks registered in a ParameterStore. Each layer
// holds Var handles that alias the store's entries.
namespace dfl::nets {

using ad::ConvSpec;
using ad::Index;
using ad::ParameterStore;
using ad::Shape;
using ad::Tensor;
using ad::Var;

template <typename Real>
Tensor<Real> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
  return t;
}

template <typename Real>
struct Conv2d {
  Var<Real> weight;
  Var<Real> bias;  // undefined when the layer has no bias
  ConvSpec spec;

  /// He-normal initialization; `zero_init` leaves every weight at 0.
  static Conv2d make(ParameterStore<Real>& store, const std::string& name, Index in_channels, Index out_channels,
                     Index kernel_f, Index kernel_t, ConvSpec spec, std::mt19937_64& rng, bool with_bias,
                     bool zero_init = false) {
    Conv2d c;
    const Shape shape{out_channels, in_channels, kernel_f, kernel_t};
    const double fan_in = static_cast<double>(in_channels * kernel_f * kernel_t);
    c.weight = store.add_parameter(name + ".weight", zero_init ? Tensor<Real>(shape)
                                                               : normal_tensor<Real>(shape, std::sqrt(2.0 / fan_in), rng));
    if (with_bias) c.bias = store.add_parameter(name + ".bias", Tensor<Real>({out_channels}));
    c.spec = spec;
    return c;
  }

  Var<Real> operator()(const Var<Real>& x) const { return ad::conv2d(x, weight, bias, spec); }
};

template <typename Real>
struct BatchNorm2d {
  Var<Real> gamma;
  Var<Real> beta;
  Var<Real> running_mean;
  Var<Real> running_var;

  static BatchNorm2d make(ParameterStore<Real>& store, const std::string& name, Index channels) {
    BatchNorm2d b;
    b.gamma = store.add_parameter(name + ".gamma", Tensor<Real>({channels}, Real(1)));
    b.beta = store.add_parameter(name + ".beta", Tensor<Real>({channels}));
    b.running_mean = store.add_buffer(name + ".running_mean", Tensor<Real>({channels}));
    b.running_var = store.add_buffer(name + ".running_var", Tensor<Real>({channels}, Real(1)));
    return b;
  }

  Var<Real> operator()(const Var<Real>& x, bool train) const {
    Var<Real> mean = running_mean, var = running_var;
    return ad::batch_norm(x, gamma, beta, mean.value(), var.value(), train);
  }
};

/// y = a * BN(x) + b * x with learnable scalars a (init 1) and b (init 0).
template <typename Real>
struct AdaptiveBatchNorm {
  BatchNorm2d<Real> norm;
  Var<Real> a;
  Var<Real> b;

  static AdaptiveBatchNorm make(ParameterStore<Real>& store, const std::string& name, Index channels) {
    AdaptiveBatchNorm n;
    n.norm = BatchNorm2d<Real>::make(store, name + ".bn", channels);
    n.a = store.add_parameter(name + ".a", Tensor<Real>({1}, Real(1)));
    n.b = store.add_parameter(name + ".b", Tensor<Real>({1}, Real(0)));
    return n;
  }

  Var<Real> operator()(const Var<Real>& x, bool train) const {
    return ad::add(ad::scale_by(norm(x, train), a), ad::scale_by(x, b));
  }
};

template <typename Real>
struct Linear {
  Var<Real> weight;  // (out, in)
  Var<Real> bias;

  static Linear make(ParameterStore<Real>& store, const std::string& name, Index in_features, Index out_features,
                     std::mt19937_64& rng, double gain = 1.0) {
    Linear l;
    l.weight = store.add_parameter(
        name + ".weight",
        normal_tensor<Real>({out_features, in_features}, gain / std::sqrt(static_cast<double>(in_features)), rng));
    l.bias = store.add_parameter(name + ".bias", Tensor<Real>({out_features}));
    return l;
  }

  Var<Real> operator()(const Var<Real>& x) const { return ad::linear(x, weight, bias); }
};

}  // namespace dfl::nets
