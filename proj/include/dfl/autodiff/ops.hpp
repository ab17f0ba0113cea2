#pragma once

#include <vector>

#include "dfl/autodiff/graph.hpp"

// Differentiable primitives. Every op returns a new Var and, when any input
// requires a gradient, records a backward closure on the result node.
namespace dfl::ad {

// ---- elementwise -----------------------------------------------------------

template <typename Real> Var<Real> add(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> sub(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> mul(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> scale(const Var<Real>& a, Real factor);
template <typename Real> Var<Real> add_scalar(const Var<Real>& a, Real offset);
/// y = s * x for a learnable one-element s.
template <typename Real> Var<Real> scale_by(const Var<Real>& x, const Var<Real>& s);

template <typename Real> Var<Real> relu(const Var<Real>& x);
template <typename Real> Var<Real> leaky_relu(const Var<Real>& x, Real slope);
template <typename Real> Var<Real> sigmoid(const Var<Real>& x);
/// x * sigmoid(x)
template <typename Real> Var<Real> swish(const Var<Real>& x);
template <typename Real> Var<Real> log(const Var<Real>& x);
template <typename Real> Var<Real> exp(const Var<Real>& x);
/// max(x, floor); gradient is zero where the floor is active.
template <typename Real> Var<Real> clamp_min(const Var<Real>& x, Real floor);

// ---- reductions ------------------------------------------------------------

template <typename Real> Var<Real> sum(const Var<Real>& x);
/// Entrywise L1 distance ||a - b||_{1,1}. Subgradient of |.| at 0 is 0.
template <typename Real> Var<Real> l1_distance(const Var<Real>& a, const Var<Real>& b);

// ---- shape -----------------------------------------------------------------

template <typename Real> Var<Real> reshape(const Var<Real>& x, Shape shape);
/// (N, A, B) -> (N, B, A)
template <typename Real> Var<Real> transpose_last2(const Var<Real>& x);
/// Nearest-neighbour upsampling of an (N, C, F, T) map.
template <typename Real> Var<Real> upsample_nearest(const Var<Real>& x, Index factor_f, Index factor_t);

// ---- convolution, dense, normalization -------------------------------------

struct ConvSpec {
  Index stride_f = 1;
  Index stride_t = 1;
  Index dilation_f = 1;
  Index dilation_t = 1;
  Index pad_f = 0;
  Index pad_t = 0;

  /// Zero padding that keeps the spatial size at stride 1.
  static ConvSpec same(Index kernel_f, Index kernel_t, Index dilation_f = 1, Index dilation_t = 1,
                       Index stride_f = 1, Index stride_t = 1);
};

/// x: (N, C, F, T), w: (C', C, KF, KT), bias: (C') or undefined.
template <typename Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& bias, const ConvSpec& spec);

/// Per-channel batch normalization over (N, F, T). In train mode batch
/// statistics are used and the running estimates are updated in place.
template <typename Real>
Var<Real> batch_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Tensor<Real>& running_mean,
                     Tensor<Real>& running_var, bool train, Real momentum = Real(0.1), Real eps = Real(1e-5));

/// x: (N, D), w: (H, D), bias: (H) or undefined -> (N, H)
template <typename Real> Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const Var<Real>& bias);

// ---- pooling and broadcasting over (N, C, F, T) -----------------------------

/// Mean over time -> (N, C, F)
template <typename Real> Var<Real> mean_time(const Var<Real>& x);
/// Mean over frequency -> (N, C, T)
template <typename Real> Var<Real> mean_freq(const Var<Real>& x);
/// x: (N, C, F, T) scaled by gates (N, C, F) replicated along time.
template <typename Real> Var<Real> mul_time_broadcast(const Var<Real>& x, const Var<Real>& gates);
/// Subtracts the per-(n, c, f) mean over time.
template <typename Real> Var<Real> mean_normalize(const Var<Real>& x);

// ---- speaker-embedding heads -----------------------------------------------

/// Learnable dictionary encoding. frames: (N, T, D), centers: (K, D),
/// scales: (K) positive, biases: (K) -> (N, K*D).
template <typename Real>
Var<Real> lde_pool(const Var<Real>& frames, const Var<Real>& centers, const Var<Real>& scales,
                   const Var<Real>& biases, Real eps = Real(1e-6));

struct AngularMargin {
  int margin = 2;        // m >= 1
  double lambda = 0.0;   // annealing blend weight
  double scale = 1.0;    // logit scale applied to the cosines
};

/// Mean multiplicative-angular-margin cross entropy. embeddings: (N, D),
/// weights: (J, D), labels in [0, J).
template <typename Real>
Var<Real> angular_softmax_loss(const Var<Real>& embeddings, const Var<Real>& weights, const std::vector<int>& labels,
                               const AngularMargin& margin);

/// Cosine similarity between every embedding row and every class row: (N, J).
template <typename Real> Tensor<Real> cosine_logits(const Tensor<Real>& embeddings, const Tensor<Real>& weights);

}  // namespace dfl::ad
