#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dfl/autodiff/ops.hpp"
#include "op_support.hpp"

namespace dfl::ad {

using detail::grad_target;
using detail::require_rank;

template <typename Real>
Var<Real> lde_pool(const Var<Real>& frames, const Var<Real>& centers, const Var<Real>& scales, const Var<Real>& biases,
                   Real eps) {
  require_rank(frames.shape(), 3, "lde_pool frames");
  require_rank(centers.shape(), 2, "lde_pool centers");
  const Index n = frames.dim(0), t = frames.dim(1), d = frames.dim(2), k = centers.dim(0);
  if (t < 1) throw ShapeError("lde_pool: need at least one frame");
  if (centers.dim(1) != d) throw ShapeError("lde_pool: center width does not match frame width");
  if (scales.value().size() != k || biases.value().size() != k) throw ShapeError("lde_pool: scales/biases size");

  const Tensor<Real>& xv = frames.value();
  const Tensor<Real>& mu = centers.value();
  const Tensor<Real>& sv = scales.value();
  const Tensor<Real>& bv = biases.value();

  // weights (N, T, K), occupancy (N, K)
  Tensor<Real> weights(Shape{n, t, k}), occupancy(Shape{n, k}), dist(Shape{n, t, k});
  Tensor<Real> y(Shape{n, k * d});
  std::vector<Real> logits(static_cast<std::size_t>(k));
  for (Index b = 0; b < n; ++b) {
    for (Index s = 0; s < t; ++s) {
      const Real* x = xv.data() + (b * t + s) * d;
      Real peak = -std::numeric_limits<Real>::infinity();
      for (Index c = 0; c < k; ++c) {
        Real acc = 0;
        for (Index j = 0; j < d; ++j) {
          const Real r = x[j] - mu[c * d + j];
          acc += r * r;
        }
        dist[(b * t + s) * k + c] = acc;
        logits[c] = -sv[c] * acc + bv[c];
        peak = std::max(peak, logits[c]);
      }
      Real z = 0;
      for (Index c = 0; c < k; ++c) z += (logits[c] = std::exp(logits[c] - peak));
      for (Index c = 0; c < k; ++c) weights[(b * t + s) * k + c] = logits[c] / z;
    }
    for (Index c = 0; c < k; ++c) {
      Real occ = 0;
      Real* e = y.data() + (b * k + c) * d;
      for (Index s = 0; s < t; ++s) {
        const Real w = weights[(b * t + s) * k + c];
        occ += w;
        const Real* x = xv.data() + (b * t + s) * d;
        for (Index j = 0; j < d; ++j) e[j] += w * (x[j] - mu[c * d + j]);
      }
      occupancy[b * k + c] = occ;
      for (Index j = 0; j < d; ++j) e[j] /= occ + eps;
    }
  }

  return make_result<Real>(
      std::move(y), {frames, centers, scales, biases},
      [n, t, d, k, eps, weights = std::move(weights), occupancy = std::move(occupancy),
       dist = std::move(dist)](Node<Real>& self) {
        const Tensor<Real>& xv = self.parents[0]->value;
        const Tensor<Real>& mu = self.parents[1]->value;
        const Tensor<Real>& sv = self.parents[2]->value;
        const Tensor<Real>& e = self.value;
        Tensor<Real>* gx = grad_target(self, 0);
        Tensor<Real>* gmu = grad_target(self, 1);
        Tensor<Real>* gs = grad_target(self, 2);
        Tensor<Real>* gbias = grad_target(self, 3);
        std::vector<Real> q(static_cast<std::size_t>(k)), u(static_cast<std::size_t>(k));
        for (Index b = 0; b < n; ++b) {
          for (Index s = 0; s < t; ++s) {
            const Real* x = xv.data() + (b * t + s) * d;
            const Real* w = weights.data() + (b * t + s) * k;
            Real mean_q = 0;
            for (Index c = 0; c < k; ++c) {
              const Real* g = self.grad.data() + (b * k + c) * d;
              const Real* ec = e.data() + (b * k + c) * d;
              Real acc = 0;
              for (Index j = 0; j < d; ++j) acc += g[j] * (x[j] - mu[c * d + j] - ec[j]);
              q[c] = acc / (occupancy[b * k + c] + eps);
              mean_q += w[c] * q[c];
            }
            for (Index c = 0; c < k; ++c) u[c] = w[c] * (q[c] - mean_q);
            for (Index c = 0; c < k; ++c) {
              const Real* g = self.grad.data() + (b * k + c) * d;
              const Real direct = w[c] / (occupancy[b * k + c] + eps);
              const Real pull = Real(2) * sv[c] * u[c];
              for (Index j = 0; j < d; ++j) {
                const Real r = x[j] - mu[c * d + j];
                if (gx) (*gx)[(b * t + s) * d + j] += direct * g[j] - pull * r;
                if (gmu) (*gmu)[c * d + j] += -direct * g[j] + pull * r;
              }
              if (gs) (*gs)[c] -= u[c] * dist[(b * t + s) * k + c];
              if (gbias) (*gbias)[c] += u[c];
            }
          }
        }
      });
}

namespace {

// Chebyshev T_m(c) and its derivative, cos(m*theta) as a polynomial in cos(theta).
template <typename Real>
std::pair<Real, Real> chebyshev(int m, Real c) {
  Real t_prev = 1, t_cur = c, d_prev = 0, d_cur = 1;
  if (m == 0) return {Real(1), Real(0)};
  for (int i = 1; i < m; ++i) {
    const Real t_next = Real(2) * c * t_cur - t_prev;
    const Real d_next = Real(2) * t_cur + Real(2) * c * d_cur - d_prev;
    t_prev = t_cur;
    t_cur = t_next;
    d_prev = d_cur;
    d_cur = d_next;
  }
  return {t_cur, d_cur};
}

template <typename Real>
void normalize_rows(const Tensor<Real>& m, Index rows, Index cols, Tensor<Real>& unit, std::vector<Real>& norms) {
  unit = Tensor<Real>(Shape{rows, cols});
  norms.assign(static_cast<std::size_t>(rows), Real(0));
  for (Index i = 0; i < rows; ++i) {
    Real acc = 0;
    for (Index j = 0; j < cols; ++j) acc += m[i * cols + j] * m[i * cols + j];
    const Real nrm = std::sqrt(acc);
    if (!(nrm > Real(0))) throw std::domain_error("angular softmax: zero-norm row");
    norms[i] = nrm;
    for (Index j = 0; j < cols; ++j) unit[i * cols + j] = m[i * cols + j] / nrm;
  }
}

}  // namespace

template <typename Real>
Tensor<Real> cosine_logits(const Tensor<Real>& embeddings, const Tensor<Real>& weights) {
  require_rank(embeddings.shape(), 2, "cosine_logits");
  const Index n = embeddings.dim(0), d = embeddings.dim(1), j = weights.dim(0);
  if (weights.dim(1) != d) throw ShapeError("cosine_logits: width mismatch");
  Tensor<Real> xu, wu;
  std::vector<Real> xn, wn;
  normalize_rows(embeddings, n, d, xu, xn);
  normalize_rows(weights, j, d, wu, wn);
  Tensor<Real> out(Shape{n, j});
  for (Index a = 0; a < n; ++a)
    for (Index c = 0; c < j; ++c) {
      Real acc = 0;
      for (Index i = 0; i < d; ++i) acc += xu[a * d + i] * wu[c * d + i];
      out[a * j + c] = acc;
    }
  return out;
}

template <typename Real>
Var<Real> angular_softmax_loss(const Var<Real>& embeddings, const Var<Real>& weights, const std::vector<int>& labels,
                               const AngularMargin& margin) {
  if (margin.margin < 1) throw std::invalid_argument("angular_softmax_loss: margin m must be >= 1");
  require_rank(embeddings.shape(), 2, "angular_softmax_loss embeddings");
  require_rank(weights.shape(), 2, "angular_softmax_loss weights");
  const Index n = embeddings.dim(0), d = embeddings.dim(1), classes = weights.dim(0);
  if (weights.dim(1) != d) throw ShapeError("angular_softmax_loss: width mismatch");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("angular_softmax_loss: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= classes) throw std::out_of_range("angular_softmax_loss: label out of range");

  const int m = margin.margin;
  const Real lambda = Real(margin.lambda), s = Real(margin.scale);
  Tensor<Real> xu, wu;
  std::vector<Real> xn, wn;
  normalize_rows(embeddings.value(), n, d, xu, xn);
  normalize_rows(weights.value(), classes, d, wu, wn);

  // dL/dcos for every (sample, class), filled during the forward pass.
  Tensor<Real> dcos(Shape{n, classes});
  Real total = 0;
  std::vector<Real> z(static_cast<std::size_t>(classes));
  for (Index a = 0; a < n; ++a) {
    const int y = labels[static_cast<std::size_t>(a)];
    Real target_slope = 1;
    for (Index c = 0; c < classes; ++c) {
      Real cs = 0;
      for (Index i = 0; i < d; ++i) cs += xu[a * d + i] * wu[c * d + i];
      if (c == y) {
        const Real clamped = std::clamp(cs, Real(-1), Real(1));
        const Real theta = std::acos(clamped);
        int kk = static_cast<int>(std::floor(Real(m) * theta / std::numbers::pi_v<Real>));
        kk = std::clamp(kk, 0, m - 1);
        const auto [tm, dtm] = chebyshev<Real>(m, cs);
        const Real sign = (kk % 2 == 0) ? Real(1) : Real(-1);
        const Real psi = sign * tm - Real(2 * kk);
        z[c] = s * (lambda * cs + psi) / (Real(1) + lambda);
        target_slope = (lambda + sign * dtm) / (Real(1) + lambda);
      } else {
        z[c] = s * cs;
      }
    }
    const Real peak = *std::max_element(z.begin(), z.end());
    Real norm = 0;
    for (Index c = 0; c < classes; ++c) norm += std::exp(z[c] - peak);
    const Real log_norm = peak + std::log(norm);
    total += log_norm - z[y];
    for (Index c = 0; c < classes; ++c) {
      const Real p = std::exp(z[c] - log_norm);
      const Real dz = (p - (c == y ? Real(1) : Real(0))) / Real(n);
      dcos[a * classes + c] = s * dz * (c == y ? target_slope : Real(1));
    }
  }

  return make_result<Real>(
      Tensor<Real>::scalar(total / Real(n)), {embeddings, weights},
      [n, d, classes, xu = std::move(xu), wu = std::move(wu), xn = std::move(xn), wn = std::move(wn),
       dcos = std::move(dcos)](Node<Real>& self) {
        const Real g0 = self.grad[0];
        Tensor<Real>* gx = grad_target(self, 0);
        Tensor<Real>* gw = grad_target(self, 1);
        // Gradients with respect to the unit vectors, then through the normalization.
        Tensor<Real> dxu(Shape{n, d}), dwu(Shape{classes, d});
        for (Index a = 0; a < n; ++a)
          for (Index c = 0; c < classes; ++c) {
            const Real g = g0 * dcos[a * classes + c];
            for (Index i = 0; i < d; ++i) {
              dxu[a * d + i] += g * wu[c * d + i];
              dwu[c * d + i] += g * xu[a * d + i];
            }
          }
        auto project = [d](const Tensor<Real>& unit, const std::vector<Real>& norms, const Tensor<Real>& du,
                           Index rows, Tensor<Real>& out) {
          for (Index r = 0; r < rows; ++r) {
            Real dot = 0;
            for (Index i = 0; i < d; ++i) dot += unit[r * d + i] * du[r * d + i];
            for (Index i = 0; i < d; ++i) out[r * d + i] += (du[r * d + i] - unit[r * d + i] * dot) / norms[r];
          }
        };
        if (gx) project(xu, xn, dxu, n, *gx);
        if (gw) project(wu, wn, dwu, classes, *gw);
      });
}

#define DFL_INSTANTIATE(R)                                                                                    \
  template Var<R> lde_pool<R>(const Var<R>&, const Var<R>&, const Var<R>&, const Var<R>&, R);                \
  template Var<R> angular_softmax_loss<R>(const Var<R>&, const Var<R>&, const std::vector<int>&,             \
                                          const AngularMargin&);                                              \
  template Tensor<R> cosine_logits<R>(const Tensor<R>&, const Tensor<R>&);

DFL_INSTANTIATE_FOR_REALS(DFL_INSTANTIATE)
#undef DFL_INSTANTIATE

}  // namespace dfl::ad
