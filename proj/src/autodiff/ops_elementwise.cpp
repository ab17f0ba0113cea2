#include <algorithm>
#include <cmath>

#include "dfl/autodiff/ops.hpp"
#include "op_support.hpp"

namespace dfl::ad {

using detail::grad_target;
using detail::require_rank;
using detail::stable_sigmoid;

namespace {

// y = f(x) elementwise; dfdx(x, y) gives the local derivative.
template <typename Real, typename F, typename D>
Var<Real> unary(const Var<Real>& x, F f, D dfdx) {
  const Tensor<Real>& xv = x.value();
  Tensor<Real> y(xv.shape());
  const Index n = xv.size();
  const Real* xp = xv.data();
  Real* yp = y.data();
  for (Index i = 0; i < n; ++i) yp[i] = f(xp[i]);
  return make_result<Real>(std::move(y), {x}, [dfdx](Node<Real>& self) {
    Tensor<Real>* gx = grad_target(self, 0);
    if (!gx) return;
    const Index n = self.value.size();
    const Real* xp = self.parents[0]->value.data();
    const Real* yp = self.value.data();
    const Real* dy = self.grad.data();
    Real* gp = gx->data();
    for (Index i = 0; i < n; ++i) gp[i] += dy[i] * dfdx(xp[i], yp[i]);
  });
}

}  // namespace

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Real> y(a.shape());
  for (Index i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_result<Real>(std::move(y), {a, b}, [](Node<Real>& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (Tensor<Real>* g = grad_target(self, p))
        for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Real> y(a.shape());
  for (Index i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result<Real>(std::move(y), {a, b}, [](Node<Real>& self) {
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (Tensor<Real>* g = grad_target(self, 1))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Real> y(a.shape());
  for (Index i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result<Real>(std::move(y), {a, b}, [](Node<Real>& self) {
    const Tensor<Real>& av = self.parents[0]->value;
    const Tensor<Real>& bv = self.parents[1]->value;
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (Tensor<Real>* g = grad_target(self, 1))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor) {
  return unary(
      a, [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

template <typename Real>
Var<Real> add_scalar(const Var<Real>& a, Real offset) {
  return unary(
      a, [offset](Real v) { return v + offset; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Var<Real> scale_by(const Var<Real>& x, const Var<Real>& s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: factor must have one element");
  const Real sv = s.value()[0];
  Tensor<Real> y(x.shape());
  for (Index i = 0; i < y.size(); ++i) y[i] = sv * x.value()[i];
  return make_result<Real>(std::move(y), {x, s}, [](Node<Real>& self) {
    const Tensor<Real>& xv = self.parents[0]->value;
    const Real sv = self.parents[1]->value[0];
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += sv * self.grad[i];
    if (Tensor<Real>* g = grad_target(self, 1)) {
      Real acc = 0;
      for (Index i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*g)[0] += acc;
    }
  });
}

template <typename Real>
Var<Real> relu(const Var<Real>& x) {
  return unary(
      x, [](Real v) { return std::max(v, Real(0)); }, [](Real v, Real) { return static_cast<Real>(v > Real(0)); });
}

template <typename Real>
Var<Real> leaky_relu(const Var<Real>& x, Real slope) {
  return unary(
      // Branch-free forms so the loops vectorise.
      x, [slope](Real v) { return std::max(v, Real(0)) + slope * std::min(v, Real(0)); },
      [slope](Real v, Real) { return slope + (Real(1) - slope) * static_cast<Real>(v > Real(0)); });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real>& x) {
  return unary(
      x, [](Real v) { return stable_sigmoid(v); }, [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Var<Real> swish(const Var<Real>& x) {
  return unary(
      x, [](Real v) { return v * stable_sigmoid(v); },
      [](Real v, Real) {
        const Real s = stable_sigmoid(v);
        return s + v * s * (Real(1) - s);
      });
}

template <typename Real>
Var<Real> log(const Var<Real>& x) {
  return unary(
      x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
Var<Real> exp(const Var<Real>& x) {
  return unary(
      x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
Var<Real> clamp_min(const Var<Real>& x, Real floor) {
  return unary(
      x, [floor](Real v) { return v > floor ? v : floor; },
      [floor](Real v, Real) { return v > floor ? Real(1) : Real(0); });
}

template <typename Real>
Var<Real> sum(const Var<Real>& x) {
  Real acc = 0;
  for (Real v : x.value().values()) acc += v;
  return make_result<Real>(Tensor<Real>::scalar(acc), {x}, [](Node<Real>& self) {
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[0];
  });
}

template <typename Real>
Var<Real> l1_distance(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "l1_distance");
  Real acc = 0;
  for (Index i = 0; i < a.value().size(); ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return make_result<Real>(Tensor<Real>::scalar(acc), {a, b}, [](Node<Real>& self) {
    const Tensor<Real>& av = self.parents[0]->value;
    const Tensor<Real>& bv = self.parents[1]->value;
    const Real g0 = self.grad[0];
    auto sign = [](Real d) { return d > Real(0) ? Real(1) : (d < Real(0) ? Real(-1) : Real(0)); };
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += g0 * sign(av[i] - bv[i]);
    if (Tensor<Real>* g = grad_target(self, 1))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] -= g0 * sign(av[i] - bv[i]);
  });
}

template <typename Real>
Var<Real> reshape(const Var<Real>& x, Shape shape) {
  Tensor<Real> y = x.value();
  y.reshape(std::move(shape));
  return make_result<Real>(std::move(y), {x}, [](Node<Real>& self) {
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <typename Real>
Var<Real> transpose_last2(const Var<Real>& x) {
  require_rank(x.shape(), 3, "transpose_last2");
  const Index n = x.dim(0), a = x.dim(1), b = x.dim(2);
  Tensor<Real> y(Shape{n, b, a});
  const Tensor<Real>& xv = x.value();
  for (Index k = 0; k < n; ++k)
    for (Index i = 0; i < a; ++i)
      for (Index j = 0; j < b; ++j) y[(k * b + j) * a + i] = xv[(k * a + i) * b + j];
  return make_result<Real>(std::move(y), {x}, [n, a, b](Node<Real>& self) {
    Tensor<Real>* g = grad_target(self, 0);
    if (!g) return;
    for (Index k = 0; k < n; ++k)
      for (Index i = 0; i < a; ++i)
        for (Index j = 0; j < b; ++j) (*g)[(k * a + i) * b + j] += self.grad[(k * b + j) * a + i];
  });
}

template <typename Real>
Var<Real> upsample_nearest(const Var<Real>& x, Index factor_f, Index factor_t) {
  require_rank(x.shape(), 4, "upsample_nearest");
  if (factor_f < 1 || factor_t < 1) throw std::invalid_argument("upsample_nearest: factors must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), f = x.dim(2), t = x.dim(3);
  const Index fo = f * factor_f, to = t * factor_t;
  Tensor<Real> y(Shape{n, c, fo, to});
  const Tensor<Real>& xv = x.value();
  for (Index k = 0; k < n * c; ++k)
    for (Index i = 0; i < fo; ++i)
      for (Index j = 0; j < to; ++j) y[(k * fo + i) * to + j] = xv[(k * f + i / factor_f) * t + j / factor_t];
  return make_result<Real>(std::move(y), {x}, [=](Node<Real>& self) {
    Tensor<Real>* g = grad_target(self, 0);
    if (!g) return;
    for (Index k = 0; k < n * c; ++k)
      for (Index i = 0; i < fo; ++i)
        for (Index j = 0; j < to; ++j) (*g)[(k * f + i / factor_f) * t + j / factor_t] += self.grad[(k * fo + i) * to + j];
  });
}

template <typename Real>
Var<Real> mean_time(const Var<Real>& x) {
  require_rank(x.shape(), 4, "mean_time");
  const Index rows = x.dim(0) * x.dim(1) * x.dim(2), t = x.dim(3);
  Tensor<Real> y(Shape{x.dim(0), x.dim(1), x.dim(2)});
  const Tensor<Real>& xv = x.value();
  for (Index r = 0; r < rows; ++r) {
    Real acc = 0;
    for (Index j = 0; j < t; ++j) acc += xv[r * t + j];
    y[r] = acc / Real(t);
  }
  return make_result<Real>(std::move(y), {x}, [rows, t](Node<Real>& self) {
    Tensor<Real>* g = grad_target(self, 0);
    if (!g) return;
    for (Index r = 0; r < rows; ++r) {
      const Real share = self.grad[r] / Real(t);
      for (Index j = 0; j < t; ++j) (*g)[r * t + j] += share;
    }
  });
}

template <typename Real>
Var<Real> mean_freq(const Var<Real>& x) {
  require_rank(x.shape(), 4, "mean_freq");
  const Index nc = x.dim(0) * x.dim(1), f = x.dim(2), t = x.dim(3);
  Tensor<Real> y(Shape{x.dim(0), x.dim(1), t});
  const Tensor<Real>& xv = x.value();
  for (Index k = 0; k < nc; ++k)
    for (Index i = 0; i < f; ++i)
      for (Index j = 0; j < t; ++j) y[k * t + j] += xv[(k * f + i) * t + j];
  for (Index i = 0; i < y.size(); ++i) y[i] /= Real(f);
  return make_result<Real>(std::move(y), {x}, [nc, f, t](Node<Real>& self) {
    Tensor<Real>* g = grad_target(self, 0);
    if (!g) return;
    for (Index k = 0; k < nc; ++k)
      for (Index i = 0; i < f; ++i)
        for (Index j = 0; j < t; ++j) (*g)[(k * f + i) * t + j] += self.grad[k * t + j] / Real(f);
  });
}

template <typename Real>
Var<Real> mul_time_broadcast(const Var<Real>& x, const Var<Real>& gates) {
  require_rank(x.shape(), 4, "mul_time_broadcast");
  require_same_shape(Shape{x.dim(0), x.dim(1), x.dim(2)}, gates.shape(), "mul_time_broadcast");
  const Index rows = x.dim(0) * x.dim(1) * x.dim(2), t = x.dim(3);
  Tensor<Real> y(x.shape());
  const Tensor<Real>& xv = x.value();
  const Tensor<Real>& gv = gates.value();
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < t; ++j) y[r * t + j] = xv[r * t + j] * gv[r];
  return make_result<Real>(std::move(y), {x, gates}, [rows, t](Node<Real>& self) {
    const Tensor<Real>& xv = self.parents[0]->value;
    const Tensor<Real>& gv = self.parents[1]->value;
    if (Tensor<Real>* g = grad_target(self, 0))
      for (Index r = 0; r < rows; ++r)
        for (Index j = 0; j < t; ++j) (*g)[r * t + j] += self.grad[r * t + j] * gv[r];
    if (Tensor<Real>* g = grad_target(self, 1))
      for (Index r = 0; r < rows; ++r) {
        Real acc = 0;
        for (Index j = 0; j < t; ++j) acc += self.grad[r * t + j] * xv[r * t + j];
        (*g)[r] += acc;
      }
  });
}

template <typename Real>
Var<Real> mean_normalize(const Var<Real>& x) {
  require_rank(x.shape(), 4, "mean_normalize");
  const Index rows = x.dim(0) * x.dim(1) * x.dim(2), t = x.dim(3);
  Tensor<Real> y(x.shape());
  const Tensor<Real>& xv = x.value();
  for (Index r = 0; r < rows; ++r) {
    Real mean = 0;
    for (Index j = 0; j < t; ++j) mean += xv[r * t + j];
    mean /= Real(t);
    for (Index j = 0; j < t; ++j) y[r * t + j] = xv[r * t + j] - mean;
  }
  return make_result<Real>(std::move(y), {x}, [rows, t](Node<Real>& self) {
    Tensor<Real>* g = grad_target(self, 0);
    if (!g) return;
    for (Index r = 0; r < rows; ++r) {
      Real mean = 0;
      for (Index j = 0; j < t; ++j) mean += self.grad[r * t + j];
      mean /= Real(t);
      for (Index j = 0; j < t; ++j) (*g)[r * t + j] += self.grad[r * t + j] - mean;
    }
  });
}

#define DFL_INSTANTIATE(R)                                                              \
  template Var<R> add<R>(const Var<R>&, const Var<R>&);                                 \
  template Var<R> sub<R>(const Var<R>&, const Var<R>&);                                 \
  template Var<R> mul<R>(const Var<R>&, const Var<R>&);                                 \
  template Var<R> scale<R>(const Var<R>&, R);                                           \
  template Var<R> add_scalar<R>(const Var<R>&, R);                                      \
  template Var<R> scale_by<R>(const Var<R>&, const Var<R>&);                            \
  template Var<R> relu<R>(const Var<R>&);                                               \
  template Var<R> leaky_relu<R>(const Var<R>&, R);                                      \
  template Var<R> sigmoid<R>(const Var<R>&);                                            \
  template Var<R> swish<R>(const Var<R>&);                                              \
  template Var<R> log<R>(const Var<R>&);                                                \
  template Var<R> exp<R>(const Var<R>&);                                                \
  template Var<R> clamp_min<R>(const Var<R>&, R);                                       \
  template Var<R> sum<R>(const Var<R>&);                                                \
  template Var<R> l1_distance<R>(const Var<R>&, const Var<R>&);                         \
  template Var<R> reshape<R>(const Var<R>&, Shape);                                     \
  template Var<R> transpose_last2<R>(const Var<R>&);                                    \
  template Var<R> upsample_nearest<R>(const Var<R>&, Index, Index);                     \
  template Var<R> mean_time<R>(const Var<R>&);                                          \
  template Var<R> mean_freq<R>(const Var<R>&);                                          \
  template Var<R> mul_time_broadcast<R>(const Var<R>&, const Var<R>&);                  \
  template Var<R> mean_normalize<R>(const Var<R>&);

DFL_INSTANTIATE_FOR_REALS(DFL_INSTANTIATE)
#undef DFL_INSTANTIATE

}  // namespace dfl::ad
