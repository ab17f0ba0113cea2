#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dfl/autodiff/ops.hpp"
#include "op_support.hpp"

namespace dfl::ad {

using detail::grad_target;
using detail::require_rank;

ConvSpec ConvSpec::same(Index kernel_f, Index kernel_t, Index dilation_f, Index dilation_t, Index stride_f,
                        Index stride_t) {
  if (kernel_f % 2 == 0 || kernel_t % 2 == 0) throw std::invalid_argument("ConvSpec::same: kernel sizes must be odd");
  ConvSpec s;
  s.stride_f = stride_f;
  s.stride_t = stride_t;
  s.dilation_f = dilation_f;
  s.dilation_t = dilation_t;
  s.pad_f = dilation_f * (kernel_f - 1) / 2;
  s.pad_t = dilation_t * (kernel_t - 1) / 2;
  return s;
}

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using StridedMap = Eigen::Map<RowMat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using ConstStridedMap = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;

constexpr Index kColumnBudget = Index(1) << 22;

struct ConvGeometry {
  Index channels, height, width;      // input C, F, T
  Index kernel_f, kernel_t;
  Index out_height, out_width;
  ConvSpec spec;

  Index patch() const { return channels * kernel_f * kernel_t; }
  Index positions() const { return out_height * out_width; }
  Index chunk() const { return std::max<Index>(1, std::min(positions(), kColumnBudget / std::max<Index>(1, patch()))); }
};

// Walks the column matrix in runs along one output row. For each run calls
// fn(col_offset, src_offset, count, src_step), with src_offset -1 for zero padding.
template <typename Fn>
void for_each_run(const ConvGeometry& g, Index p0, Index pc, Fn&& fn) {
  const ConvSpec& s = g.spec;
  for (Index c = 0; c < g.channels; ++c)
    for (Index kf = 0; kf < g.kernel_f; ++kf)
      for (Index kt = 0; kt < g.kernel_t; ++kt) {
        const Index row = (c * g.kernel_f + kf) * g.kernel_t + kt;
        for (Index q = 0; q < pc;) {
          const Index p = p0 + q;
          const Index oh = p / g.out_width, ow0 = p % g.out_width;
          const Index len = std::min(g.out_width - ow0, pc - q);
          const Index col = row * pc + q;
          const Index ih = oh * s.stride_f - s.pad_f + kf * s.dilation_f;
          if (ih < 0 || ih >= g.height) {
            fn(col, Index(-1), len, Index(0));
          } else {
            // iw(j) = base + j * stride_t must lie in [0, width).
            const Index base = ow0 * s.stride_t - s.pad_t + kt * s.dilation_t;
            const Index st = s.stride_t;
            Index lo = base >= 0 ? 0 : (-base + st - 1) / st;
            Index hi = base >= g.width ? 0 : (g.width - base + st - 1) / st;
            lo = std::min(lo, len);
            hi = std::clamp(hi, lo, len);
            if (lo > 0) fn(col, Index(-1), lo, Index(0));
            if (hi > lo) fn(col + lo, (c * g.height + ih) * g.width + base + lo * st, hi - lo, st);
            if (len > hi) fn(col + hi, Index(-1), len - hi, Index(0));
          }
          q += len;
        }
      }
}

template <typename Real>
void im2col(const ConvGeometry& g, const Real* x, Index p0, Index pc, Real* col) {
  for_each_run(g, p0, pc, [&](Index dst, Index src, Index count, Index step) {
    Real* out = col + dst;
    if (src < 0) {
      std::fill(out, out + count, Real(0));
    } else if (step == 1) {
      std::copy(x + src, x + src + count, out);
    } else {
      for (Index j = 0; j < count; ++j) out[j] = x[src + j * step];
    }
  });
}

template <typename Real>
void col2im(const ConvGeometry& g, const Real* col, Index p0, Index pc, Real* dx) {
  for_each_run(g, p0, pc, [&](Index dst, Index src, Index count, Index step) {
    if (src < 0) return;
    const Real* in = col + dst;
    Real* out = dx + src;
    if (step == 1) {
      for (Index j = 0; j < count; ++j) out[j] += in[j];
    } else {
      for (Index j = 0; j < count; ++j) out[j * step] += in[j];
    }
  });
}

}  // namespace

template <typename Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& bias, const ConvSpec& spec) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  if (w.dim(1) != x.dim(1))
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                     std::to_string(x.dim(1)));
  if (spec.stride_f < 1 || spec.stride_t < 1 || spec.dilation_f < 1 || spec.dilation_t < 1)
    throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
  const Index n = x.dim(0), out_ch = w.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), 0, 0, spec};
  g.out_height = (g.height + 2 * spec.pad_f - spec.dilation_f * (g.kernel_f - 1) - 1) / spec.stride_f + 1;
  g.out_width = (g.width + 2 * spec.pad_t - spec.dilation_t * (g.kernel_t - 1) - 1) / spec.stride_t + 1;
  if (g.out_height < 1 || g.out_width < 1) throw ShapeError("conv2d: input smaller than the dilated kernel");
  if (bias.defined() && (bias.value().size() != out_ch)) throw ShapeError("conv2d: bias size mismatch");

  const Index P = g.positions(), K = g.patch(), chunk = g.chunk();
  Tensor<Real> y(Shape{n, out_ch, g.out_height, g.out_width});
  std::vector<Real> col(static_cast<std::size_t>(K * chunk));
  Eigen::Map<const RowMat<Real>> wm(w.value().data(), out_ch, K);
  const Index in_stride = g.channels * g.height * g.width;
  for (Index b = 0; b < n; ++b) {
    Real* out = y.data() + b * out_ch * P;
    for (Index p0 = 0; p0 < P; p0 += chunk) {
      const Index pc = std::min(chunk, P - p0);
      im2col(g, x.value().data() + b * in_stride, p0, pc, col.data());
      Eigen::Map<const RowMat<Real>> cm(col.data(), K, pc);
      StridedMap<Real> om(out + p0, out_ch, pc, Eigen::OuterStride<>(P));
      om.noalias() = wm * cm;
    }
    if (bias.defined())
      for (Index o = 0; o < out_ch; ++o) {
        const Real bv = bias.value()[o];
        for (Index p = 0; p < P; ++p) out[o * P + p] += bv;
      }
  }

  std::vector<Var<Real>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result<Real>(std::move(y), std::move(parents), [g, n, out_ch](Node<Real>& self) {
    const Index P = g.positions(), K = g.patch(), chunk = g.chunk();
    const Index in_stride = g.channels * g.height * g.width;
    const Tensor<Real>& xv = self.parents[0]->value;
    const Tensor<Real>& wv = self.parents[1]->value;
    Tensor<Real>* gx = grad_target(self, 0);
    Tensor<Real>* gw = grad_target(self, 1);
    Tensor<Real>* gb = self.parents.size() > 2 ? grad_target(self, 2) : nullptr;
    std::vector<Real> col(static_cast<std::size_t>(K * chunk));
    Eigen::Map<const RowMat<Real>> wm(wv.data(), out_ch, K);
    for (Index b = 0; b < n; ++b) {
      const Real* dout = self.grad.data() + b * out_ch * P;
      if (gb)
        for (Index o = 0; o < out_ch; ++o) {
          Real acc = 0;
          for (Index p = 0; p < P; ++p) acc += dout[o * P + p];
          (*gb)[o] += acc;
        }
      if (!gx && !gw) continue;
      for (Index p0 = 0; p0 < P; p0 += chunk) {
        const Index pc = std::min(chunk, P - p0);
        ConstStridedMap<Real> dm(dout + p0, out_ch, pc, Eigen::OuterStride<>(P));
        if (gw) {
          im2col(g, xv.data() + b * in_stride, p0, pc, col.data());
          Eigen::Map<const RowMat<Real>> cm(col.data(), K, pc);
          Eigen::Map<RowMat<Real>> gwm(gw->data(), out_ch, K);
          gwm.noalias() += dm * cm.transpose();
        }
        if (gx) {
          Eigen::Map<RowMat<Real>> cm(col.data(), K, pc);
          cm.noalias() = wm.transpose() * dm;
          col2im(g, col.data(), p0, pc, gx->data() + b * in_stride);
        }
      }
    }
  });
}

template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const Var<Real>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  if (w.dim(1) != x.dim(1)) throw ShapeError("linear: input width " + std::to_string(x.dim(1)) +
                                             " does not match weight " + to_string(w.shape()));
  const Index n = x.dim(0), d = x.dim(1), h = w.dim(0);
  if (bias.defined() && bias.value().size() != h) throw ShapeError("linear: bias size mismatch");
  Tensor<Real> y(Shape{n, h});
  Eigen::Map<const RowMat<Real>> xm(x.value().data(), n, d), wm(w.value().data(), h, d);
  Eigen::Map<RowMat<Real>> ym(y.data(), n, h);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined())
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < h; ++j) ym(i, j) += bias.value()[j];
  std::vector<Var<Real>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result<Real>(std::move(y), std::move(parents), [n, d, h](Node<Real>& self) {
    Eigen::Map<const RowMat<Real>> dy(self.grad.data(), n, h);
    Eigen::Map<const RowMat<Real>> xm(self.parents[0]->value.data(), n, d), wm(self.parents[1]->value.data(), h, d);
    if (Tensor<Real>* g = grad_target(self, 0)) {
      Eigen::Map<RowMat<Real>> gm(g->data(), n, d);
      gm.noalias() += dy * wm;
    }
    if (Tensor<Real>* g = grad_target(self, 1)) {
      Eigen::Map<RowMat<Real>> gm(g->data(), h, d);
      gm.noalias() += dy.transpose() * xm;
    }
    if (self.parents.size() > 2)
      if (Tensor<Real>* g = grad_target(self, 2))
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < h; ++j) (*g)[j] += dy(i, j);
  });
}

template <typename Real>
Var<Real> batch_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Tensor<Real>& running_mean,
                     Tensor<Real>& running_var, bool train, Real momentum, Real eps) {
  require_rank(x.shape(), 4, "batch_norm");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Index m = n * hw;
  if (gamma.value().size() != c || beta.value().size() != c || running_mean.size() != c || running_var.size() != c)
    throw ShapeError("batch_norm: per-channel parameter size mismatch");
  const Tensor<Real>& xv = x.value();
  Tensor<Real> mean(Shape{c}), inv_std(Shape{c});
  // Per-(sample, channel) slabs are contiguous.
  const auto slab = [hw, c](const Tensor<Real>& t, Index b, Index ch) { return t.data() + (b * c + ch) * hw; };
  if (train) {
    for (Index ch = 0; ch < c; ++ch) {
      double total = 0;
      for (Index b = 0; b < n; ++b) {
        const Real* p = slab(xv, b, ch);
        total += detail::lane_sum(hw, [p](Index i) { return p[i]; });
      }
      const double mu = total / static_cast<double>(m);
      double sq = 0;
      for (Index b = 0; b < n; ++b) {
        const Real* p = slab(xv, b, ch);
        sq += detail::lane_sum(hw, [p, mu](Index i) {
          const double d = p[i] - mu;
          return d * d;
        });
      }
      const Real var = static_cast<Real>(sq / static_cast<double>(m));
      mean[ch] = static_cast<Real>(mu);
      inv_std[ch] = Real(1) / std::sqrt(var + eps);
      const Real unbiased = m > 1 ? var * Real(m) / Real(m - 1) : var;
      running_mean[ch] = (Real(1) - momentum) * running_mean[ch] + momentum * mean[ch];
      running_var[ch] = (Real(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (Index ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = Real(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  Tensor<Real> y(x.shape());
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const Real gm = gamma.value()[ch], bt = beta.value()[ch], mu = mean[ch], is = inv_std[ch];
      const Real* p = slab(xv, b, ch);
      Real* out = y.data() + (b * c + ch) * hw;
      for (Index i = 0; i < hw; ++i) out[i] = (p[i] - mu) * (gm * is) + bt;
    }
  return make_result<Real>(
      std::move(y), {x, gamma, beta},
      [n, c, hw, m, train, slab, mean = std::move(mean), inv_std = std::move(inv_std)](Node<Real>& self) {
        const Tensor<Real>& xv = self.parents[0]->value;
        const Tensor<Real>& gv = self.parents[1]->value;
        Tensor<Real>* gx = grad_target(self, 0);
        Tensor<Real>* gg = grad_target(self, 1);
        Tensor<Real>* gbeta = grad_target(self, 2);
        for (Index ch = 0; ch < c; ++ch) {
          const Real mu = mean[ch], is = inv_std[ch];
          double sum_dy = 0, sum_dy_xhat = 0;
          for (Index b = 0; b < n; ++b) {
            const Real* dy = slab(self.grad, b, ch);
            const Real* p = slab(xv, b, ch);
            sum_dy += detail::lane_sum(hw, [dy](Index i) { return dy[i]; });
            sum_dy_xhat += detail::lane_sum(hw, [dy, p, mu, is](Index i) { return dy[i] * ((p[i] - mu) * is); });
          }
          if (gg) (*gg)[ch] += static_cast<Real>(sum_dy_xhat);
          if (gbeta) (*gbeta)[ch] += static_cast<Real>(sum_dy);
          if (!gx) continue;
          const Real scale = gv[ch] * is;
          const Real mean_dy = static_cast<Real>(sum_dy / static_cast<double>(m));
          const Real mean_dy_xhat = static_cast<Real>(sum_dy_xhat / static_cast<double>(m));
          for (Index b = 0; b < n; ++b) {
            Real* g = gx->data() + (b * c + ch) * hw;
            const Real* dy = slab(self.grad, b, ch);
            const Real* p = slab(xv, b, ch);
            if (train)
              for (Index i = 0; i < hw; ++i) g[i] += scale * (dy[i] - mean_dy - (p[i] - mu) * is * mean_dy_xhat);
            else
              for (Index i = 0; i < hw; ++i) g[i] += scale * dy[i];
          }
        }
      });
}

#define DFL_INSTANTIATE(R)                                                                                       \
  template Var<R> conv2d<R>(const Var<R>&, const Var<R>&, const Var<R>&, const ConvSpec&);                      \
  template Var<R> linear<R>(const Var<R>&, const Var<R>&, const Var<R>&);                                      \
  template Var<R> batch_norm<R>(const Var<R>&, const Var<R>&, const Var<R>&, Tensor<R>&, Tensor<R>&, bool, R, R);

DFL_INSTANTIATE_FOR_REALS(DFL_INSTANTIATE)
#undef DFL_INSTANTIATE

}  // namespace dfl::ad
