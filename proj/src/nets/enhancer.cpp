#include "dfl/nets/enhancer.hpp"

#include <random>
#include <stdexcept>

namespace dfl::nets {

std::string to_string(EnhancerKind kind) { return kind == EnhancerKind::can ? "can" : "edn"; }

EnhancerKind enhancer_kind_from_string(const std::string& name) {
  if (name == "can") return EnhancerKind::can;
  if (name == "edn") return EnhancerKind::edn;
  throw std::invalid_argument("unknown enhancer network: " + name + " (expected can or edn)");
}

template <typename Real>
Var<Real> apply_log_mask(const Var<Real>& noisy, const Var<Real>& logits) {
  ad::require_same_shape(noisy.shape(), logits.shape(), "apply_log_mask");
  const auto mask = ad::clamp_min(ad::scale(ad::sigmoid(logits), Real(2)), static_cast<Real>(kMaskFloor));
  return ad::add(noisy, ad::log(mask));
}

template <typename Real>
void Enhancer<Real>::require_input(const Var<Real>& x, Index bands) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != bands)
    throw ad::ShapeError("enhancer input must be (N, 1, " + std::to_string(bands) + ", T), got " + ad::to_string(s));
  if (!x.value().all_finite()) throw std::invalid_argument("enhancer input contains non-finite values");
}

template <typename Real>
Var<Real> Enhancer<Real>::enhance(const Var<Real>& noisy, bool train) const {
  if (!noisy.value().all_finite()) throw std::invalid_argument("enhancer input contains non-finite values");
  return apply_log_mask(noisy, mask_logits(noisy, train));
}

template <typename Real>
Index receptive_field(const std::function<Var<Real>(const Var<Real>&)>& hidden, Index bands, Index frames,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = Var<Real>::leaf(normal_tensor<Real>({1, 1, bands, frames}, 1.0, rng));
  const auto h = hidden(x);
  const Index t_out = h.dim(3);
  Tensor<Real> select(h.shape());
  for (Index c = 0; c < h.dim(1); ++c)
    for (Index f = 0; f < h.dim(2); ++f) select.at(0, c, f, t_out / 2) = Real(1);
  ad::backward(ad::sum(ad::mul(h, Var<Real>::constant(select))));
  if (!x.has_grad()) return 0;
  Index first = -1, last = -1;
  for (Index t = 0; t < frames; ++t) {
    bool touched = false;
    for (Index f = 0; f < bands; ++f) touched = touched || x.grad().at(0, 0, f, t) != Real(0);
    if (touched) {
      if (first < 0) first = t;
      last = t;
    }
  }
  return first < 0 ? 0 : last - first + 1;
}

template <typename Real>
Index receptive_field(const Enhancer<Real>& net, Index bands, Index frames) {
  return receptive_field<Real>([&net](const Var<Real>& x) { return net.probe_hidden(x); }, bands, frames);
}

#define DFL_NETS_INSTANTIATE(R)                                                                         \
  template Var<R> apply_log_mask<R>(const Var<R>&, const Var<R>&);                                      \
  template class Enhancer<R>;                                                                           \
  template Index receptive_field<R>(const std::function<Var<R>(const Var<R>&)>&, Index, Index,          \
                                    std::uint64_t);                                                     \
  template Index receptive_field<R>(const Enhancer<R>&, Index, Index);

DFL_NETS_INSTANTIATE(float)
DFL_NETS_INSTANTIATE(double)

}  // namespace dfl::nets
