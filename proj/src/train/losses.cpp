#include "dfl/train/losses.hpp"

#include <stdexcept>

namespace dfl::train {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::fl:
      return "fl";
    case LossKind::dfl:
      return "dfl";
    case LossKind::dfl_fl:
      return "dfl+fl";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "fl") return LossKind::fl;
  if (name == "dfl") return LossKind::dfl;
  if (name == "dfl+fl" || name == "dfl_fl") return LossKind::dfl_fl;
  throw std::invalid_argument("unknown loss: " + name + " (expected fl, dfl or dfl+fl)");
}

template <typename Real>
TapFn<Real> speaker_taps(const nets::SpeakerNet<Real>& net) {
  return [&net](const Var<Real>& x) { return net.forward(x, false).taps; };
}

template <typename Real>
Var<Real> feature_loss(const Var<Real>& enhanced, const Var<Real>& clean) {
  return ad::l1_distance(clean, enhanced);
}

template <typename Real>
Var<Real> deep_feature_loss(const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps) {
  if (!taps) throw std::invalid_argument("deep feature loss needs an auxiliary network");
  ad::require_same_shape(enhanced.shape(), clean.shape(), "deep_feature_loss");
  std::vector<Var<Real>> clean_taps;
  {
    ad::NoGradGuard no_grad;
    clean_taps = taps(clean);
  }
  const auto enhanced_taps = taps(enhanced);
  if (enhanced_taps.size() != clean_taps.size() || enhanced_taps.empty())
    throw std::logic_error("tap function returned inconsistent activation lists");
  Var<Real> total;
  for (std::size_t i = 0; i < clean_taps.size(); ++i) {
    auto term = ad::l1_distance(Var<Real>::constant(clean_taps[i].value()), enhanced_taps[i]);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

template <typename Real>
Var<Real> combined_loss(const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps) {
  return ad::add(deep_feature_loss(enhanced, clean, taps), feature_loss(enhanced, clean));
}

template <typename Real>
Var<Real> enhancement_loss(LossKind kind, const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps) {
  switch (kind) {
    case LossKind::fl:
      return feature_loss(enhanced, clean);
    case LossKind::dfl:
      return deep_feature_loss(enhanced, clean, taps);
    case LossKind::dfl_fl:
      return combined_loss(enhanced, clean, taps);
  }
  throw std::invalid_argument("bad loss kind");
}

#define DFL_LOSSES_INSTANTIATE(R)                                                                  \
  template TapFn<R> speaker_taps<R>(const nets::SpeakerNet<R>&);                                   \
  template Var<R> feature_loss<R>(const Var<R>&, const Var<R>&);                                   \
  template Var<R> deep_feature_loss<R>(const Var<R>&, const Var<R>&, const TapFn<R>&);             \
  template Var<R> combined_loss<R>(const Var<R>&, const Var<R>&, const TapFn<R>&);                 \
  template Var<R> enhancement_loss<R>(LossKind, const Var<R>&, const Var<R>&, const TapFn<R>&);

DFL_LOSSES_INSTANTIATE(float)
DFL_LOSSES_INSTANTIATE(double)

}  // namespace dfl::train
