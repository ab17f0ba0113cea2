#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfl/autodiff/ops.hpp"
#include "dfl/nets/speaker.hpp"

namespace dfl::train {

using ad::Var;

enum class LossKind { fl, dfl, dfl_fl };
std::string to_string(LossKind kind);
/// Accepts "fl", "dfl", "dfl+fl".
LossKind loss_kind_from_string(const std::string& name);
inline bool needs_aux(LossKind kind) { return kind != LossKind::fl; }

/// Maps a feature batch to the activations the deep feature loss compares.
template <typename Real>
using TapFn = std::function<std::vector<Var<Real>>(const Var<Real>&)>;

/// Eval-mode taps of a frozen speaker network (mean normalization included).
template <typename Real>
TapFn<Real> speaker_taps(const nets::SpeakerNet<Real>& net);

/// ||clean - enhanced||_{1,1}
template <typename Real>
Var<Real> feature_loss(const Var<Real>& enhanced, const Var<Real>& clean);

/// sum_i ||a_i(clean) - a_i(enhanced)||_{1,1}; the clean branch carries no graph.
template <typename Real>
Var<Real> deep_feature_loss(const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps);

/// deep_feature_loss + feature_loss with unit weights.
template <typename Real>
Var<Real> combined_loss(const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps);

/// Dispatches on `kind`; `taps` may be empty only for LossKind::fl.
template <typename Real>
Var<Real> enhancement_loss(LossKind kind, const Var<Real>& enhanced, const Var<Real>& clean, const TapFn<Real>& taps);

}  // namespace dfl::train
