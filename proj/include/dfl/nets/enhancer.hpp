#pragma once

#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "dfl/nets/layers.hpp"

namespace dfl::nets {

enum class EnhancerKind { can, edn };
std::string to_string(EnhancerKind kind);
EnhancerKind enhancer_kind_from_string(const std::string& name);

/// Lower bound on the linear-domain mask before the log.
inline constexpr double kMaskFloor = 1e-6;

/// F_noisy + log(max(2 * sigmoid(logits), floor)). A zero logit is the identity mask.
template <typename Real>
Var<Real> apply_log_mask(const Var<Real>& noisy, const Var<Real>& logits);

/// Fully convolutional mask estimator over (N, 1, F, T) log-Mel features.
template <typename Real>
class Enhancer {
 public:
  virtual ~Enhancer() = default;

  virtual EnhancerKind kind() const = 0;
  virtual nlohmann::json config_json() const = 0;
  /// Temporal context implied by the architecture.
  virtual Index context_frames() const = 0;

  /// Last hidden feature map before the 1x1 mask head: (N, C, F, T).
  virtual Var<Real> hidden(const Var<Real>& x, bool train) const = 0;
  /// Hidden features with every input-global statistic held fixed, so the
  /// gradient w.r.t. x reflects only the convolutional context.
  virtual Var<Real> probe_hidden(const Var<Real>& x) const { return hidden(x, false); }

  Var<Real> mask_logits(const Var<Real>& x, bool train) const { return head_(hidden(x, train)); }
  Var<Real> enhance(const Var<Real>& noisy, bool train) const;

  ParameterStore<Real>& store() { return store_; }
  const ParameterStore<Real>& store() const { return store_; }

 protected:
  void require_input(const Var<Real>& x, Index bands) const;

  ParameterStore<Real> store_;
  Conv2d<Real> head_;
};

/// Width of the input-time window whose entries influence the centre output
/// frame, measured from the gradient of the hidden features.
template <typename Real>
Index receptive_field(const std::function<Var<Real>(const Var<Real>&)>& hidden, Index bands, Index frames,
                      std::uint64_t seed = 7);

template <typename Real>
Index receptive_field(const Enhancer<Real>& net, Index bands, Index frames);

}  // namespace dfl::nets
