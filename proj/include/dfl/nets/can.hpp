#pragma once

#include <vector>

#include "dfl/nets/enhancer.hpp"

namespace dfl::nets {

enum class TseMode {
  time_broadcast,  // gates per (channel, frequency) from time-pooled statistics
  per_frame,       // gates per (channel, frequency, frame) from each frame's own column
};
std::string to_string(TseMode mode);
TseMode tse_mode_from_string(const std::string& name);

struct CanConfig {
  int bands = 40;
  int layers = 8;
  int channels = 45;
  std::vector<int> dilations = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> tse_positions = {2, 5, 8};  // 1-based layer indices
  int tse_reduction = 8;
  TseMode tse_mode = TseMode::time_broadcast;
  double leaky_slope = 0.2;

  /// Throws std::invalid_argument on an invalid dilation or TSE schedule.
  void validate() const;
  /// 1 + 2 * sum of dilations.
  int analytic_receptive_field() const;
};

void to_json(nlohmann::json& j, const CanConfig& c);
void from_json(const nlohmann::json& j, CanConfig& c);

template <typename Real>
class ContextAggregationNet final : public Enhancer<Real> {
 public:
  ContextAggregationNet(const CanConfig& config, std::uint64_t seed);

  EnhancerKind kind() const override { return EnhancerKind::can; }
  nlohmann::json config_json() const override { return config_; }
  Index context_frames() const override { return config_.analytic_receptive_field(); }
  const CanConfig& config() const { return config_; }

  Var<Real> hidden(const Var<Real>& x, bool train) const override;
  Var<Real> probe_hidden(const Var<Real>& x) const override;

 private:
  struct Tse {
    Linear<Real> squeeze;
    Linear<Real> excite;
  };
  struct Block {
    Conv2d<Real> conv;
    AdaptiveBatchNorm<Real> norm;
    int tse = -1;  // index into tse_ or -1
  };

  // frozen_gates: when non-null, TSE gates are taken from it instead of
  // being computed; record_gates: when non-null, computed gates are stored.
  Var<Real> run(const Var<Real>& x, bool train, const std::vector<Tensor<Real>>* frozen_gates,
                std::vector<Tensor<Real>>* record_gates) const;
  Var<Real> gates(const Tse& tse, const Var<Real>& h) const;

  CanConfig config_;
  BatchNorm2d<Real> input_norm_;
  std::vector<Block> blocks_;
  std::vector<Tse> tse_;
};

}  // namespace dfl::nets
