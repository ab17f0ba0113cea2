#pragma once

#include <vector>

#include "dfl/nets/enhancer.hpp"

namespace dfl::nets {

/// Encoder (frequency-strided convs), residual bottleneck, decoder
/// (nearest upsampling + conv) with one skip from the first encoder layer.
struct EdnConfig {
  int bands = 40;
  int channels = 90;
  int input_kernel_f = 7;
  int input_kernel_t = 17;
  int down_stages = 2;
  int residual_blocks = 6;
  int output_kernel = 7;

  void validate() const;
  /// Temporal context implied by the kernel schedule.
  int analytic_receptive_field() const;
};

void to_json(nlohmann::json& j, const EdnConfig& c);
void from_json(const nlohmann::json& j, EdnConfig& c);

template <typename Real>
class EncoderDecoderNet final : public Enhancer<Real> {
 public:
  EncoderDecoderNet(const EdnConfig& config, std::uint64_t seed);

  EnhancerKind kind() const override { return EnhancerKind::edn; }
  nlohmann::json config_json() const override { return config_; }
  Index context_frames() const override { return config_.analytic_receptive_field(); }
  const EdnConfig& config() const { return config_; }

  Var<Real> hidden(const Var<Real>& x, bool train) const override;

 private:
  struct ConvNorm {
    Conv2d<Real> conv;
    BatchNorm2d<Real> norm;
    Var<Real> operator()(const Var<Real>& x, bool train) const { return norm(conv(x), train); }
  };
  struct Residual {
    ConvNorm first;
    ConvNorm second;
  };

  EdnConfig config_;
  BatchNorm2d<Real> input_norm_;
  ConvNorm input_;
  std::vector<ConvNorm> down_;
  std::vector<Residual> residual_;
  std::vector<ConvNorm> up_;
  ConvNorm output_;
};

}  // namespace dfl::nets
