#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dfl/nets/layers.hpp"

namespace dfl::nets {

struct SpeakerNetConfig {
  int bands = 40;
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64, 128};
  int blocks_per_stage = 1;
  int lde_components = 16;
  int embed_dim = 128;
  int speakers = 20;
  int margin = 2;
  double logit_scale = 16.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SpeakerNetConfig& c);
void from_json(const nlohmann::json& j, SpeakerNetConfig& c);

/// The activations compared by the deep feature loss, in depth order.
template <typename Real>
struct SpeakerForward {
  std::vector<Var<Real>> taps;
  Var<Real> embedding;  // (N, embed_dim); also the last tap
};

/// Residual trunk -> frequency pooling -> LDE -> linear embedding, with an
/// angular-margin classification head used only in training.
template <typename Real>
class SpeakerNet {
 public:
  static constexpr int kTapCount = 6;

  SpeakerNet(const SpeakerNetConfig& config, std::uint64_t seed);
  SpeakerNet(const SpeakerNet&) = delete;
  SpeakerNet& operator=(const SpeakerNet&) = delete;

  const SpeakerNetConfig& config() const { return config_; }
  static std::vector<std::string> tap_names();

  /// x: (N, 1, F, T) unnormalized log-Mel; per-utterance mean normalization
  /// over time is applied inside the graph before the trunk.
  SpeakerForward<Real> forward(const Var<Real>& x, bool train) const;

  /// Mean angular-softmax loss over the batch for the given blend weight.
  Var<Real> classification_loss(const Var<Real>& embedding, const std::vector<int>& labels, double lambda) const;
  /// Cosine logits of every embedding against every class direction.
  Tensor<Real> class_cosines(const Tensor<Real>& embedding) const;

  ParameterStore<Real>& store() { return store_; }
  const ParameterStore<Real>& store() const { return store_; }

 private:
  struct ConvNorm {
    Conv2d<Real> conv;
    BatchNorm2d<Real> norm;
    Var<Real> operator()(const Var<Real>& x, bool train) const { return norm(conv(x), train); }
  };
  struct BasicBlock {
    ConvNorm first;
    ConvNorm second;
    bool project = false;
    ConvNorm shortcut;
  };

  SpeakerNetConfig config_;
  ParameterStore<Real> store_;
  ConvNorm stem_;
  std::vector<std::vector<BasicBlock>> stages_;
  Var<Real> lde_centers_;
  Var<Real> lde_log_scales_;
  Var<Real> lde_biases_;
  Linear<Real> embedding_;
  Var<Real> class_weights_;
};

}  // namespace dfl::nets
