#include "dfl/nets/speaker.hpp"

#include <stdexcept>

namespace dfl::nets {

void SpeakerNetConfig::validate() const {
  if (bands < 1 || stem_channels < 1 || blocks_per_stage < 1) throw std::invalid_argument("speaker net: sizes must be positive");
  if (stage_channels.size() != 4) throw std::invalid_argument("speaker net: exactly four residual stages are tapped");
  for (int c : stage_channels)
    if (c < 1) throw std::invalid_argument("speaker net: stage widths must be positive");
  if (lde_components < 1) throw std::invalid_argument("speaker net: LDE needs at least one component");
  if (embed_dim < 1) throw std::invalid_argument("speaker net: embed_dim must be positive");
  if (speakers < 2) throw std::invalid_argument("speaker net: need at least two speakers");
  if (margin < 1) throw std::invalid_argument("speaker net: angular margin must be >= 1");
}

void to_json(nlohmann::json& j, const SpeakerNetConfig& c) {
  j = {{"bands", c.bands},
       {"stem_channels", c.stem_channels},
       {"stage_channels", c.stage_channels},
       {"blocks_per_stage", c.blocks_per_stage},
       {"lde_components", c.lde_components},
       {"embed_dim", c.embed_dim},
       {"speakers", c.speakers},
       {"margin", c.margin},
       {"logit_scale", c.logit_scale}};
}

void from_json(const nlohmann::json& j, SpeakerNetConfig& c) {
  c.bands = j.value("bands", c.bands);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.stage_channels = j.value("stage_channels", c.stage_channels);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.lde_components = j.value("lde_components", c.lde_components);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.speakers = j.value("speakers", c.speakers);
  c.margin = j.value("margin", c.margin);
  c.logit_scale = j.value("logit_scale", c.logit_scale);
}

template <typename Real>
std::vector<std::string> SpeakerNet<Real>::tap_names() {
  return {"stem", "stage1", "stage2", "stage3", "stage4", "embedding"};
}

template <typename Real>
SpeakerNet<Real>::SpeakerNet(const SpeakerNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto conv_norm = [&](const std::string& name, Index cin, Index cout, Index k, ConvSpec spec) {
    return ConvNorm{Conv2d<Real>::make(store_, name + ".conv", cin, cout, k, k, spec, rng, false),
                    BatchNorm2d<Real>::make(store_, name + ".bn", cout)};
  };
  stem_ = conv_norm("aux.stem", 1, config_.stem_channels, 3, ConvSpec::same(3, 3));
  Index width = config_.stem_channels;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    const Index out = config_.stage_channels[s];
    std::vector<BasicBlock> blocks;
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const std::string name = "aux.stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      const Index stride = (s > 0 && b == 0) ? 2 : 1;
      BasicBlock blk;
      blk.first = conv_norm(name + ".a", width, out, 3, ConvSpec::same(3, 3, 1, 1, stride, stride));
      blk.second = conv_norm(name + ".b", out, out, 3, ConvSpec::same(3, 3));
      blk.project = stride != 1 || width != out;
      if (blk.project) blk.shortcut = conv_norm(name + ".proj", width, out, 1, ConvSpec{stride, stride, 1, 1, 0, 0});
      blocks.push_back(blk);
      width = out;
    }
    stages_.push_back(std::move(blocks));
  }
  const Index k = config_.lde_components;
  lde_centers_ = store_.add_parameter("aux.lde.centers", normal_tensor<Real>({k, width}, 0.5, rng));
  lde_log_scales_ = store_.add_parameter("aux.lde.log_scales", Tensor<Real>({k}));
  lde_biases_ = store_.add_parameter("aux.lde.biases", Tensor<Real>({k}));
  embedding_ = Linear<Real>::make(store_, "aux.embedding", k * width, config_.embed_dim, rng);
  class_weights_ =
      store_.add_parameter("aux.classifier.weight", normal_tensor<Real>({config_.speakers, config_.embed_dim}, 1.0, rng));
}

template <typename Real>
SpeakerForward<Real> SpeakerNet<Real>::forward(const Var<Real>& x, bool train) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != config_.bands)
    throw ad::ShapeError("speaker net input must be (N, 1, " + std::to_string(config_.bands) + ", T), got " +
                         ad::to_string(s));
  SpeakerForward<Real> out;
  Var<Real> h = ad::relu(stem_(ad::mean_normalize(x), train));
  out.taps.push_back(h);
  for (const auto& stage : stages_) {
    for (const auto& blk : stage) {
      const auto residual = blk.project ? blk.shortcut(h, train) : h;
      h = ad::relu(ad::add(blk.second(ad::relu(blk.first(h, train)), train), residual));
    }
    out.taps.push_back(h);
  }
  const auto frames = ad::transpose_last2(ad::mean_freq(h));  // (N, T', D)
  const auto pooled = ad::lde_pool(frames, lde_centers_, ad::exp(lde_log_scales_), lde_biases_);
  out.embedding = embedding_(pooled);
  out.taps.push_back(out.embedding);
  return out;
}

template <typename Real>
Var<Real> SpeakerNet<Real>::classification_loss(const Var<Real>& embedding, const std::vector<int>& labels,
                                                 double lambda) const {
  return ad::angular_softmax_loss(embedding, class_weights_, labels,
                                  ad::AngularMargin{config_.margin, lambda, config_.logit_scale});
}

template <typename Real>
Tensor<Real> SpeakerNet<Real>::class_cosines(const Tensor<Real>& embedding) const {
  return ad::cosine_logits(embedding, class_weights_.value());
}

template class SpeakerNet<float>;
template class SpeakerNet<double>;

}  // namespace dfl::nets
