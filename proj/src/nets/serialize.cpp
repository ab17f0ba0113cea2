#include "dfl/nets/serialize.hpp"

namespace dfl::nets {

template <typename Real>
std::unique_ptr<Enhancer<Real>> make_enhancer(EnhancerKind kind, const nlohmann::json& config, std::uint64_t seed) {
  if (kind == EnhancerKind::can) return std::make_unique<ContextAggregationNet<Real>>(config.get<CanConfig>(), seed);
  return std::make_unique<EncoderDecoderNet<Real>>(config.get<EdnConfig>(), seed);
}

template <typename Real>
void put_enhancer(ad::Checkpoint& ckpt, const Enhancer<Real>& net) {
  ckpt.header["network"] = to_string(net.kind());
  ckpt.header["config"] = net.config_json();
  ad::put_store(ckpt, net.store());
}

template <typename Real>
std::unique_ptr<Enhancer<Real>> get_enhancer(const ad::Checkpoint& ckpt) {
  if (!ckpt.header.contains("network") || !ckpt.header.contains("config"))
    throw ad::CheckpointError("checkpoint header lacks network/config");
  const auto name = ckpt.header["network"].get<std::string>();
  if (name == "speaker") throw ad::CheckpointError("checkpoint holds a speaker network, not an enhancer");
  auto net = make_enhancer<Real>(enhancer_kind_from_string(name), ckpt.header["config"], 0);
  ad::get_store(ckpt, net->store());
  return net;
}

template <typename Real>
void put_speaker_net(ad::Checkpoint& ckpt, const SpeakerNet<Real>& net) {
  ckpt.header["network"] = "speaker";
  ckpt.header["config"] = net.config();
  ckpt.header["taps"] = SpeakerNet<Real>::tap_names();
  ad::put_store(ckpt, net.store());
}

template <typename Real>
std::unique_ptr<SpeakerNet<Real>> get_speaker_net(const ad::Checkpoint& ckpt) {
  if (ckpt.header.value("network", std::string()) != "speaker")
    throw ad::CheckpointError("checkpoint does not hold a speaker network");
  auto net = std::make_unique<SpeakerNet<Real>>(ckpt.header.at("config").get<SpeakerNetConfig>(), 0);
  if (ckpt.header.contains("taps") && ckpt.header["taps"].get<std::vector<std::string>>() != SpeakerNet<Real>::tap_names())
    throw ad::CheckpointError("checkpoint tap layers do not match this build");
  ad::get_store(ckpt, net->store());
  return net;
}

#define DFL_SERIALIZE_INSTANTIATE(R)                                                                  \
  template std::unique_ptr<Enhancer<R>> make_enhancer<R>(EnhancerKind, const nlohmann::json&, std::uint64_t); \
  template void put_enhancer<R>(ad::Checkpoint&, const Enhancer<R>&);                                 \
  template std::unique_ptr<Enhancer<R>> get_enhancer<R>(const ad::Checkpoint&);                       \
  template void put_speaker_net<R>(ad::Checkpoint&, const SpeakerNet<R>&);                            \
  template std::unique_ptr<SpeakerNet<R>> get_speaker_net<R>(const ad::Checkpoint&);

DFL_SERIALIZE_INSTANTIATE(float)
DFL_SERIALIZE_INSTANTIATE(double)

}  // namespace dfl::nets
