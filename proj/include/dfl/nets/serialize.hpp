#pragma once

#include <memory>

#include "dfl/autodiff/checkpoint.hpp"
#include "dfl/nets/can.hpp"
#include "dfl/nets/edn.hpp"
#include "dfl/nets/speaker.hpp"

// Architecture headers for network checkpoints:
//   {"network": "can" | "edn" | "speaker", "config": {...}, "taps": [...]}
namespace dfl::nets {

template <typename Real>
std::unique_ptr<Enhancer<Real>> make_enhancer(EnhancerKind kind, const nlohmann::json& config, std::uint64_t seed);

template <typename Real>
void put_enhancer(ad::Checkpoint& ckpt, const Enhancer<Real>& net);
/// Rebuilds the architecture from the header and loads the weights.
template <typename Real>
std::unique_ptr<Enhancer<Real>> get_enhancer(const ad::Checkpoint& ckpt);

template <typename Real>
void put_speaker_net(ad::Checkpoint& ckpt, const SpeakerNet<Real>& net);
template <typename Real>
std::unique_ptr<SpeakerNet<Real>> get_speaker_net(const ad::Checkpoint& ckpt);

}  // namespace dfl::nets
