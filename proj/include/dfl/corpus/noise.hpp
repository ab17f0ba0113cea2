#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dfl/audio/audio.hpp"

namespace dfl::corpus {

enum class NoiseKind { noise, music, babble };
std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::noise;
  double duration_s = 1.0;
  std::uint64_t seed = 0;
  int babble_talkers = 6;
  /// Long-term spectral slope of the coloured noise; drawn from
  /// [slope_min, slope_max] per seed when unset.
  std::optional<double> slope_db_per_octave;
  double slope_min = -6.0;
  double slope_max = 0.0;
};

/// Prefix of the babble talkers' ids; corpus speakers never use it.
inline constexpr const char* kBabblePrefix = "babble-";

/// RMS-normalised to 0.1. Deterministic per spec.
audio::AudioBuffer gen_noise(const NoiseSpec& spec, int sample_rate = 16000);

/// Ids of the talkers mixed into a babble noise with the given seed.
std::vector<std::string> babble_talker_ids(std::uint64_t seed, int talkers);

}  // namespace dfl::corpus
