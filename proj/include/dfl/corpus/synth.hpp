#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dfl/audio/audio.hpp"

namespace dfl::corpus {

struct Formant {
  double centre_hz = 0.0;
  double bandwidth_hz = 0.0;
};

/// Source-filter voice: glottal pulses at a jittered pitch through three
/// cascaded formant resonators.
struct SpeakerModel {
  std::string speaker_id;
  double pitch_hz = 120.0;
  double pitch_jitter = 0.02;     // relative per-period deviation
  double open_quotient = 0.6;     // glottal open phase as a fraction of the period
  std::array<Formant, 3> formants{{{500, 80}, {1500, 100}, {2500, 120}}};
  double vowel_spread = 0.12;     // relative per-syllable formant movement
  std::uint64_t prosody_seed = 0;

  /// Throws std::invalid_argument unless pitch is in [70, 300] Hz and the
  /// formants are strictly increasing below Nyquist.
  void validate(int sample_rate = 16000) const;
};

/// Draws a voice for `id`. The i-th of `count` voices is stratified so a
/// small inventory spreads over the pitch and formant ranges.
SpeakerModel sample_speaker(const std::string& id, int index, int count, std::uint64_t seed);

/// Syllables with random timing, pitch contour and vowel quality, separated
/// by short pauses. Peak-normalised to kPeak. Deterministic per (speaker, seed).
audio::AudioBuffer synth_utterance(const SpeakerModel& speaker, double duration_s, std::uint64_t seed,
                                   int sample_rate = 16000);

inline constexpr double kPeak = 0.3;

/// splitmix64 finaliser; used to derive independent per-item seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace dfl::corpus
