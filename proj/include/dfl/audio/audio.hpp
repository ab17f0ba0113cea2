#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace dfl::audio {

class AudioFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AudioBuffer {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 16000;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws std::invalid_argument when empty, non-finite, or sample_rate <= 0.
  void validate() const;
};

/// PCM16 mono little-endian RIFF/WAVE. Samples are scaled by 1/32768.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio);
AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

/// Mean of squared samples.
double signal_power(std::span<const double> samples);

/// Repeats or crops `noise` to exactly `length` samples.
std::vector<double> fit_length(std::span<const double> noise, std::size_t length);

struct Mixture {
  AudioBuffer audio;
  double noise_gain = 0.0;  // g in clean + g * noise
  std::vector<double> scaled_noise;
};

/// clean + g * noise with g = sqrt(P_clean / (P_noise * 10^(snr_db / 10))).
/// The noise is looped or cropped to the clean length first.
Mixture mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db);

}  // namespace dfl::audio
