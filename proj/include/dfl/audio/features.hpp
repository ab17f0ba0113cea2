#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfl/audio/audio.hpp"

namespace dfl::audio {

struct StftConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;

  int window_length(int sample_rate) const;
  int hop_length(int sample_rate) const;
};

/// Bin-major complex spectrum: values[k * frames + t].
struct Spectrogram {
  std::int64_t bins = 0;
  std::int64_t frames = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> at(std::int64_t k, std::int64_t t) const { return values[k * frames + t]; }
};

/// Symmetric Hann window of the given length.
std::vector<double> hann_window(int length);

/// Frames start at multiples of the hop; the final partial frame is dropped.
/// Throws std::invalid_argument when the audio is shorter than one window.
Spectrogram stft(const AudioBuffer& audio, const StftConfig& config = {});

/// Real inverse DFT of bins 0..n/2, scaled by 1/n so it inverts the forward transform.
std::vector<double> inverse_real_fft(std::span<const std::complex<double>> half_spectrum, int n);

std::int64_t frame_count(std::size_t samples, const StftConfig& config, int sample_rate);

struct MelConfig {
  int bands = 40;
  double f_min = 20.0;
  double f_max = 7600.0;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with centres equally spaced on the mel scale.
class MelFilterbank {
 public:
  MelFilterbank(const MelConfig& config, int n_fft, int sample_rate);

  int bands() const { return bands_; }
  int bins() const { return bins_; }
  double weight(int band, int bin) const { return weights_[static_cast<std::size_t>(band) * bins_ + bin]; }

 private:
  int bands_;
  int bins_;
  std::vector<double> weights_;
};

enum class FeatureDomain : std::uint8_t { log_mel = 1, mean_normalized_log_mel = 2 };
std::string to_string(FeatureDomain domain);

/// Band-major feature matrix: values[f * frames + t].
struct FeatureMatrix {
  std::int64_t bands = 0;
  std::int64_t frames = 0;
  FeatureDomain domain = FeatureDomain::log_mel;
  std::vector<double> values;

  double& at(std::int64_t f, std::int64_t t) { return values[f * frames + t]; }
  double at(std::int64_t f, std::int64_t t) const { return values[f * frames + t]; }
};

inline constexpr double kLogFloor = 1e-10;

/// log(max(sum_k w[f][k] |X[k][t]|^2, floor)).
FeatureMatrix log_mel(const Spectrogram& spec, const MelFilterbank& bank, double floor = kLogFloor);

/// Subtracts each band's mean over time.
FeatureMatrix mean_normalize(const FeatureMatrix& features);

struct FeatureConfig {
  StftConfig stft;
  MelConfig mel;
  double floor = kLogFloor;
};

FeatureMatrix extract_log_mel(const AudioBuffer& audio, const FeatureConfig& config = {});

}  // namespace dfl::audio
