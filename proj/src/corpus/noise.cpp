#include "dfl/corpus/noise.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "dfl/audio/features.hpp"
#include "dfl/corpus/synth.hpp"

namespace dfl::corpus {

namespace {

constexpr double kNoiseRms = 0.1;

void normalise_rms(std::vector<double>& x) {
  const double power = audio::signal_power(x);
  if (power <= 0.0) throw std::runtime_error("gen_noise: generated silence");
  const double gain = kNoiseRms / std::sqrt(power);
  for (auto& v : x) v *= gain;
}

std::vector<double> coloured_noise(std::size_t n, double slope_db_per_octave, std::mt19937_64& rng,
                                   int sample_rate) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int length = static_cast<int>(n);
  std::vector<std::complex<double>> half(static_cast<std::size_t>(length / 2 + 1));
  // |X(f)| proportional to f^(slope / 6.02), i.e. slope dB per doubling.
  const double exponent = slope_db_per_octave / (20.0 * std::log10(2.0));
  for (std::size_t k = 1; k < half.size(); ++k) {
    const double f = std::max(50.0, static_cast<double>(k) * sample_rate / length);
    const double amp = std::pow(f / 1000.0, exponent);
    half[k] = amp * std::complex<double>(normal(rng), normal(rng));
  }
  if (length % 2 == 0) half.back() = half.back().real();
  return audio::inverse_real_fft(half, length);
}

std::vector<double> music(std::size_t n, std::mt19937_64& rng, int sample_rate) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto span = [&](double lo, double hi) { return lo + (hi - lo) * uniform(rng); };
  std::vector<double> out(n, 0.0);

  const double rolloff = span(0.8, 1.6);
  const bool plucked = uniform(rng) < 0.5;
  const double decay_s = span(0.3, 1.0);
  const int harmonics = 8;
  std::vector<double> harmonic_gain(harmonics);
  for (int h = 0; h < harmonics; ++h) harmonic_gain[h] = span(0.5, 1.0) / std::pow(h + 1.0, rolloff);

  std::size_t cursor = 0;
  int key = 45 + static_cast<int>(rng() % 12);
  while (cursor < n) {
    const auto length = static_cast<std::size_t>(span(0.4, 1.0) * sample_rate);
    // Diatonic-ish walk of chord roots around the key.
    static constexpr int kSteps[] = {0, 2, 4, 5, 7, 9};
    const int root = key + kSteps[rng() % 6];
    const bool minor = uniform(rng) < 0.4;
    std::vector<int> notes = {root - 12, root, root + (minor ? 3 : 4), root + 7};
    if (uniform(rng) < 0.3) notes.push_back(root + 10);

    const auto end = std::min(n, cursor + length);
    const double release = 0.03 * sample_rate;
    for (int note : notes) {
      const double f0 = 440.0 * std::pow(2.0, (note - 69) / 12.0) * (1.0 + 0.002 * span(-1.0, 1.0));
      const double level = span(0.6, 1.0);
      const double start_phase = span(0.0, 1.0);
      for (int h = 0; h < harmonics; ++h) {
        const double f = f0 * (h + 1);
        if (f >= 0.45 * sample_rate) break;
        const double w = 2.0 * std::numbers::pi * f / sample_rate;
        for (std::size_t i = cursor; i < end; ++i) {
          const double t = static_cast<double>(i - cursor);
          double env = std::min(1.0, t / (0.01 * sample_rate)) * std::min(1.0, (end - i) / release);
          if (plucked) env *= std::exp(-t / (decay_s * sample_rate));
          out[i] += level * harmonic_gain[h] * env * std::sin(w * t + 2.0 * std::numbers::pi * start_phase * (h + 1));
        }
      }
    }
    cursor = end;
    if (uniform(rng) < 0.2) key += static_cast<int>(rng() % 5) - 2;
  }
  return out;
}

std::vector<double> babble(std::size_t n, const NoiseSpec& spec, int sample_rate) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0xBABB1E));
  std::uniform_real_distribution<double> gain(0.5, 1.0);
  std::vector<double> out(n, 0.0);
  const auto ids = babble_talker_ids(spec.seed, spec.babble_talkers);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto talker = sample_speaker(ids[j], -1, 0, mix_seed(spec.seed, j));
    const double seconds = std::max(1.0, static_cast<double>(n) / sample_rate);
    const auto voice = synth_utterance(talker, seconds, mix_seed(spec.seed, 1000 + j), sample_rate);
    const double g = gain(rng);
    for (std::size_t i = 0; i < n && i < voice.samples.size(); ++i) out[i] += g * voice.samples[i];
  }
  return out;
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::noise: return "noise";
    case NoiseKind::music: return "music";
    case NoiseKind::babble: return "babble";
  }
  throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "noise") return NoiseKind::noise;
  if (name == "music") return NoiseKind::music;
  if (name == "babble") return NoiseKind::babble;
  throw std::invalid_argument("unknown noise kind: " + name);
}

std::vector<std::string> babble_talker_ids(std::uint64_t seed, int talkers) {
  std::vector<std::string> ids;
  char buf[64];
  for (int j = 0; j < talkers; ++j) {
    std::snprintf(buf, sizeof buf, "%s%016llx-%02d", kBabblePrefix, static_cast<unsigned long long>(seed), j);
    ids.emplace_back(buf);
  }
  return ids;
}

audio::AudioBuffer gen_noise(const NoiseSpec& spec, int sample_rate) {
  if (!(spec.duration_s > 0.0)) throw std::invalid_argument("gen_noise: duration must be positive");
  if (spec.kind == NoiseKind::babble && spec.babble_talkers < 6)
    throw std::invalid_argument("gen_noise: babble needs at least 6 talkers");
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * sample_rate));
  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind)));

  std::vector<double> x;
  switch (spec.kind) {
    case NoiseKind::noise: {
      std::uniform_real_distribution<double> slope(spec.slope_min, spec.slope_max);
      const double s = spec.slope_db_per_octave ? *spec.slope_db_per_octave : slope(rng);
      x = coloured_noise(n, s, rng, sample_rate);
      break;
    }
    case NoiseKind::music: x = music(n, rng, sample_rate); break;
    case NoiseKind::babble: x = babble(n, spec, sample_rate); break;
  }
  normalise_rms(x);
  return {std::move(x), sample_rate};
}

}  // namespace dfl::corpus
