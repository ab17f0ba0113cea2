#include "dfl/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dfl::corpus {

namespace {

double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

// Glottal flow over one period, phase in [0, 1).
double glottal_flow(double phase, double open_quotient) {
  const double rise = 0.66 * open_quotient;
  const double fall = 0.34 * open_quotient;
  if (phase < rise) return 0.5 * (1.0 - std::cos(std::numbers::pi * phase / rise));
  if (phase < rise + fall) return std::cos(0.5 * std::numbers::pi * (phase - rise) / fall);
  return 0.0;
}

// Two-pole resonator with unit gain at DC.
struct Resonator {
  double a0 = 1.0, b1 = 0.0, b2 = 0.0;
  double y1 = 0.0, y2 = 0.0;

  void tune(double centre_hz, double bandwidth_hz, int sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
    b1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * centre_hz / sample_rate);
    b2 = -r * r;
    a0 = 1.0 - b1 - b2;
  }
  double operator()(double x) {
    const double y = a0 * x + b1 * y1 + b2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

double raised_cosine(double x) { return 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(x, 0.0, 1.0)); }

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void SpeakerModel::validate(int sample_rate) const {
  if (!(pitch_hz >= 70.0 && pitch_hz <= 300.0)) throw std::invalid_argument("speaker: pitch outside [70, 300] Hz");
  if (pitch_jitter < 0.0 || pitch_jitter > 0.2) throw std::invalid_argument("speaker: pitch jitter outside [0, 0.2]");
  if (open_quotient <= 0.0 || open_quotient > 1.0) throw std::invalid_argument("speaker: open quotient outside (0, 1]");
  double previous = 0.0;
  for (const auto& f : formants) {
    if (f.centre_hz <= previous) throw std::invalid_argument("speaker: formants must be strictly increasing");
    if (f.bandwidth_hz <= 0.0) throw std::invalid_argument("speaker: formant bandwidth must be positive");
    previous = f.centre_hz;
  }
  if (previous >= 0.5 * sample_rate) throw std::invalid_argument("speaker: formant above Nyquist");
}

SpeakerModel sample_speaker(const std::string& id, int index, int count, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, fnv1a(id)));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::array<double, 5> u{};
  if (index >= 0 && count > 0) {
    // Randomly shifted Halton points: stratified but still seed dependent.
    constexpr std::array<std::uint64_t, 5> bases = {2, 3, 5, 7, 11};
    for (std::size_t d = 0; d < u.size(); ++d) {
      const double shifted = halton(static_cast<std::uint64_t>(index) + 1, bases[d]) + uniform(rng);
      u[d] = shifted - std::floor(shifted);
    }
  } else {
    for (auto& v : u) v = uniform(rng);
  }

  SpeakerModel s;
  s.speaker_id = id;
  s.pitch_hz = 75.0 * std::pow(280.0 / 75.0, u[0]);
  s.formants[0] = {300.0 + 500.0 * u[1], 50.0 + 60.0 * uniform(rng)};
  s.formants[1] = {1000.0 + 1200.0 * u[2], 70.0 + 80.0 * uniform(rng)};
  s.formants[2] = {2300.0 + 1000.0 * u[3], 90.0 + 110.0 * uniform(rng)};
  s.open_quotient = 0.45 + 0.3 * u[4];
  s.pitch_jitter = 0.01 + 0.02 * uniform(rng);
  s.vowel_spread = 0.08 + 0.08 * uniform(rng);
  s.prosody_seed = rng();
  return s;
}

audio::AudioBuffer synth_utterance(const SpeakerModel& speaker, double duration_s, std::uint64_t seed,
                                   int sample_rate) {
  if (!(duration_s >= 1.0)) throw std::invalid_argument("synth_utterance: duration must be at least 1 s");
  speaker.validate(sample_rate);
  std::mt19937_64 rng(mix_seed(speaker.prosody_seed, seed));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto span = [&](double lo, double hi) { return lo + (hi - lo) * uniform(rng); };

  const auto n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  std::vector<double> out(n, 0.0);
  std::array<Resonator, 3> tract;
  const double nyquist_guard = 0.45 * sample_rate;

  double phase = 0.0;
  double period_scale = 1.0;
  double previous_flow = 0.0;
  std::size_t cursor = static_cast<std::size_t>(span(0.05, 0.2) * sample_rate);
  int syllables_left = 4 + static_cast<int>(rng() % 3);

  while (cursor < n) {
    const auto length = static_cast<std::size_t>(span(0.12, 0.32) * sample_rate);
    const double amplitude = span(0.5, 1.0);
    const double f_start = speaker.pitch_hz * std::exp(0.08 * normal(rng));
    const double f_end = f_start * std::exp(span(-0.15, 0.1));

    double lower = 0.0;
    for (std::size_t i = 0; i < tract.size(); ++i) {
      const auto& base = speaker.formants[i];
      const double spread = i == 2 ? 0.5 * speaker.vowel_spread : speaker.vowel_spread;
      double centre = base.centre_hz * (1.0 + spread * span(-1.0, 1.0));
      centre = std::clamp(centre, lower + 150.0, nyquist_guard);
      tract[i].tune(centre, base.bandwidth_hz, sample_rate);
      lower = centre;
    }

    const double attack = 0.03 * sample_rate;
    const double release = 0.05 * sample_rate;
    for (std::size_t j = 0; j < length && cursor + j < n; ++j) {
      const double progress = static_cast<double>(j) / static_cast<double>(length);
      const double f0 = f_start + (f_end - f_start) * progress;
      phase += f0 * period_scale / sample_rate;
      if (phase >= 1.0) {
        phase -= std::floor(phase);
        period_scale = std::clamp(1.0 + speaker.pitch_jitter * normal(rng), 0.8, 1.2);
      }
      const double flow = glottal_flow(phase, speaker.open_quotient);
      const double envelope =
          amplitude * raised_cosine(j / attack) * raised_cosine(static_cast<double>(length - j) / release);
      const double source = (flow - previous_flow) + 0.01 * flow * normal(rng);
      previous_flow = flow;
      double y = envelope * source;
      for (auto& r : tract) y = r(y);
      out[cursor + j] = y;
    }
    cursor += length;
    // Let the tract ring out into the pause.
    const double pause = --syllables_left > 0 ? span(0.03, 0.15) : span(0.2, 0.45);
    if (syllables_left <= 0) syllables_left = 4 + static_cast<int>(rng() % 3);
    const auto gap = static_cast<std::size_t>(pause * sample_rate);
    for (std::size_t j = 0; j < gap && cursor + j < n; ++j) {
      double y = 0.0;
      for (auto& r : tract) y = r(y);
      out[cursor + j] = y;
    }
    cursor += gap;
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (auto& v : out) v *= kPeak / peak;
  // Faint breath floor so pauses are not digital silence.
  for (auto& v : out) v += 3e-4 * normal(rng);
  return {std::move(out), sample_rate};
}

}  // namespace dfl::corpus
