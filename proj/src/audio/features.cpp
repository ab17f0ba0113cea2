#include "dfl/audio/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace dfl::audio {

namespace {

// FFTW's planner is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(int n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n_, in_.get(), out_.get(), FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("fftw: planning failed");
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  const fftw_complex* output() const { return out_.get(); }
  void execute() { fftw_execute(plan_); }

 private:
  int n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

class InverseRealFft {
 public:
  explicit InverseRealFft(int n)
      : in_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
        out_(static_cast<double*>(fftw_malloc(sizeof(double) * n))) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_c2r_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("fftw: planning failed");
  }
  ~InverseRealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  InverseRealFft(const InverseRealFft&) = delete;
  InverseRealFft& operator=(const InverseRealFft&) = delete;

  fftw_complex* input() { return in_.get(); }
  const double* output() const { return out_.get(); }
  void execute() { fftw_execute(plan_); }

 private:
  std::unique_ptr<fftw_complex, FftwFree> in_;
  std::unique_ptr<double, FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

}  // namespace

std::vector<double> inverse_real_fft(std::span<const std::complex<double>> half_spectrum, int n) {
  if (n < 1 || half_spectrum.size() != static_cast<std::size_t>(n / 2 + 1))
    throw std::invalid_argument("inverse_real_fft: expected n / 2 + 1 bins");
  InverseRealFft fft(n);
  for (std::size_t k = 0; k < half_spectrum.size(); ++k) {
    fft.input()[k][0] = half_spectrum[k].real();
    fft.input()[k][1] = half_spectrum[k].imag();
  }
  fft.execute();
  std::vector<double> out(fft.output(), fft.output() + n);
  for (auto& v : out) v /= n;
  return out;
}

int StftConfig::window_length(int sample_rate) const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int StftConfig::hop_length(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

std::vector<double> hann_window(int length) {
  if (length < 2) throw std::invalid_argument("hann_window: length must be at least 2");
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  return w;
}

std::int64_t frame_count(std::size_t samples, const StftConfig& config, int sample_rate) {
  const auto win = static_cast<std::size_t>(config.window_length(sample_rate));
  const auto hop = static_cast<std::size_t>(config.hop_length(sample_rate));
  if (samples < win) return 0;
  return static_cast<std::int64_t>(1 + (samples - win) / hop);
}

Spectrogram stft(const AudioBuffer& audio, const StftConfig& config) {
  audio.validate();
  const int win = config.window_length(audio.sample_rate);
  const int hop = config.hop_length(audio.sample_rate);
  if (win > config.n_fft) throw std::invalid_argument("stft: window longer than FFT size");
  if (hop <= 0) throw std::invalid_argument("stft: hop must be positive");
  const auto frames = frame_count(audio.samples.size(), config, audio.sample_rate);
  if (frames == 0)
    throw std::invalid_argument("stft: audio has " + std::to_string(audio.samples.size()) +
                                " samples, shorter than one window of " + std::to_string(win));
  const auto window = hann_window(win);
  const int bins = config.n_fft / 2 + 1;
  Spectrogram spec;
  spec.bins = bins;
  spec.frames = frames;
  spec.values.resize(static_cast<std::size_t>(bins * frames));
  RealFft fft(config.n_fft);
  for (std::int64_t t = 0; t < frames; ++t) {
    double* in = fft.input();
    std::fill(in, in + config.n_fft, 0.0);
    const double* src = audio.samples.data() + t * hop;
    for (int n = 0; n < win; ++n) in[n] = src[n] * window[n];
    fft.execute();
    const fftw_complex* out = fft.output();
    for (int k = 0; k < bins; ++k) spec.values[k * frames + t] = {out[k][0], out[k][1]};
  }
  return spec;
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

MelFilterbank::MelFilterbank(const MelConfig& config, int n_fft, int sample_rate)
    : bands_(config.bands), bins_(n_fft / 2 + 1) {
  if (config.bands < 1) throw std::invalid_argument("mel filterbank needs at least one band");
  if (!(config.f_min >= 0.0 && config.f_min < config.f_max && config.f_max <= sample_rate / 2.0))
    throw std::invalid_argument("mel filterbank: need 0 <= f_min < f_max <= Nyquist");
  weights_.assign(static_cast<std::size_t>(bands_) * bins_, 0.0);
  const double lo = hz_to_mel(config.f_min);
  const double hi = hz_to_mel(config.f_max);
  const double step = (hi - lo) / (bands_ + 1);
  for (int b = 0; b < bands_; ++b) {
    const double left = lo + step * b;
    const double centre = left + step;
    const double right = centre + step;
    for (int k = 0; k < bins_; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / n_fft);
      double w = 0.0;
      if (mel > left && mel <= centre)
        w = (mel - left) / (centre - left);
      else if (mel > centre && mel < right)
        w = (right - mel) / (right - centre);
      weights_[static_cast<std::size_t>(b) * bins_ + k] = w;
    }
  }
}

std::string to_string(FeatureDomain domain) {
  switch (domain) {
    case FeatureDomain::log_mel:
      return "log_mel";
    case FeatureDomain::mean_normalized_log_mel:
      return "mean_normalized_log_mel";
  }
  return "unknown";
}

FeatureMatrix log_mel(const Spectrogram& spec, const MelFilterbank& bank, double floor) {
  if (spec.bins != bank.bins())
    throw std::invalid_argument("log_mel: spectrogram has " + std::to_string(spec.bins) + " bins, filterbank expects " +
                                std::to_string(bank.bins()));
  FeatureMatrix out;
  out.bands = bank.bands();
  out.frames = spec.frames;
  out.values.assign(static_cast<std::size_t>(out.bands * out.frames), 0.0);
  std::vector<double> power(spec.values.size());
  for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(spec.values[i]);
  for (int f = 0; f < bank.bands(); ++f) {
    double* row = out.values.data() + f * out.frames;
    for (int k = 0; k < bank.bins(); ++k) {
      const double w = bank.weight(f, k);
      if (w == 0.0) continue;
      const double* p = power.data() + k * spec.frames;
      for (std::int64_t t = 0; t < spec.frames; ++t) row[t] += w * p[t];
    }
    for (std::int64_t t = 0; t < out.frames; ++t) row[t] = std::log(std::max(row[t], floor));
  }
  return out;
}

FeatureMatrix mean_normalize(const FeatureMatrix& features) {
  FeatureMatrix out = features;
  out.domain = FeatureDomain::mean_normalized_log_mel;
  for (std::int64_t f = 0; f < out.bands; ++f) {
    double* row = out.values.data() + f * out.frames;
    double mean = 0.0;
    for (std::int64_t t = 0; t < out.frames; ++t) mean += row[t];
    mean /= static_cast<double>(out.frames);
    for (std::int64_t t = 0; t < out.frames; ++t) row[t] -= mean;
  }
  return out;
}

FeatureMatrix extract_log_mel(const AudioBuffer& audio, const FeatureConfig& config) {
  const MelFilterbank bank(config.mel, config.stft.n_fft, audio.sample_rate);
  return log_mel(stft(audio, config.stft), bank, config.floor);
}

}  // namespace dfl::audio
