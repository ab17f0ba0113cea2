#include "dfl/audio/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "dfl/common/binary_io.hpp"
#include "dfl/common/hash.hpp"

namespace dfl::audio {

void AudioBuffer::validate() const {
  if (samples.empty()) throw std::invalid_argument("audio buffer is empty");
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("audio buffer contains non-finite samples");
}

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  auto tag = [&r] {
    char t[4];
    r.get_bytes(t, 4);
    return std::string(t, 4);
  };
  try {
    if (tag() != "RIFF") throw AudioFormatError("not a RIFF file");
    r.get<std::uint32_t>();
    if (tag() != "WAVE") throw AudioFormatError("not a WAVE file");
    bool have_fmt = false;
    int channels = 0, sample_rate = 0, bits = 0, format = 0;
    while (r.remaining() >= 8) {
      const std::string id = tag();
      const auto size = r.get<std::uint32_t>();
      if (size > r.remaining()) throw AudioFormatError("chunk '" + id + "' overruns the file");
      if (id == "fmt ") {
        if (size < 16) throw AudioFormatError("fmt chunk too short");
        format = r.get<std::uint16_t>();
        channels = r.get<std::uint16_t>();
        sample_rate = static_cast<int>(r.get<std::uint32_t>());
        r.get<std::uint32_t>();  // byte rate
        r.get<std::uint16_t>();  // block align
        bits = r.get<std::uint16_t>();
        std::vector<std::uint8_t> rest(size - 16);
        r.get_bytes(rest.data(), rest.size());
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw AudioFormatError("data chunk before fmt chunk");
        if (format != 1 || bits != 16) throw AudioFormatError("only PCM16 WAV is supported");
        if (channels != 1) throw AudioFormatError("only mono WAV is supported, got " + std::to_string(channels));
        if (size == 0) throw AudioFormatError("empty data chunk");
        AudioBuffer out;
        out.sample_rate = sample_rate;
        out.samples.resize(size / 2);
        for (auto& s : out.samples) s = static_cast<double>(r.get<std::int16_t>()) / 32768.0;
        return out;
      } else {
        std::vector<std::uint8_t> skip(size + (size & 1u));
        r.get_bytes(skip.data(), std::min<std::size_t>(skip.size(), r.remaining()));
      }
    }
  } catch (const FormatError& e) {
    throw AudioFormatError(std::string("truncated WAV: ") + e.what());
  }
  throw AudioFormatError("WAV has no data chunk");
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio) {
  audio.validate();
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  ByteWriter w;
  w.put_bytes("RIFF", 4);
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_bytes("WAVEfmt ", 8);
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(1);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate * 2));
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_bytes("data", 4);
  w.put<std::uint32_t>(data_bytes);
  for (double s : audio.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    w.put<std::int16_t>(static_cast<std::int16_t>(q));
  }
  return w.take();
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const AudioFormatError& e) {
    throw AudioFormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  const auto bytes = encode_wav(audio);
  write_file_if_changed(path, bytes);
}

double signal_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

std::vector<double> fit_length(std::span<const double> noise, std::size_t length) {
  if (noise.empty()) throw std::invalid_argument("fit_length: empty noise");
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[i % noise.size()];
  return out;
}

Mixture mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db) {
  clean.validate();
  noise.validate();
  if (clean.sample_rate != noise.sample_rate) throw std::invalid_argument("mix_at_snr: sample rates differ");
  Mixture m;
  m.scaled_noise = fit_length(noise.samples, clean.samples.size());
  const double p_clean = signal_power(clean.samples);
  const double p_noise = signal_power(m.scaled_noise);
  if (!(p_clean > 0.0)) throw std::invalid_argument("mix_at_snr: clean signal has zero power");
  if (!(p_noise > 0.0)) throw std::invalid_argument("mix_at_snr: noise signal has zero power");
  m.noise_gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  m.audio.sample_rate = clean.sample_rate;
  m.audio.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    m.scaled_noise[i] *= m.noise_gain;
    m.audio.samples[i] = clean.samples[i] + m.scaled_noise[i];
  }
  return m;
}

}  // namespace dfl::audio
