#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <unistd.h>

#include "dfl/audio/features.hpp"
#include "dfl/common/hash.hpp"
#include "dfl/corpus/corpus.hpp"
#include "dfl/corpus/noise.hpp"

using namespace dfl::corpus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("dfl_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Average power spectrum over STFT frames.
std::vector<double> long_term_spectrum(const dfl::audio::AudioBuffer& a, int n_fft = 512) {
  dfl::audio::StftConfig cfg{32.0, 16.0, n_fft};
  const auto spec = dfl::audio::stft(a, cfg);
  std::vector<double> p(static_cast<std::size_t>(spec.bins), 0.0);
  for (std::int64_t k = 0; k < spec.bins; ++k)
    for (std::int64_t t = 0; t < spec.frames; ++t) p[k] += std::norm(spec.at(k, t));
  return p;
}

// Least-squares slope of octave-band mean power (dB) against octave index.
double octave_slope_db(const dfl::audio::AudioBuffer& a) {
  const auto p = long_term_spectrum(a);
  const double bin_hz = a.sample_rate / 512.0;
  std::vector<double> x, y;
  for (double lo = 250.0; lo < 6000.0; lo *= 2.0) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double f = k * bin_hz;
      if (f >= lo && f < 2 * lo) sum += p[k], ++count;
    }
    x.push_back(static_cast<double>(x.size()));
    y.push_back(10.0 * std::log10(sum / count));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

std::vector<double> mean_log_mel(const dfl::audio::AudioBuffer& a) {
  const auto f = dfl::audio::extract_log_mel(a);
  std::vector<double> m(static_cast<std::size_t>(f.bands), 0.0);
  for (std::int64_t b = 0; b < f.bands; ++b)
    for (std::int64_t t = 0; t < f.frames; ++t) m[b] += f.at(b, t) / f.frames;
  return m;
}

CorpusConfig tiny_config() {
  CorpusConfig c;
  c.seed = 11;
  c.speakers = 3;
  c.utterances_per_speaker = 4;
  c.utterance_seconds = 1.5;
  c.train_fraction = 0.75;
  c.valid_fraction = 0.25;
  c.test_utterances_per_speaker = 2;
  c.test_utterance_seconds = 1.0;
  return c;
}

}  // namespace

TEST_CASE("synth_utterance is deterministic, bounded and seed dependent") {
  const auto spk = sample_speaker("spk00", 0, 4, 3);
  const auto a = synth_utterance(spk, 2.0, 9);
  const auto b = synth_utterance(spk, 2.0, 9);
  const auto c = synth_utterance(spk, 2.0, 10);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.samples.size() == 32000);
  double peak = 0.0;
  for (double v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak <= 0.99);
  CHECK(peak > 0.1);
  CHECK_THROWS_AS(synth_utterance(spk, 0.5, 1), std::invalid_argument);
}

TEST_CASE("sampled speakers satisfy the voice invariants") {
  for (int i = 0; i < 40; ++i) {
    const auto s = sample_speaker(speaker_id(i), i, 40, 5);
    CHECK_NOTHROW(s.validate());
    CHECK(s.pitch_hz >= 70.0);
    CHECK(s.pitch_hz <= 300.0);
  }
  SpeakerModel bad;
  bad.formants[1].centre_hz = bad.formants[0].centre_hz;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = SpeakerModel{};
  bad.pitch_hz = 350.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("disjoint formant sets move the spectral peak") {
  SpeakerModel low, high;
  low.speaker_id = "low";
  high.speaker_id = "high";
  low.vowel_spread = high.vowel_spread = 0.02;
  low.formants = {{{300, 60}, {900, 80}, {2200, 100}}};
  high.formants = {{{1100, 60}, {2600, 80}, {3600, 100}}};
  const auto pl = long_term_spectrum(synth_utterance(low, 3.0, 1));
  const auto ph = long_term_spectrum(synth_utterance(high, 3.0, 1));
  // Peak search above the first harmonics so the formants dominate.
  const auto peak_hz = [](const std::vector<double>& p) {
    const std::size_t from = 12;  // 375 Hz at 31.25 Hz per bin
    const auto it = std::max_element(p.begin() + from, p.end());
    return static_cast<double>(it - p.begin()) * 16000.0 / 512.0;
  };
  const double fl = peak_hz(pl), fh = peak_hz(ph);
  CHECK(fl != fh);
  CHECK(fl < 1300.0);
  CHECK(fh > 900.0);
}

TEST_CASE("coloured noise follows the configured octave slope") {
  for (double slope : {0.0, -3.0, -6.0}) {
    NoiseSpec spec;
    spec.kind = NoiseKind::noise;
    spec.duration_s = 8.0;
    spec.seed = 21;
    spec.slope_db_per_octave = slope;
    const double measured = octave_slope_db(gen_noise(spec));
    CAPTURE(slope);
    CHECK(std::abs(measured - slope) < 1.0);
  }
}

TEST_CASE("noise generators are deterministic per seed and RMS normalised") {
  for (auto kind : {NoiseKind::noise, NoiseKind::music, NoiseKind::babble}) {
    NoiseSpec spec;
    spec.kind = kind;
    spec.duration_s = 1.5;
    spec.seed = 77;
    const auto a = gen_noise(spec);
    const auto b = gen_noise(spec);
    spec.seed = 78;
    const auto c = gen_noise(spec);
    CAPTURE(to_string(kind));
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
    CHECK(a.samples.size() == 24000);
    CHECK(std::sqrt(dfl::audio::signal_power(a.samples)) == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(noise_kind_from_string(to_string(kind)) == kind);
  }
  NoiseSpec few;
  few.kind = NoiseKind::babble;
  few.babble_talkers = 5;
  CHECK_THROWS_AS(gen_noise(few), std::invalid_argument);
}

TEST_CASE("babble talkers are disjoint from the speaker inventory") {
  const auto ids = babble_talker_ids(99, 6);
  CHECK(ids.size() == 6);
  CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 6);
  for (const auto& id : ids) {
    CHECK(id.rfind(kBabblePrefix, 0) == 0);
    for (int s = 0; s < 100; ++s) CHECK(id != speaker_id(s));
  }
  const auto other = babble_talker_ids(100, 6);
  for (const auto& id : other) CHECK(std::find(ids.begin(), ids.end(), id) == ids.end());
}

TEST_CASE("manifest text round trips and rejects broken references") {
  Manifest m;
  m.rows.push_back({"a", "audio/a.wav", "spk00", "train", std::nullopt, 0.0, {}, 0});
  m.rows.push_back({"a-n0", "audio/b.wav", "spk00", "train", NoiseKind::music, -2.125, "a", 42});
  const auto text = format_manifest(m);
  CHECK(text.rfind(std::string(kManifestHeader), 0) == 0);
  const auto back = parse_manifest(text);
  REQUIRE(back.rows.size() == 2);
  CHECK(format_manifest(back) == text);
  CHECK(back.rows[1].noise_kind == NoiseKind::music);
  CHECK(back.rows[1].snr_db == -2.125);
  CHECK(back.rows[1].noise_seed == 42);
  CHECK_FALSE(back.rows[0].noisy());

  // Clean-only external corpora use four columns.
  CHECK(parse_manifest("x\tx.wav\tspkA\ttest\n").rows.size() == 1);

  auto dup = m;
  dup.rows.push_back(m.rows[0]);
  CHECK_THROWS_AS(dup.validate(), ManifestError);
  auto dangling = m;
  dangling.rows[1].clean_utt_id = "missing";
  CHECK_THROWS_AS(dangling.validate(), ManifestError);
  CHECK_THROWS_AS(parse_manifest("a\tb\tc\n"), ManifestError);
}

TEST_CASE("corpus config rejects invalid splits") {
  auto c = tiny_config();
  c.train_fraction = 0.8;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.valid_fraction = 0.0;
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.speakers = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.test_snrs_db.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<CorpusConfig>()) == j);
  CHECK(CorpusConfig{}.valid_per_speaker() == 3);
}

TEST_CASE("parallel corpus: layout, integrity, SNRs, seeds and regeneration") {
  TempDir dir("corpus");
  const auto cfg = tiny_config();
  Manifest m;
  const auto summary = build_parallel_corpus(cfg, dir.path, &m);
  CHECK(summary.test_conditions == 15);
  CHECK(summary.clean_utterances == 3 * (4 + 2));
  CHECK(summary.noisy_utterances == 3 * 4 + 3 * 2 * 15);
  CHECK_NOTHROW(m.validate_files(dir.path));
  CHECK(read_manifest(dir.path / "manifest.tsv").rows.size() == m.rows.size());

  std::set<std::uint64_t> train_seeds, test_seeds;
  std::set<std::pair<std::string, double>> conditions;
  std::size_t valid = 0;
  for (const auto& row : m.rows) {
    // Content-addressed layout: audio/<first two hex>/<sha256>.wav
    const auto digest = dfl::sha256_file(dir.path / row.path);
    CHECK(row.path == "audio/" + digest.substr(0, 2) + "/" + digest + ".wav");
    if (row.split == "valid" && !row.noisy()) ++valid;
    if (!row.noisy()) continue;
    CHECK(m.at(row.clean_utt_id).split == row.split);
    if (row.split == "test") {
      test_seeds.insert(row.noise_seed);
      conditions.insert({to_string(*row.noise_kind), row.snr_db});
    } else {
      train_seeds.insert(row.noise_seed);
      CHECK(row.snr_db >= cfg.train_snr_min_db);
      CHECK(row.snr_db <= cfg.train_snr_max_db);
    }

    // Rebuilding the mixture from the manifest fields hits the stored SNR.
    const auto clean = dfl::audio::read_wav(dir.path / m.at(row.clean_utt_id).path);
    const auto noise =
        gen_noise(noise_spec_for(cfg, *row.noise_kind, clean.duration_seconds(), row.noise_seed), cfg.sample_rate);
    const auto mix = dfl::audio::mix_at_snr(clean, noise, row.snr_db);
    const double measured =
        10.0 * std::log10(dfl::audio::signal_power(clean.samples) / dfl::audio::signal_power(mix.scaled_noise));
    CHECK(std::abs(measured - row.snr_db) < 1e-6);

    // The stored PCM16 file agrees up to quantisation.
    const auto noisy = dfl::audio::read_wav(dir.path / row.path);
    std::vector<double> residual(noisy.samples.size());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = noisy.samples[i] - clean.samples[i];
    const double stored =
        10.0 * std::log10(dfl::audio::signal_power(clean.samples) / dfl::audio::signal_power(residual));
    CHECK(std::abs(stored - row.snr_db) < 0.05);
  }
  CHECK(valid == 3);
  CHECK(conditions.size() == 15);
  for (auto s : train_seeds) CHECK(test_seeds.count(s) == 0);

  const auto before = dfl::read_file_bytes(dir.path / "manifest.tsv");
  const auto again = build_parallel_corpus(cfg, dir.path);
  CHECK(again.files_written == 0);
  CHECK(dfl::read_file_bytes(dir.path / "manifest.tsv") == before);
}

TEST_CASE("speakers are separable by a nearest-class-mean rule on long-term spectra") {
  const int speakers = 6;
  std::vector<std::vector<double>> centroids;
  std::vector<SpeakerModel> voices;
  for (int s = 0; s < speakers; ++s) {
    voices.push_back(sample_speaker(speaker_id(s), s, speakers, 4));
    std::vector<double> centroid(40, 0.0);
    for (int u = 0; u < 3; ++u) {
      const auto m = mean_log_mel(synth_utterance(voices[s], 2.0, 100 + u));
      for (std::size_t b = 0; b < m.size(); ++b) centroid[b] += m[b] / 3.0;
    }
    centroids.push_back(centroid);
  }
  int correct = 0, total = 0;
  for (int s = 0; s < speakers; ++s)
    for (int u = 0; u < 2; ++u) {
      const auto m = mean_log_mel(synth_utterance(voices[s], 2.0, 500 + u));
      int best = -1;
      double best_d = 1e300;
      for (int c = 0; c < speakers; ++c) {
        double d = 0.0;
        for (std::size_t b = 0; b < m.size(); ++b) d += (m[b] - centroids[c][b]) * (m[b] - centroids[c][b]);
        if (d < best_d) best_d = d, best = c;
      }
      correct += best == s;
      ++total;
    }
  const double accuracy = static_cast<double>(correct) / total;
  MESSAGE("nearest-mean accuracy " << accuracy);
  CHECK(accuracy > 1.0 / speakers);
}
