#include "dfl/corpus/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "dfl/common/hash.hpp"
#include "dfl/corpus/noise.hpp"

namespace dfl::corpus {

namespace fs = std::filesystem;

void CorpusConfig::validate() const {
  if (speakers < 2) throw std::invalid_argument("corpus: need at least 2 speakers");
  if (utterances_per_speaker < 2) throw std::invalid_argument("corpus: need at least 2 utterances per speaker");
  if (!(train_fraction > 0.0 && valid_fraction > 0.0) ||
      std::abs(train_fraction + valid_fraction - 1.0) > 1e-9)
    throw std::invalid_argument("corpus: train and validation fractions must be positive and sum to 1");
  const int valid = valid_per_speaker();
  if (valid < 1 || valid >= utterances_per_speaker)
    throw std::invalid_argument("corpus: split leaves a speaker without train or validation utterances");
  if (utterance_seconds < 1.0 || test_utterance_seconds < 1.0)
    throw std::invalid_argument("corpus: utterances must last at least 1 s");
  if (noisy_copies < 1) throw std::invalid_argument("corpus: noisy_copies must be at least 1");
  if (!(train_snr_min_db <= train_snr_max_db)) throw std::invalid_argument("corpus: empty training SNR range");
  if (test_utterances_per_speaker < 2) throw std::invalid_argument("corpus: need at least 2 test utterances per speaker");
  if (test_snrs_db.empty()) throw std::invalid_argument("corpus: test SNR grid is empty");
  if (noise_kinds.empty()) throw std::invalid_argument("corpus: no noise kinds");
  if (babble_talkers < 6) throw std::invalid_argument("corpus: babble needs at least 6 talkers");
  if (sample_rate <= 0) throw std::invalid_argument("corpus: sample rate must be positive");
}

int CorpusConfig::valid_per_speaker() const {
  return static_cast<int>(std::lround(utterances_per_speaker * valid_fraction));
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.noise_kinds) kinds.push_back(to_string(k));
  j = {{"seed", c.seed},
       {"sample_rate", c.sample_rate},
       {"speakers", c.speakers},
       {"utterances_per_speaker", c.utterances_per_speaker},
       {"utterance_seconds", c.utterance_seconds},
       {"train_fraction", c.train_fraction},
       {"valid_fraction", c.valid_fraction},
       {"noisy_copies", c.noisy_copies},
       {"train_snr_min_db", c.train_snr_min_db},
       {"train_snr_max_db", c.train_snr_max_db},
       {"test_utterances_per_speaker", c.test_utterances_per_speaker},
       {"test_utterance_seconds", c.test_utterance_seconds},
       {"test_snrs_db", c.test_snrs_db},
       {"noise_kinds", kinds},
       {"babble_talkers", c.babble_talkers},
       {"noise_slope_min", c.noise_slope_min},
       {"noise_slope_max", c.noise_slope_max}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c = CorpusConfig{};
  c.seed = j.value("seed", c.seed);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.speakers = j.value("speakers", c.speakers);
  c.utterances_per_speaker = j.value("utterances_per_speaker", c.utterances_per_speaker);
  c.utterance_seconds = j.value("utterance_seconds", c.utterance_seconds);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.valid_fraction = j.value("valid_fraction", c.valid_fraction);
  c.noisy_copies = j.value("noisy_copies", c.noisy_copies);
  c.train_snr_min_db = j.value("train_snr_min_db", c.train_snr_min_db);
  c.train_snr_max_db = j.value("train_snr_max_db", c.train_snr_max_db);
  c.test_utterances_per_speaker = j.value("test_utterances_per_speaker", c.test_utterances_per_speaker);
  c.test_utterance_seconds = j.value("test_utterance_seconds", c.test_utterance_seconds);
  c.test_snrs_db = j.value("test_snrs_db", c.test_snrs_db);
  if (j.contains("noise_kinds")) {
    c.noise_kinds.clear();
    for (const auto& k : j.at("noise_kinds")) c.noise_kinds.push_back(noise_kind_from_string(k.get<std::string>()));
  }
  c.babble_talkers = j.value("babble_talkers", c.babble_talkers);
  c.noise_slope_min = j.value("noise_slope_min", c.noise_slope_min);
  c.noise_slope_max = j.value("noise_slope_max", c.noise_slope_max);
}

std::string speaker_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02d", index);
  return buf;
}

std::uint64_t noise_seed(std::uint64_t corpus_seed, bool test, std::uint64_t item) {
  const std::uint64_t parity = test ? 1 : 0;
  return (mix_seed(mix_seed(corpus_seed, 0xA0 + parity), item) & ~std::uint64_t{1}) | parity;
}

NoiseSpec noise_spec_for(const CorpusConfig& config, NoiseKind kind, double duration_s, std::uint64_t seed) {
  NoiseSpec spec;
  spec.kind = kind;
  spec.duration_s = duration_s;
  spec.seed = seed;
  spec.babble_talkers = config.babble_talkers;
  spec.slope_min = config.noise_slope_min;
  spec.slope_max = config.noise_slope_max;
  return spec;
}

namespace {

std::string snr_tag(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", snr_db);
  return buf;
}

class AudioStore {
 public:
  explicit AudioStore(fs::path root) : root_(std::move(root)) {}

  std::string put(const audio::AudioBuffer& audio) {
    const auto bytes = audio::encode_wav(audio);
    const auto digest = sha256_hex(bytes);
    const std::string rel = "audio/" + digest.substr(0, 2) + "/" + digest + ".wav";
    fs::create_directories(root_ / "audio" / digest.substr(0, 2));
    if (write_file_if_changed(root_ / rel, bytes)) ++written_;
    return rel;
  }
  std::size_t written() const { return written_; }

 private:
  fs::path root_;
  std::size_t written_ = 0;
};

}  // namespace

CorpusSummary build_parallel_corpus(const CorpusConfig& config, const fs::path& out_dir, Manifest* manifest_out) {
  config.validate();
  fs::create_directories(out_dir);
  AudioStore store(out_dir);
  Manifest manifest;
  CorpusSummary summary;
  summary.speakers = config.speakers;

  std::mt19937_64 draw(mix_seed(config.seed, 0x5A));
  std::uniform_real_distribution<double> snr_dist(config.train_snr_min_db, config.train_snr_max_db);
  std::uint64_t train_noise_item = 0;
  std::uint64_t test_noise_item = 0;
  const int valid_from = config.utterances_per_speaker - config.valid_per_speaker();

  const auto add_clean = [&](const std::string& id, const std::string& spk, const std::string& split,
                             const audio::AudioBuffer& audio) {
    manifest.rows.push_back({id, store.put(audio), spk, split, std::nullopt, 0.0, {}, 0});
    ++summary.clean_utterances;
    summary.clean_hours += audio.duration_seconds() / 3600.0;
  };
  const auto add_noisy = [&](const std::string& id, const std::string& clean_id, const std::string& spk,
                             const std::string& split, const audio::AudioBuffer& clean, NoiseKind kind,
                             double snr_db, std::uint64_t seed) {
    const auto noise = gen_noise(noise_spec_for(config, kind, clean.duration_seconds(), seed), config.sample_rate);
    const auto mixture = audio::mix_at_snr(clean, noise, snr_db);
    manifest.rows.push_back({id, store.put(mixture.audio), spk, split, kind, snr_db, clean_id, seed});
    ++summary.noisy_utterances;
  };

  for (int s = 0; s < config.speakers; ++s) {
    const auto spk = speaker_id(s);
    const auto voice = sample_speaker(spk, s, config.speakers, config.seed);
    const auto speaker_seed = mix_seed(config.seed, static_cast<std::uint64_t>(s));

    for (int u = 0; u < config.utterances_per_speaker; ++u) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-u%02d", spk.c_str(), u);
      const std::string split = u < valid_from ? "train" : "valid";
      const auto clean = synth_utterance(voice, config.utterance_seconds, mix_seed(speaker_seed, u), config.sample_rate);
      add_clean(id, spk, split, clean);
      for (int c = 0; c < config.noisy_copies; ++c) {
        const auto kind = config.noise_kinds[draw() % config.noise_kinds.size()];
        const double snr = std::round(snr_dist(draw) * 1000.0) / 1000.0;
        add_noisy(std::string(id) + "-n" + std::to_string(c), id, spk, split, clean, kind, snr,
                  noise_seed(config.seed, false, train_noise_item++));
      }
    }

    for (int u = 0; u < config.test_utterances_per_speaker; ++u) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-t%02d", spk.c_str(), u);
      const auto clean =
          synth_utterance(voice, config.test_utterance_seconds, mix_seed(speaker_seed, 100000 + u), config.sample_rate);
      add_clean(id, spk, "test", clean);
      for (auto kind : config.noise_kinds)
        for (double snr : config.test_snrs_db)
          add_noisy(std::string(id) + "-" + to_string(kind) + "-" + snr_tag(snr), id, spk, "test", clean, kind, snr,
                    noise_seed(config.seed, true, test_noise_item++));
    }
  }

  write_manifest(out_dir / "manifest.tsv", manifest);
  summary.test_conditions = config.noise_kinds.size() * config.test_snrs_db.size();
  summary.files_written = store.written();
  if (manifest_out) *manifest_out = std::move(manifest);
  return summary;
}

}  // namespace dfl::corpus
