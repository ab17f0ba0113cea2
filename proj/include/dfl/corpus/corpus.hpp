#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "dfl/corpus/manifest.hpp"
#include "dfl/corpus/synth.hpp"

namespace dfl::corpus {

struct CorpusConfig {
  std::uint64_t seed = 1;
  int sample_rate = 16000;
  int speakers = 20;
  int utterances_per_speaker = 30;
  double utterance_seconds = 6.0;
  double train_fraction = 0.9;
  double valid_fraction = 0.1;
  /// Noisy copies per clean train/valid utterance, each with its own kind and SNR.
  int noisy_copies = 1;
  double train_snr_min_db = -5.0;
  double train_snr_max_db = 20.0;
  /// Held-out utterances of the same speakers for verification trials.
  int test_utterances_per_speaker = 6;
  double test_utterance_seconds = 4.0;
  std::vector<double> test_snrs_db = {-5, 0, 5, 10, 15};
  std::vector<NoiseKind> noise_kinds = {NoiseKind::noise, NoiseKind::music, NoiseKind::babble};
  int babble_talkers = 6;
  double noise_slope_min = -6.0;
  double noise_slope_max = 0.0;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
  /// Utterances per speaker assigned to validation.
  int valid_per_speaker() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

std::string speaker_id(int index);

/// Train noise seeds are even and test noise seeds odd.
std::uint64_t noise_seed(std::uint64_t corpus_seed, bool test, std::uint64_t item);

NoiseSpec noise_spec_for(const CorpusConfig& config, NoiseKind kind, double duration_s, std::uint64_t seed);

struct CorpusSummary {
  int speakers = 0;
  std::size_t clean_utterances = 0;
  std::size_t noisy_utterances = 0;
  double clean_hours = 0.0;
  std::size_t test_conditions = 0;
  std::size_t files_written = 0;
};

/// Synthesises the corpus under `out_dir` (audio/<2 hex>/<sha256>.wav plus
/// manifest.tsv). Files are only rewritten when their bytes change.
CorpusSummary build_parallel_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir,
                                    Manifest* manifest_out = nullptr);

}  // namespace dfl::corpus
