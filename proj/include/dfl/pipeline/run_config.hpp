#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "dfl/audio/features.hpp"
#include "dfl/corpus/corpus.hpp"
#include "dfl/eval/metrics.hpp"
#include "dfl/eval/trials.hpp"
#include "dfl/nets/can.hpp"
#include "dfl/nets/edn.hpp"
#include "dfl/nets/speaker.hpp"
#include "dfl/train/trainer.hpp"

namespace dfl::pipeline {

enum class Precision { float32, float64 };
std::string to_string(Precision p);
Precision precision_from_string(const std::string& name);

struct EvalConfig {
  eval::TrialConfig trials;
  eval::DcfParams dcf;
};

/// Every stage's parameters. The top-level seed overrides the per-stage seeds.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  Precision precision = Precision::float32;
  audio::FeatureConfig features;
  corpus::CorpusConfig corpus;
  nets::SpeakerNetConfig aux_net;
  train::AuxTrainConfig aux_train;
  nets::EnhancerKind enhancer = nets::EnhancerKind::can;
  nets::CanConfig can;
  nets::EdnConfig edn;
  train::EnhancerTrainConfig enhancer_train;
  EvalConfig eval;

  /// Copies `seed` into every stage.
  void apply_seed(std::uint64_t value);
  std::uint64_t aux_init_seed() const;
  std::uint64_t enhancer_init_seed() const;
  nlohmann::json enhancer_config(nets::EnhancerKind kind) const;

  std::filesystem::path corpus_dir() const { return out_dir / "corpus"; }
  std::filesystem::path manifest_path() const { return corpus_dir() / "manifest.tsv"; }
  std::filesystem::path aux_checkpoint() const { return out_dir / "aux" / "aux.ckpt"; }
  std::filesystem::path enhancer_checkpoint(nets::EnhancerKind kind, train::LossKind loss) const;
  std::filesystem::path report_dir() const { return out_dir / "reports"; }
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace dfl::pipeline
