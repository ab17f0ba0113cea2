#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfl/corpus/manifest.hpp"
#include "dfl/eval/report.hpp"
#include "dfl/pipeline/run_config.hpp"

namespace dfl::pipeline {

/// Bad command-line combination, reported as a usage error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Log-Mel features of the given rows keyed by utt_id.
std::map<std::string, audio::FeatureMatrix> load_features(const std::filesystem::path& root,
                                                          const std::vector<const corpus::ManifestRow*>& rows,
                                                          const audio::FeatureConfig& config);

corpus::CorpusSummary gen_corpus(const RunConfig& config);

struct AuxResult {
  std::filesystem::path checkpoint;
  std::vector<train::AuxEpochStats> history;
};
AuxResult train_aux(const RunConfig& config, std::ostream* log_sink = nullptr);

struct EnhancerResult {
  std::filesystem::path checkpoint;
  std::vector<train::EnhancerEpochStats> history;
  std::string aux_sha256_before;  // empty when no auxiliary network was used
  std::string aux_sha256_after;
  std::optional<train::EnhancerValidation> initial_validation;  // before the first update; absent on resume
};
/// Throws UsageError when the loss needs an auxiliary checkpoint and none is given.
EnhancerResult train_enhancer(const RunConfig& config, nets::EnhancerKind kind, train::LossKind loss,
                              const std::optional<std::filesystem::path>& aux_checkpoint,
                              std::ostream* log_sink = nullptr);

/// Enhances one WAV file or every row of a manifest; returns the written files.
std::vector<std::filesystem::path> enhance(const RunConfig& config, const std::filesystem::path& checkpoint,
                                           const std::filesystem::path& input, const std::filesystem::path& out_dir);

/// Per-condition and pooled verification metrics on the test split, with and
/// without the enhancer. Conditions follow the corpus grid.
eval::EvalReport evaluate(const RunConfig& config, const std::filesystem::path& aux_checkpoint,
                          const std::optional<std::filesystem::path>& enhancer_checkpoint,
                          const std::filesystem::path& manifest_path);

/// Writes <stem>.txt and <stem>.jsonl under the report directory.
void write_report(const eval::EvalReport& report, const std::filesystem::path& dir, const std::string& stem);

}  // namespace dfl::pipeline
