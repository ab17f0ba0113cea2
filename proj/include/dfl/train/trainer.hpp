#pragma once

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <vector>

#include "dfl/audio/features.hpp"
#include "dfl/autodiff/optim.hpp"
#include "dfl/nets/enhancer.hpp"
#include "dfl/nets/speaker.hpp"
#include "dfl/train/losses.hpp"

namespace dfl::train {

struct LabeledFeatures {
  audio::FeatureMatrix features;  // unnormalized log-Mel
  int label = 0;
};

struct ParallelFeatures {
  audio::FeatureMatrix noisy;
  audio::FeatureMatrix clean;
};

struct ScheduleConfig {
  int epochs = 10;
  int batch_size = 16;
  int segment_frames = 200;
  double base_lr = 1e-3;
  double decay = 0.9;  // per epoch after warmup
  int warmup_steps = 0;
  ad::OptimizerKind optimizer = ad::OptimizerKind::adam;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AuxTrainConfig {
  ScheduleConfig schedule;
  // angular-margin blend: lambda = max(lambda_min, lambda_start / (1 + lambda_gamma * step))
  double lambda_start = 1000.0;
  double lambda_min = 5.0;
  double lambda_gamma = 0.5;

  double lambda_at(std::int64_t step) const;
};

struct EnhancerTrainConfig {
  ScheduleConfig schedule;
  LossKind loss = LossKind::dfl;
};

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);
void to_json(nlohmann::json& j, const AuxTrainConfig& c);
void from_json(const nlohmann::json& j, AuxTrainConfig& c);
void to_json(nlohmann::json& j, const EnhancerTrainConfig& c);
void from_json(const nlohmann::json& j, EnhancerTrainConfig& c);

/// JSON-lines training log; records are also kept in memory.
class TrainLog {
 public:
  explicit TrainLog(std::ostream* sink = nullptr, std::ostream* mirror = nullptr) : sink_(sink), mirror_(mirror) {}
  void write(const nlohmann::json& record);
  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::ostream* sink_;
  std::ostream* mirror_;
  std::vector<nlohmann::json> records_;
};

struct AuxEpochStats {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// Fraction of utterances whose closest class direction is the true speaker.
template <typename Real>
double speaker_accuracy(const nets::SpeakerNet<Real>& net, const std::vector<LabeledFeatures>& data);

template <typename Real>
std::vector<AuxEpochStats> train_speaker_net(nets::SpeakerNet<Real>& net, const std::vector<LabeledFeatures>& train,
                                             const std::vector<LabeledFeatures>& valid, const AuxTrainConfig& config,
                                             TrainLog& log);

struct EnhancerEpochStats {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_feature_loss = 0.0;
  double val_deep_feature_loss = 0.0;  // NaN without an auxiliary network
};

struct EnhancerValidation {
  double feature_loss = 0.0;
  double deep_feature_loss = 0.0;
};

/// Mean per-segment losses over centre crops of the validation pairs.
template <typename Real>
EnhancerValidation validate_enhancer(const nets::Enhancer<Real>& net, const nets::SpeakerNet<Real>* aux,
                                     const std::vector<ParallelFeatures>& valid, int segment_frames);

/// Trains `net` in place. `aux` must be non-null for DFL variants and is
/// never modified. When `state_path` is non-empty an epoch checkpoint is
/// written there after every epoch and training resumes from it if present.
template <typename Real>
std::vector<EnhancerEpochStats> train_enhancer(nets::Enhancer<Real>& net, const nets::SpeakerNet<Real>* aux,
                                               const std::vector<ParallelFeatures>& train,
                                               const std::vector<ParallelFeatures>& valid,
                                               const EnhancerTrainConfig& config, TrainLog& log,
                                               const std::filesystem::path& state_path = {});

}  // namespace dfl::train
