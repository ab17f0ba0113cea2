#include "dfl/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "dfl/autodiff/checkpoint.hpp"
#include "dfl/train/batching.hpp"

namespace dfl::train {

void ScheduleConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || segment_frames < 1)
    throw std::invalid_argument("training: epochs, batch_size and segment_frames must be positive");
  if (!(base_lr > 0.0) || !(decay > 0.0) || warmup_steps < 0)
    throw std::invalid_argument("training: base_lr and decay must be positive, warmup non-negative");
}

double AuxTrainConfig::lambda_at(std::int64_t step) const {
  return std::max(lambda_min, lambda_start / (1.0 + lambda_gamma * static_cast<double>(step)));
}

void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = {{"epochs", c.epochs},       {"batch_size", c.batch_size},
       {"segment_frames", c.segment_frames}, {"base_lr", c.base_lr},
       {"decay", c.decay},         {"warmup_steps", c.warmup_steps},
       {"optimizer", ad::to_string(c.optimizer)}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.segment_frames = j.value("segment_frames", c.segment_frames);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.decay = j.value("decay", c.decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.optimizer = ad::optimizer_kind_from_string(j.value("optimizer", ad::to_string(c.optimizer)));
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const AuxTrainConfig& c) {
  j = c.schedule;
  j["lambda_start"] = c.lambda_start;
  j["lambda_min"] = c.lambda_min;
  j["lambda_gamma"] = c.lambda_gamma;
}

void from_json(const nlohmann::json& j, AuxTrainConfig& c) {
  from_json(j, c.schedule);
  c.lambda_start = j.value("lambda_start", c.lambda_start);
  c.lambda_min = j.value("lambda_min", c.lambda_min);
  c.lambda_gamma = j.value("lambda_gamma", c.lambda_gamma);
}

void to_json(nlohmann::json& j, const EnhancerTrainConfig& c) {
  j = c.schedule;
  j["loss"] = to_string(c.loss);
}

void from_json(const nlohmann::json& j, EnhancerTrainConfig& c) {
  from_json(j, c.schedule);
  c.loss = loss_kind_from_string(j.value("loss", to_string(c.loss)));
}

void TrainLog::write(const nlohmann::json& record) {
  records_.push_back(record);
  for (auto* sink : {sink_, mirror_})
    if (sink) *sink << record.dump() << '\n' << std::flush;
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::int64_t steps_per_epoch(std::size_t items, int batch) {
  return static_cast<std::int64_t>((items + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

template <typename Real>
int argmax_row(const Tensor<Real>& m, Index row) {
  const Index cols = m.dim(1);
  int best = 0;
  for (Index j = 1; j < cols; ++j)
    if (m[row * cols + j] > m[row * cols + best]) best = static_cast<int>(j);
  return best;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

template <typename Real>
double speaker_accuracy(const nets::SpeakerNet<Real>& net, const std::vector<LabeledFeatures>& data) {
  if (data.empty()) return nan();
  ad::NoGradGuard no_grad;
  std::size_t correct = 0;
  for (const auto& item : data) {
    const auto out = net.forward(Var<Real>::constant(to_tensor<Real>(item.features)), false);
    correct += argmax_row(net.class_cosines(out.embedding.value()), 0) == item.label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename Real>
std::vector<AuxEpochStats> train_speaker_net(nets::SpeakerNet<Real>& net, const std::vector<LabeledFeatures>& train,
                                             const std::vector<LabeledFeatures>& valid, const AuxTrainConfig& config,
                                             TrainLog& log) {
  const auto& sc = config.schedule;
  sc.validate();
  std::set<int> speakers;
  for (const auto& item : train) {
    if (item.label < 0 || item.label >= net.config().speakers)
      throw std::invalid_argument("speaker label " + std::to_string(item.label) + " outside the classifier range");
    speakers.insert(item.label);
  }
  if (speakers.size() < 2) throw std::invalid_argument("speaker training needs at least two speakers");

  ad::Optimizer<Real> opt(sc.optimizer, {}, net.store().trainable());
  const ad::LrSchedule schedule{sc.base_lr, sc.decay, sc.warmup_steps, steps_per_epoch(train.size(), sc.batch_size)};
  std::int64_t step = 0;
  std::vector<AuxEpochStats> history;
  for (int epoch = 1; epoch <= sc.epochs; ++epoch) {
    auto rng = epoch_rng(sc.seed, epoch, 1);
    const auto order = shuffled_order(train.size(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0, lambda = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(sc.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(sc.batch_size));
      std::vector<const audio::FeatureMatrix*> items;
      std::vector<Index> starts;
      std::vector<int> labels;
      for (std::size_t k = first; k < last; ++k) {
        const auto& item = train[order[k]];
        items.push_back(&item.features);
        starts.push_back(random_crop_start(item.features.frames, sc.segment_frames, rng));
        labels.push_back(item.label);
      }
      net.store().zero_grad();
      const auto out = net.forward(Var<Real>::constant(stack_crops<Real>(items, starts, sc.segment_frames)), true);
      lambda = config.lambda_at(step);
      const auto loss = net.classification_loss(out.embedding, labels, lambda);
      ad::backward(loss);
      lr = schedule.lr(step);
      opt.step(lr);
      ++step;
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(labels.size());
      const auto cos = net.class_cosines(out.embedding.value());
      for (std::size_t b = 0; b < labels.size(); ++b) correct += argmax_row(cos, static_cast<Index>(b)) == labels[b];
    }

    AuxEpochStats stats;
    stats.epoch = epoch;
    stats.step = step;
    stats.lr = lr;
    stats.lambda = lambda;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    stats.val_accuracy = speaker_accuracy(net, valid);
    stats.val_loss = nan();
    if (!valid.empty()) {
      ad::NoGradGuard no_grad;
      double v = 0.0;
      for (const auto& item : valid) {
        const auto out = net.forward(Var<Real>::constant(to_tensor<Real>(item.features)), false);
        v += static_cast<double>(net.classification_loss(out.embedding, {item.label}, config.lambda_min).value()[0]);
      }
      stats.val_loss = v / static_cast<double>(valid.size());
    }
    history.push_back(stats);
    log.write({{"kind", "aux"},
               {"epoch", stats.epoch},
               {"step", stats.step},
               {"lr", stats.lr},
               {"lambda", stats.lambda},
               {"loss", stats.train_loss},
               {"train_accuracy", stats.train_accuracy},
               {"val_loss", stats.val_loss},
               {"val_accuracy", stats.val_accuracy}});
  }
  return history;
}

template <typename Real>
EnhancerValidation validate_enhancer(const nets::Enhancer<Real>& net, const nets::SpeakerNet<Real>* aux,
                                     const std::vector<ParallelFeatures>& valid, int segment_frames) {
  EnhancerValidation v;
  if (valid.empty()) return {nan(), nan()};
  ad::NoGradGuard no_grad;
  const auto taps = aux ? speaker_taps(*aux) : TapFn<Real>{};
  constexpr std::size_t chunk = 16;
  for (std::size_t first = 0; first < valid.size(); first += chunk) {
    const std::size_t last = std::min(valid.size(), first + chunk);
    std::vector<const audio::FeatureMatrix*> noisy, clean;
    std::vector<Index> starts;
    for (std::size_t k = first; k < last; ++k) {
      noisy.push_back(&valid[k].noisy);
      clean.push_back(&valid[k].clean);
      starts.push_back(centre_crop_start(valid[k].noisy.frames, segment_frames));
    }
    const auto x = Var<Real>::constant(stack_crops<Real>(noisy, starts, segment_frames));
    const auto c = Var<Real>::constant(stack_crops<Real>(clean, starts, segment_frames));
    const auto enhanced = net.enhance(x, false);
    v.feature_loss += static_cast<double>(feature_loss(enhanced, c).value()[0]);
    if (aux) v.deep_feature_loss += static_cast<double>(deep_feature_loss(enhanced, c, taps).value()[0]);
  }
  const auto n = static_cast<double>(valid.size());
  v.feature_loss /= n;
  v.deep_feature_loss = aux ? v.deep_feature_loss / n : nan();
  return v;
}

namespace {

nlohmann::json to_json(const EnhancerEpochStats& s) {
  return {{"epoch", s.epoch},
          {"step", s.step},
          {"lr", s.lr},
          {"loss", s.train_loss},
          {"val_loss", s.val_loss},
          {"val_feature_loss", s.val_feature_loss},
          {"val_deep_feature_loss", s.val_deep_feature_loss}};
}

EnhancerEpochStats epoch_stats_from_json(const nlohmann::json& j) {
  auto number = [&j](const char* key) { return j.at(key).is_null() ? nan() : j.at(key).get<double>(); };
  EnhancerEpochStats s;
  s.epoch = j.at("epoch").get<int>();
  s.step = j.at("step").get<std::int64_t>();
  s.lr = number("lr");
  s.train_loss = number("loss");
  s.val_loss = number("val_loss");
  s.val_feature_loss = number("val_feature_loss");
  s.val_deep_feature_loss = number("val_deep_feature_loss");
  return s;
}

}  // namespace

template <typename Real>
std::vector<EnhancerEpochStats> train_enhancer(nets::Enhancer<Real>& net, const nets::SpeakerNet<Real>* aux,
                                               const std::vector<ParallelFeatures>& train,
                                               const std::vector<ParallelFeatures>& valid,
                                               const EnhancerTrainConfig& config, TrainLog& log,
                                               const std::filesystem::path& state_path) {
  const auto& sc = config.schedule;
  sc.validate();
  if (needs_aux(config.loss) && !aux)
    throw std::invalid_argument("loss " + to_string(config.loss) + " needs a frozen auxiliary network");
  if (sc.segment_frames < net.context_frames())
    throw std::invalid_argument("segment_frames " + std::to_string(sc.segment_frames) +
                                " is shorter than the enhancer context of " + std::to_string(net.context_frames()));
  if (train.empty()) throw std::invalid_argument("enhancer training set is empty");
  for (const auto* set : {&train, &valid})
    for (const auto& p : *set)
      if (p.noisy.bands != p.clean.bands || p.noisy.frames != p.clean.frames)
        throw std::invalid_argument("enhancer training pair is not parallel: noisy and clean shapes differ");
  if (aux) aux->store().freeze();
  const auto taps = aux ? speaker_taps(*aux) : TapFn<Real>{};

  ad::Optimizer<Real> opt(sc.optimizer, {}, net.store().trainable());
  const ad::LrSchedule schedule{sc.base_lr, sc.decay, sc.warmup_steps, steps_per_epoch(train.size(), sc.batch_size)};
  std::vector<EnhancerEpochStats> history;
  int start_epoch = 1;
  if (!state_path.empty() && std::filesystem::exists(state_path)) {
    const auto state = ad::Checkpoint::load(state_path);
    ad::get_store(state, net.store());
    ad::get_optimizer(state, opt.state());
    for (const auto& h : state.header.at("history")) history.push_back(epoch_stats_from_json(h));
    start_epoch = state.header.at("epoch").get<int>() + 1;
  }
  std::int64_t step = opt.state().step;
  const auto inv_batch = [](std::size_t b) { return static_cast<Real>(1.0 / static_cast<double>(b)); };

  // Epoch 0: validation losses of the untrained (identity) enhancer.
  if (start_epoch == 1 && !valid.empty()) {
    const auto v = validate_enhancer(net, aux, valid, sc.segment_frames);
    log.write({{"kind", "enhancer"},
               {"loss_kind", to_string(config.loss)},
               {"epoch", 0},
               {"step", 0},
               {"val_feature_loss", v.feature_loss},
               {"val_deep_feature_loss", aux ? nlohmann::json(v.deep_feature_loss) : nlohmann::json()}});
  }

  for (int epoch = start_epoch; epoch <= sc.epochs; ++epoch) {
    auto rng = epoch_rng(sc.seed, epoch, 2);
    const auto order = shuffled_order(train.size(), rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(sc.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(sc.batch_size));
      std::vector<const audio::FeatureMatrix*> noisy, clean;
      std::vector<Index> starts;
      for (std::size_t k = first; k < last; ++k) {
        const auto& p = train[order[k]];
        noisy.push_back(&p.noisy);
        clean.push_back(&p.clean);
        starts.push_back(random_crop_start(p.noisy.frames, sc.segment_frames, rng));
      }
      const auto x = Var<Real>::constant(stack_crops<Real>(noisy, starts, sc.segment_frames));
      const auto c = Var<Real>::constant(stack_crops<Real>(clean, starts, sc.segment_frames));
      net.store().zero_grad();
      const auto enhanced = net.enhance(x, true);
      const auto loss = ad::scale(enhancement_loss(config.loss, enhanced, c, taps), inv_batch(noisy.size()));
      ad::backward(loss);
      lr = schedule.lr(step);
      opt.step(lr);
      ++step;
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(noisy.size());
    }

    const auto v = validate_enhancer(net, aux, valid, sc.segment_frames);
    EnhancerEpochStats stats;
    stats.epoch = epoch;
    stats.step = step;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.val_feature_loss = v.feature_loss;
    stats.val_deep_feature_loss = v.deep_feature_loss;
    stats.val_loss = config.loss == LossKind::fl    ? v.feature_loss
                     : config.loss == LossKind::dfl ? v.deep_feature_loss
                                                    : v.feature_loss + v.deep_feature_loss;
    history.push_back(stats);
    auto record = to_json(stats);
    record["kind"] = "enhancer";
    record["loss_kind"] = to_string(config.loss);
    log.write(record);

    if (!state_path.empty()) {
      ad::Checkpoint state;
      state.header["epoch"] = epoch;
      state.header["history"] = nlohmann::json::array();
      for (const auto& h : history) state.header["history"].push_back(to_json(h));
      ad::put_store(state, net.store());
      ad::put_optimizer(state, opt.state());
      state.save(state_path);
    }
  }
  return history;
}

#define DFL_TRAINER_INSTANTIATE(R)                                                                                   \
  template double speaker_accuracy<R>(const nets::SpeakerNet<R>&, const std::vector<LabeledFeatures>&);             \
  template std::vector<AuxEpochStats> train_speaker_net<R>(nets::SpeakerNet<R>&, const std::vector<LabeledFeatures>&, \
                                                           const std::vector<LabeledFeatures>&, const AuxTrainConfig&, \
                                                           TrainLog&);                                              \
  template EnhancerValidation validate_enhancer<R>(const nets::Enhancer<R>&, const nets::SpeakerNet<R>*,            \
                                                   const std::vector<ParallelFeatures>&, int);                       \
  template std::vector<EnhancerEpochStats> train_enhancer<R>(                                                        \
      nets::Enhancer<R>&, const nets::SpeakerNet<R>*, const std::vector<ParallelFeatures>&,                          \
      const std::vector<ParallelFeatures>&, const EnhancerTrainConfig&, TrainLog&, const std::filesystem::path&);

DFL_TRAINER_INSTANTIATE(float)
DFL_TRAINER_INSTANTIATE(double)

}  // namespace dfl::train
