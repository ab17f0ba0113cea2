#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "dfl/autodiff/checkpoint.hpp"
#include "dfl/nets/can.hpp"
#include "dfl/nets/serialize.hpp"
#include "dfl/train/batching.hpp"
#include "dfl/train/losses.hpp"
#include "dfl/train/trainer.hpp"

using namespace dfl::train;
using dfl::ad::Index;
using dfl::ad::Tensor;
using dfl::testing::gradient_check;
using dfl::testing::loop_l1;
using dfl::testing::random_tensor;
using VarD = dfl::ad::Var<double>;

namespace {

dfl::nets::SpeakerNetConfig toy_speaker(int bands = 8, int speakers = 3) {
  dfl::nets::SpeakerNetConfig c;
  c.bands = bands;
  c.stem_channels = 2;
  c.stage_channels = {2, 3, 3, 4};
  c.lde_components = 2;
  c.embed_dim = 4;
  c.speakers = speakers;
  c.logit_scale = 4.0;
  return c;
}

dfl::nets::CanConfig mini_can(int bands = 8) {
  dfl::nets::CanConfig c;
  c.bands = bands;
  c.layers = 2;
  c.channels = 4;
  c.dilations = {1, 2};
  c.tse_positions = {2};
  c.tse_reduction = 4;
  return c;
}

void perturb(const dfl::ad::ParameterStore<double>& store, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> g(0.0, sd);
  for (const auto& p : store.trainable()) {
    auto v = p.var;
    for (auto& e : v.value().values()) e += g(rng);
  }
}

dfl::audio::FeatureMatrix matrix(Index bands, Index frames, const std::function<double(Index, Index)>& fn) {
  dfl::audio::FeatureMatrix m;
  m.bands = bands;
  m.frames = frames;
  m.values.resize(static_cast<std::size_t>(bands * frames));
  for (Index f = 0; f < bands; ++f)
    for (Index t = 0; t < frames; ++t) m.at(f, t) = fn(f, t);
  return m;
}

// Speakers differ by a band-energy profile; utterances add frame noise.
std::vector<LabeledFeatures> toy_speakers(int speakers, int per_speaker, Index bands, Index frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> profile(static_cast<std::size_t>(speakers));
  for (auto& p : profile)
    for (Index f = 0; f < bands; ++f) p.push_back(2.0 * g(rng));
  std::vector<LabeledFeatures> out;
  for (int k = 0; k < per_speaker; ++k)
    for (int s = 0; s < speakers; ++s)
      out.push_back({matrix(bands, frames, [&](Index f, Index) { return -5.0 + profile[s][f] + 0.5 * g(rng); }), s});
  return out;
}

std::vector<ParallelFeatures> toy_pairs(int count, Index bands, Index frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ParallelFeatures> out;
  for (int i = 0; i < count; ++i) {
    auto clean = matrix(bands, frames, [&](Index f, Index t) { return -4.0 + std::sin(0.3 * t + f) + 0.2 * g(rng); });
    auto noisy = clean;
    for (auto& v : noisy.values) v = std::log(std::exp(v) + 0.3 * std::exp(0.3 * g(rng)));
    out.push_back({noisy, clean});
  }
  return out;
}

}  // namespace

TEST_CASE("feature loss values") {
  auto c = VarD::constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto e = VarD::constant(Tensor<double>({1, 1, 2, 2}, {1, 1, 3, 3}));
  CHECK(feature_loss(e, c).value()[0] == 2.0);
  CHECK(feature_loss(c, c).value()[0] == 0.0);
  std::mt19937_64 rng(1);
  const auto a = random_tensor({3, 1, 8, 11}, rng), b = random_tensor({3, 1, 8, 11}, rng);
  CHECK(std::abs(feature_loss(VarD::constant(a), VarD::constant(b)).value()[0] - loop_l1(a, b)) < 1e-10);
  CHECK_THROWS(feature_loss(VarD::constant(a), VarD::constant(Tensor<double>({3, 1, 8, 10}))));
}

TEST_CASE("loss kind names") {
  CHECK(loss_kind_from_string("dfl+fl") == LossKind::dfl_fl);
  CHECK(to_string(LossKind::dfl) == "dfl");
  CHECK_THROWS(loss_kind_from_string("l2"));
}

TEST_CASE("deep feature loss definitions") {
  std::mt19937_64 rng(2);
  dfl::nets::SpeakerNet<double> aux(toy_speaker(), 3);
  perturb(aux.store(), rng, 0.1);
  const auto taps = speaker_taps(aux);
  auto clean = VarD::constant(random_tensor({2, 1, 8, 16}, rng, -6.0, 0.0));
  auto enhanced = VarD::constant(random_tensor({2, 1, 8, 16}, rng, -6.0, 0.0));

  CHECK(deep_feature_loss(clean, clean, taps).value()[0] == 0.0);
  CHECK(combined_loss(clean, clean, taps).value()[0] == 0.0);

  // L = 1 with the mean-normalization tap reduces to FL on normalized features
  const TapFn<double> identity = [](const VarD& x) { return std::vector<VarD>{dfl::ad::mean_normalize(x)}; };
  const double reduced = deep_feature_loss(enhanced, clean, identity).value()[0];
  const double direct =
      feature_loss(dfl::ad::mean_normalize(enhanced), dfl::ad::mean_normalize(clean)).value()[0];
  CHECK(reduced == doctest::Approx(direct).epsilon(1e-14));

  // value equals the loop-summed tap deviations
  const auto ct = aux.forward(clean, false).taps;
  const auto et = aux.forward(enhanced, false).taps;
  REQUIRE(ct.size() == 6);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 6; ++i) oracle += loop_l1(ct[i].value(), et[i].value());
  const double dfl_value = deep_feature_loss(enhanced, clean, taps).value()[0];
  CHECK(std::abs(dfl_value - oracle) < 1e-10);

  const double fl_value = feature_loss(enhanced, clean).value()[0];
  const double both = combined_loss(enhanced, clean, taps).value()[0];
  CHECK(std::abs(both - (dfl_value + fl_value)) < 1e-12);
  CHECK(both >= dfl_value);
  CHECK(both >= fl_value);

  CHECK_THROWS(deep_feature_loss(enhanced, clean, TapFn<double>{}));
  CHECK_THROWS(enhancement_loss(LossKind::dfl, enhanced, clean, TapFn<double>{}));
}

TEST_CASE("loss gradients w.r.t. a miniature CAN match finite differences") {
  std::mt19937_64 rng(4);
  dfl::nets::SpeakerNet<double> aux(toy_speaker(), 5);
  perturb(aux.store(), rng, 0.1);
  aux.store().freeze();
  const auto taps = speaker_taps(aux);
  dfl::nets::ContextAggregationNet<double> can(mini_can(), 6);
  perturb(can.store(), rng, 0.3);
  auto noisy = VarD::constant(random_tensor({2, 1, 8, 12}, rng, -6.0, 0.0));
  auto clean = VarD::constant(random_tensor({2, 1, 8, 12}, rng, -6.0, 0.0));
  std::vector<VarD> params;
  for (const auto& p : can.store().trainable()) params.push_back(p.var);
  for (auto kind : {LossKind::fl, LossKind::dfl, LossKind::dfl_fl}) {
    CAPTURE(to_string(kind));
    const auto r = gradient_check(
        [&] { return enhancement_loss(kind, can.enhance(noisy, true), clean, taps); }, params, 1e-6, 1e-6);
    CAPTURE(r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
  for (const auto& p : aux.store().entries()) CHECK_FALSE(p.var.has_grad());
}

TEST_CASE("crop batching") {
  const auto m = matrix(3, 5, [](Index f, Index t) { return 10.0 * f + t; });
  const auto t = stack_crops<double>({&m, &m}, {1, 3}, 4);
  CHECK(t.shape() == dfl::ad::Shape{2, 1, 3, 4});
  CHECK(t.at(0, 0, 2, 0) == 21.0);
  CHECK(t.at(1, 0, 1, 3) == 11.0);  // wraps to frame 1
  CHECK(centre_crop_start(10, 4) == 3);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_crop_start(10, 4, rng);
    CHECK(s >= 0);
    CHECK(s <= 6);
  }
  CHECK(to_matrix(to_tensor<double>(m), m.domain).values == m.values);
}

TEST_CASE("speaker training descends and is deterministic") {
  const auto train = toy_speakers(3, 8, 8, 40, 7);
  const auto valid = toy_speakers(3, 2, 8, 40, 8);
  AuxTrainConfig cfg;
  cfg.schedule.epochs = 3;
  cfg.schedule.batch_size = 6;
  cfg.schedule.segment_frames = 24;
  cfg.schedule.base_lr = 0.01;
  cfg.schedule.seed = 9;
  auto run = [&] {
    dfl::nets::SpeakerNet<double> net(toy_speaker(8, 3), 10);
    TrainLog log;
    const auto hist = train_speaker_net(net, train, valid, cfg, log);
    dfl::ad::Checkpoint ckpt;
    dfl::nets::put_speaker_net(ckpt, net);
    return std::make_pair(hist, ckpt.to_bytes());
  };
  // full-set train-mode loss at a fixed blend weight, before and after one epoch
  auto batch_loss = [&](dfl::nets::SpeakerNet<double>& net) {
    dfl::ad::NoGradGuard no_grad;
    std::vector<const dfl::audio::FeatureMatrix*> items;
    std::vector<Index> starts;
    std::vector<int> labels;
    for (const auto& item : train) {
      items.push_back(&item.features);
      starts.push_back(0);
      labels.push_back(item.label);
    }
    const auto out = net.forward(VarD::constant(stack_crops<double>(items, starts, 40)), true);
    return net.classification_loss(out.embedding, labels, cfg.lambda_min).value()[0];
  };
  dfl::nets::SpeakerNet<double> untrained(toy_speaker(8, 3), 10);
  const double initial = batch_loss(untrained);
  dfl::nets::SpeakerNet<double> one_epoch(toy_speaker(8, 3), 10);
  auto cfg1 = cfg;
  cfg1.schedule.epochs = 1;
  TrainLog quiet;
  train_speaker_net(one_epoch, train, valid, cfg1, quiet);
  CHECK(batch_loss(one_epoch) < initial);

  const auto [hist, bytes] = run();
  REQUIRE(hist.size() == 3);
  CHECK(hist[2].train_loss < hist[0].train_loss);
  CHECK(run().second == bytes);

  std::vector<LabeledFeatures> single(train.begin(), train.begin() + 1);
  dfl::nets::SpeakerNet<double> net(toy_speaker(8, 3), 10);
  TrainLog log;
  CHECK_THROWS(train_speaker_net(net, single, valid, cfg, log));
}

TEST_CASE("enhancer training: descent, frozen auxiliary, resume and errors") {
  const auto train = toy_pairs(12, 8, 30, 11);
  const auto valid = toy_pairs(4, 8, 30, 12);
  dfl::nets::SpeakerNet<double> aux(toy_speaker(), 13);
  dfl::ad::Checkpoint before;
  dfl::nets::put_speaker_net(before, aux);

  EnhancerTrainConfig cfg;
  cfg.loss = LossKind::dfl_fl;
  cfg.schedule.epochs = 3;
  cfg.schedule.batch_size = 4;
  cfg.schedule.segment_frames = 13;
  cfg.schedule.base_lr = 0.01;
  cfg.schedule.seed = 14;

  std::ostringstream sink;
  TrainLog log(&sink);
  dfl::nets::ContextAggregationNet<double> straight(mini_can(), 15);
  const auto start = validate_enhancer<double>(straight, &aux, valid, 13);
  const auto hist = train_enhancer<double>(straight, &aux, train, valid, cfg, log);
  REQUIRE(hist.size() == 3);
  CHECK(hist.back().val_loss < start.feature_loss + start.deep_feature_loss);
  const auto text = sink.str();
  // epoch 0 (untrained) plus one line per epoch
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  REQUIRE(log.records().size() == 4);
  CHECK(log.records()[0].at("epoch") == 0);
  CHECK(log.records()[0].at("val_feature_loss").get<double>() == start.feature_loss);
  CHECK(log.records()[0].at("val_deep_feature_loss").get<double>() == start.deep_feature_loss);

  dfl::ad::Checkpoint after;
  dfl::nets::put_speaker_net(after, aux);
  CHECK(after.to_bytes() == before.to_bytes());

  // interrupted after one epoch, then resumed from the epoch state
  const auto state = std::filesystem::temp_directory_path() / "dfl_resume_test.ckpt";
  std::filesystem::remove(state);
  dfl::nets::ContextAggregationNet<double> resumed(mini_can(), 15);
  auto first = cfg;
  first.schedule.epochs = 1;
  TrainLog l1, l2;
  train_enhancer<double>(resumed, &aux, train, valid, first, l1, state);
  dfl::nets::ContextAggregationNet<double> fresh(mini_can(), 99);
  const auto rest = train_enhancer<double>(fresh, &aux, train, valid, cfg, l2, state);
  REQUIRE(rest.size() == 3);
  CHECK(l2.records().size() == 2);
  for (std::size_t i = 0; i < straight.store().entries().size(); ++i)
    CHECK(fresh.store().entries()[i].var.value().storage() == straight.store().entries()[i].var.value().storage());
  std::filesystem::remove(state);

  dfl::nets::ContextAggregationNet<double> net(mini_can(), 16);
  TrainLog l3;
  CHECK_THROWS(train_enhancer<double>(net, nullptr, train, valid, cfg, l3));
  auto broken = train;
  broken[0].clean.frames -= 1;
  broken[0].clean.values.resize(static_cast<std::size_t>(broken[0].clean.bands * broken[0].clean.frames));
  CHECK_THROWS(train_enhancer<double>(net, &aux, broken, valid, cfg, l3));
  auto short_cfg = cfg;
  short_cfg.schedule.segment_frames = 5;
  CHECK_THROWS(train_enhancer<double>(net, &aux, train, valid, short_cfg, l3));
}
