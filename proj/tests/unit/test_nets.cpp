#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "dfl/nets/can.hpp"
#include "dfl/nets/edn.hpp"
#include "dfl/nets/serialize.hpp"
#include "dfl/nets/speaker.hpp"

using namespace dfl::nets;
using dfl::ad::Index;
using dfl::ad::Tensor;
using dfl::testing::gradient_check;
using dfl::testing::random_tensor;
using VarD = dfl::ad::Var<double>;

namespace {

CanConfig small_can(int bands = 40, int channels = 4) {
  CanConfig c;
  c.bands = bands;
  c.channels = channels;
  c.tse_reduction = 4;
  return c;
}

EdnConfig small_edn(int channels = 2) {
  EdnConfig c;
  c.channels = channels;
  return c;
}

SpeakerNetConfig small_speaker() {
  SpeakerNetConfig c;
  c.bands = 8;
  c.stem_channels = 2;
  c.stage_channels = {2, 3, 3, 4};
  c.lde_components = 2;
  c.embed_dim = 3;
  c.speakers = 3;
  return c;
}

// Direct evaluation of learnable dictionary encoding for one utterance.
std::vector<double> lde_loop(const Tensor<double>& frames, Index n, const Tensor<double>& centers,
                             const Tensor<double>& scales, const Tensor<double>& biases) {
  const Index t_len = frames.dim(1), d = frames.dim(2), k = centers.dim(0);
  std::vector<double> out(static_cast<std::size_t>(k * d), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(k), 0.0);
  for (Index t = 0; t < t_len; ++t) {
    std::vector<double> logits(static_cast<std::size_t>(k));
    double mx = -1e300;
    for (Index j = 0; j < k; ++j) {
      double dist = 0.0;
      for (Index i = 0; i < d; ++i) {
        const double r = frames[(n * t_len + t) * d + i] - centers[j * d + i];
        dist += r * r;
      }
      logits[j] = -scales[j] * dist + biases[j];
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    for (Index j = 0; j < k; ++j) {
      const double w = std::exp(logits[j] - mx) / z;
      wsum[j] += w;
      for (Index i = 0; i < d; ++i) out[j * d + i] += w * (frames[(n * t_len + t) * d + i] - centers[j * d + i]);
    }
  }
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < d; ++i) out[j * d + i] /= wsum[j] + 1e-6;
  return out;
}

}  // namespace

TEST_CASE("CAN config validation") {
  CanConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.analytic_receptive_field() == 73);
  auto bad = c;
  bad.dilations = {1, 2, 3, 4, 5, 6, 8, 7};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.dilations = {2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.tse_positions = {1, 2, 8};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.tse_positions = {0, 4, 8};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(ContextAggregationNet<double>(bad, 1), std::invalid_argument);
}

TEST_CASE("CAN parameter count is on the order of a million at the default width") {
  const ContextAggregationNet<float> net(CanConfig{}, 1);
  const auto count = net.store().parameter_count();
  MESSAGE("default CAN parameters: " << count);
  CHECK(count > 1'000'000);
  CHECK(count < 10'000'000);
}

TEST_CASE("receptive field of simple stacks matches the dilation sum") {
  std::mt19937_64 rng(1);
  auto w1 = VarD::constant(random_tensor({1, 1, 3, 3}, rng));
  const auto single = [&](const VarD& x) { return dfl::ad::conv2d(x, w1, VarD(), ConvSpec::same(3, 3)); };
  CHECK(receptive_field<double>(single, 5, 21) == 3);

  for (int k : {2, 3, 5}) {
    std::vector<VarD> ws;
    for (int d = 1; d <= k; ++d) ws.push_back(VarD::constant(random_tensor({1, 1, 3, 3}, rng)));
    const auto stack = [&](const VarD& x) {
      VarD h = x;
      for (int d = 1; d <= k; ++d) h = dfl::ad::conv2d(h, ws[d - 1], VarD(), ConvSpec::same(3, 3, d, d));
      return h;
    };
    CHECK(receptive_field<double>(stack, 5, 81) == 1 + k * (k + 1));
  }
}

TEST_CASE("CAN receptive field is 73 frames in both TSE modes") {
  for (auto mode : {TseMode::time_broadcast, TseMode::per_frame}) {
    auto cfg = small_can(8, 3);
    cfg.tse_mode = mode;
    const ContextAggregationNet<double> net(cfg, 2);
    CHECK(receptive_field(net, 8, 181) == 73);
  }
}

TEST_CASE("zero-initialized head makes the CAN an exact identity") {
  std::mt19937_64 rng(3);
  const ContextAggregationNet<double> net(small_can(40, 3), 3);
  auto x = VarD::constant(random_tensor({2, 1, 40, 30}, rng, -20.0, 5.0));
  for (bool train : {false, true}) {
    const auto logits = net.mask_logits(x, train);
    for (double v : logits.value().values()) CHECK(v == 0.0);
    const auto y = net.enhance(x, train);
    CHECK(y.value().storage() == x.value().storage());
  }
}

TEST_CASE("log-domain mask application") {
  std::mt19937_64 rng(4);
  auto x = VarD::constant(random_tensor({1, 1, 4, 6}, rng, -5.0, 2.0));
  // 2 * sigmoid(z) = 0.5 at z = log(1/3)
  auto half = VarD::constant(Tensor<double>({1, 1, 4, 6}, std::log(1.0 / 3.0)));
  const auto shifted = apply_log_mask(x, half);
  for (Index i = 0; i < x.value().size(); ++i)
    CHECK(shifted.value()[i] - x.value()[i] == doctest::Approx(std::log(0.5)).epsilon(1e-12));

  auto logits = VarD::constant(random_tensor({1, 1, 4, 6}, rng, -4.0, 4.0));
  const auto y = apply_log_mask(x, logits);
  for (Index i = 0; i < x.value().size(); ++i) {
    const double mask = 2.0 / (1.0 + std::exp(-logits.value()[i]));
    CHECK(std::abs(std::exp(y.value()[i]) / std::exp(x.value()[i]) - mask) < 1e-6);
    CHECK(std::isfinite(y.value()[i]));
  }
}

TEST_CASE("enhancers reject bad input") {
  const ContextAggregationNet<double> net(small_can(40, 2), 5);
  Tensor<double> bad({1, 1, 40, 10});
  bad[3] = std::nan("");
  CHECK_THROWS_AS(net.enhance(VarD::constant(bad), false), std::invalid_argument);
  CHECK_THROWS(net.enhance(VarD::constant(Tensor<double>({1, 1, 39, 10})), false));
}

TEST_CASE("EDN preserves shape and has a 55-frame receptive field") {
  const EncoderDecoderNet<double> net(small_edn(), 6);
  CHECK(net.config().analytic_receptive_field() == 55);
  std::mt19937_64 rng(6);
  for (Index t : {55, 100, 500}) {
    auto x = VarD::constant(random_tensor({1, 1, 40, t}, rng));
    CHECK(net.enhance(x, false).shape() == x.shape());
  }
  CHECK(receptive_field(net, 40, 141) == 55);
  auto x = VarD::constant(random_tensor({1, 1, 40, 20}, rng));
  CHECK(net.enhance(x, false).value().storage() == x.value().storage());

  EdnConfig bad = small_edn();
  bad.bands = 42;
  CHECK_THROWS_AS(EncoderDecoderNet<double>(bad, 1), std::invalid_argument);
}

TEST_CASE("eval-mode enhancement is deterministic") {
  std::mt19937_64 rng(7);
  const ContextAggregationNet<float> a(small_can(40, 3), 11), b(small_can(40, 3), 11);
  auto x = dfl::ad::Var<float>::constant(random_tensor({1, 1, 40, 25}, rng).cast<float>());
  CHECK(a.hidden(x, false).value().storage() == b.hidden(x, false).value().storage());
  CHECK(a.hidden(x, false).value().storage() == a.hidden(x, false).value().storage());
}

TEST_CASE("mini CAN gradients match finite differences") {
  std::mt19937_64 rng(8);
  auto cfg = small_can(4, 2);
  cfg.tse_reduction = 2;
  ContextAggregationNet<double> net(cfg, 9);
  // Perturb every parameter away from its initial value so that the zero head
  // and unit-gain adaptive BN do not hide gradient paths.
  for (const auto& p : net.store().trainable()) {
    auto v = p.var;
    for (auto& e : v.value().values()) e += 0.3 * std::normal_distribution<double>()(rng);
  }
  auto x = VarD::leaf(random_tensor({2, 1, 4, 9}, rng, -3.0, 1.0));
  auto probe = VarD::constant(random_tensor({2, 1, 4, 9}, rng));
  std::vector<VarD> inputs{x};
  for (const auto& p : net.store().trainable()) inputs.push_back(p.var);
  const auto r = gradient_check(
      [&] { return dfl::ad::sum(dfl::ad::mul(net.enhance(x, true), probe)); }, inputs);
  CAPTURE(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("speaker net shapes, taps and determinism") {
  SpeakerNetConfig cfg;
  cfg.stage_channels = {4, 6, 8, 8};
  cfg.stem_channels = 4;
  cfg.embed_dim = 16;
  const SpeakerNet<float> net(cfg, 12);
  std::mt19937_64 rng(12);
  auto x = dfl::ad::Var<float>::constant(random_tensor({2, 1, 40, 200}, rng, -10.0, 0.0).cast<float>());
  const auto out = net.forward(x, false);
  REQUIRE(out.taps.size() == 6);
  CHECK(SpeakerNet<float>::tap_names().size() == 6);
  CHECK(out.embedding.shape() == dfl::ad::Shape{2, 16});
  CHECK(net.class_cosines(out.embedding.value()).shape() == dfl::ad::Shape{2, 20});
  CHECK(out.embedding.value().all_finite());
  double norm = 0.0;
  for (float v : out.embedding.value().values()) norm += v * v;
  CHECK(norm > 0.0);

  const auto again = net.forward(x, false);
  for (std::size_t i = 0; i < 6; ++i) CHECK(again.taps[i].value().storage() == out.taps[i].value().storage());
  auto y = dfl::ad::Var<float>::constant(random_tensor({2, 1, 40, 200}, rng, -10.0, 0.0).cast<float>());
  const auto other = net.forward(y, false);
  for (std::size_t i = 0; i < 6; ++i) CHECK(other.taps[i].value().storage() != out.taps[i].value().storage());
}

TEST_CASE("speaker taps are differentiable with respect to the features") {
  SpeakerNet<double> net(small_speaker(), 13);
  net.store().freeze();
  std::mt19937_64 rng(13);
  auto x = VarD::leaf(random_tensor({1, 1, 8, 12}, rng, -4.0, 2.0));
  const auto r = gradient_check(
      [&] {
        const auto out = net.forward(x, false);
        VarD total;
        for (const auto& tap : out.taps) {
          const auto zero = VarD::constant(Tensor<double>(tap.shape()));
          const auto term = dfl::ad::l1_distance(tap, zero);
          total = total.defined() ? dfl::ad::add(total, term) : term;
        }
        return total;
      },
      {x}, 1e-7);
  CAPTURE(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("lde pooling matches the loop oracle and its special cases") {
  std::mt19937_64 rng(14);
  const auto frames = random_tensor({2, 7, 3}, rng);
  const auto centers = random_tensor({4, 3}, rng);
  const auto scales = random_tensor({4}, rng, 0.2, 2.0);
  const auto biases = random_tensor({4}, rng);
  const auto y = dfl::ad::lde_pool(VarD::constant(frames), VarD::constant(centers), VarD::constant(scales),
                                   VarD::constant(biases))
                     .value();
  double worst = 0.0;
  for (Index n = 0; n < 2; ++n) {
    const auto expect = lde_loop(frames, n, centers, scales, biases);
    for (Index i = 0; i < 12; ++i) worst = std::max(worst, std::abs(expect[i] - y[n * 12 + i]));
  }
  CHECK(worst < 1e-10);

  // one component: weights are all 1, so the output is the mean residual
  const auto c1 = random_tensor({1, 3}, rng);
  const auto y1 = dfl::ad::lde_pool(VarD::constant(frames), VarD::constant(c1),
                                    VarD::constant(Tensor<double>({1}, 1.0)), VarD::constant(Tensor<double>({1})))
                      .value();
  for (Index i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (Index t = 0; t < 7; ++t) mean += frames[t * 3 + i];
    mean /= 7.0;
    CHECK(y1[i] == doctest::Approx((mean - c1[i]) * 7.0 / (7.0 + 1e-6)).epsilon(1e-12));
  }

  // frames sitting on a well-separated centre leave a zero residual there
  Tensor<double> far({2, 2}, {0.0, 0.0, 50.0, 50.0});
  Tensor<double> on_centre({1, 5, 2}, 50.0);
  const auto y2 = dfl::ad::lde_pool(VarD::constant(on_centre), VarD::constant(far),
                                    VarD::constant(Tensor<double>({2}, 1.0)), VarD::constant(Tensor<double>({2})))
                      .value();
  CHECK(std::abs(y2[2]) < 1e-12);
  CHECK(std::abs(y2[3]) < 1e-12);
}

TEST_CASE("angular softmax loss falls as the target angle shrinks") {
  Tensor<double> w({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
  double previous = 1e300;
  for (double angle : {1.4, 1.0, 0.6, 0.3, 0.1}) {
    Tensor<double> e({1, 2}, {std::cos(angle), std::sin(angle)});
    const double loss =
        dfl::ad::angular_softmax_loss(VarD::constant(e), VarD::constant(w), {0}, {2, 5.0, 4.0}).value()[0];
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK_THROWS(dfl::ad::angular_softmax_loss(VarD::constant(Tensor<double>({1, 2}, 1.0)), VarD::constant(w), {0},
                                             {0, 0.0, 1.0}));
}

TEST_CASE("network checkpoints round trip through the architecture header") {
  std::mt19937_64 rng(15);
  const ContextAggregationNet<double> can(small_can(40, 3), 16);
  auto mutable_store = can.store();
  for (const auto& p : mutable_store.trainable()) {
    auto v = p.var;
    for (auto& e : v.value().values()) e += 0.1;
  }
  dfl::ad::Checkpoint ckpt;
  put_enhancer(ckpt, can);
  const auto loaded = get_enhancer<double>(dfl::ad::Checkpoint::from_bytes(ckpt.to_bytes()));
  REQUIRE(loaded->kind() == EnhancerKind::can);
  auto x = VarD::constant(random_tensor({1, 1, 40, 20}, rng));
  CHECK(loaded->enhance(x, false).value().storage() == can.enhance(x, false).value().storage());

  const SpeakerNet<double> spk(small_speaker(), 17);
  dfl::ad::Checkpoint sc;
  put_speaker_net(sc, spk);
  CHECK(sc.header["taps"].size() == 6);
  const auto spk2 = get_speaker_net<double>(sc);
  auto xs = VarD::constant(random_tensor({1, 1, 8, 20}, rng));
  CHECK(spk2->forward(xs, false).embedding.value().storage() == spk.forward(xs, false).embedding.value().storage());
  CHECK_THROWS_AS(get_enhancer<double>(sc), dfl::ad::CheckpointError);
  CHECK_THROWS_AS(get_speaker_net<double>(ckpt), dfl::ad::CheckpointError);
}
