#include "dfl/nets/can.hpp"

#include <stdexcept>

namespace dfl::nets {

std::string to_string(TseMode mode) { return mode == TseMode::time_broadcast ? "time_broadcast" : "per_frame"; }

TseMode tse_mode_from_string(const std::string& name) {
  if (name == "time_broadcast") return TseMode::time_broadcast;
  if (name == "per_frame") return TseMode::per_frame;
  throw std::invalid_argument("unknown TSE mode: " + name);
}

void CanConfig::validate() const {
  if (bands < 1 || channels < 1 || layers < 1) throw std::invalid_argument("CAN: bands, channels and layers must be positive");
  if (static_cast<int>(dilations.size()) != layers)
    throw std::invalid_argument("CAN: expected " + std::to_string(layers) + " dilations, got " +
                                std::to_string(dilations.size()));
  if (dilations.front() != 1 || dilations.back() != layers)
    throw std::invalid_argument("CAN: dilations must run from 1 to the layer count");
  for (std::size_t i = 1; i < dilations.size(); ++i)
    if (dilations[i] <= dilations[i - 1]) throw std::invalid_argument("CAN: dilations must be strictly increasing");
  for (std::size_t i = 0; i < tse_positions.size(); ++i) {
    if (tse_positions[i] < 1 || tse_positions[i] > layers)
      throw std::invalid_argument("CAN: TSE position " + std::to_string(tse_positions[i]) + " outside [1, layers]");
    if (i > 0 && tse_positions[i] <= tse_positions[i - 1])
      throw std::invalid_argument("CAN: TSE positions must be strictly increasing");
    if (i > 1 && tse_positions[i] - tse_positions[i - 1] != tse_positions[1] - tse_positions[0])
      throw std::invalid_argument("CAN: TSE positions must be uniformly spaced");
  }
  if (tse_reduction < 1 || (channels * bands) / tse_reduction < 1)
    throw std::invalid_argument("CAN: TSE reduction too large for channels x bands");
  if (!(leaky_slope >= 0.0)) throw std::invalid_argument("CAN: negative LeakyReLU slope");
}

int CanConfig::analytic_receptive_field() const {
  int rf = 1;
  for (int d : dilations) rf += 2 * d;
  return rf;
}

void to_json(nlohmann::json& j, const CanConfig& c) {
  j = {{"bands", c.bands},
       {"layers", c.layers},
       {"channels", c.channels},
       {"dilations", c.dilations},
       {"tse_positions", c.tse_positions},
       {"tse_reduction", c.tse_reduction},
       {"tse_mode", to_string(c.tse_mode)},
       {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, CanConfig& c) {
  c.bands = j.value("bands", c.bands);
  c.layers = j.value("layers", c.layers);
  c.channels = j.value("channels", c.channels);
  c.dilations = j.value("dilations", c.dilations);
  c.tse_positions = j.value("tse_positions", c.tse_positions);
  c.tse_reduction = j.value("tse_reduction", c.tse_reduction);
  c.tse_mode = tse_mode_from_string(j.value("tse_mode", to_string(c.tse_mode)));
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
}

template <typename Real>
ContextAggregationNet<Real>::ContextAggregationNet(const CanConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto& store = this->store_;
  const Index c = config_.channels;
  const Index cf = c * config_.bands;
  const Index bottleneck = cf / config_.tse_reduction;
  input_norm_ = BatchNorm2d<Real>::make(store, "can.input_norm", 1);
  std::size_t next_tse = 0;
  for (int l = 1; l <= config_.layers; ++l) {
    const std::string name = "can.layer" + std::to_string(l);
    const Index d = config_.dilations[static_cast<std::size_t>(l - 1)];
    Block b;
    b.conv = Conv2d<Real>::make(store, name + ".conv", l == 1 ? 1 : c, c, 3, 3, ConvSpec::same(3, 3, d, d), rng, false);
    b.norm = AdaptiveBatchNorm<Real>::make(store, name + ".norm", c);
    if (next_tse < config_.tse_positions.size() && config_.tse_positions[next_tse] == l) {
      Tse t;
      t.squeeze = Linear<Real>::make(store, name + ".tse.squeeze", cf, bottleneck, rng, std::sqrt(2.0));
      t.excite = Linear<Real>::make(store, name + ".tse.excite", bottleneck, cf, rng);
      tse_.push_back(t);
      b.tse = static_cast<int>(next_tse++);
    }
    blocks_.push_back(b);
  }
  this->head_ = Conv2d<Real>::make(store, "can.head", c, 1, 1, 1, ConvSpec{}, rng, true, true);
}

template <typename Real>
Var<Real> ContextAggregationNet<Real>::gates(const Tse& tse, const Var<Real>& h) const {
  const Index n = h.dim(0), c = h.dim(1), f = h.dim(2), t = h.dim(3);
  if (config_.tse_mode == TseMode::time_broadcast) {
    auto z = ad::reshape(ad::mean_time(h), {n, c * f});
    z = ad::sigmoid(tse.excite(ad::relu(tse.squeeze(z))));
    return ad::reshape(z, {n, c, f});
  }
  auto cols = ad::reshape(ad::transpose_last2(ad::reshape(h, {n, c * f, t})), {n * t, c * f});
  auto z = ad::sigmoid(tse.excite(ad::relu(tse.squeeze(cols))));
  return ad::reshape(ad::transpose_last2(ad::reshape(z, {n, t, c * f})), {n, c, f, t});
}

template <typename Real>
Var<Real> ContextAggregationNet<Real>::run(const Var<Real>& x, bool train,
                                           const std::vector<Tensor<Real>>* frozen_gates,
                                           std::vector<Tensor<Real>>* record_gates) const {
  this->require_input(x, config_.bands);
  const auto slope = static_cast<Real>(config_.leaky_slope);
  Var<Real> h = input_norm_(x, train);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    auto y = ad::leaky_relu(b.norm(b.conv(h), train), slope);
    if (b.tse >= 0) {
      const auto k = static_cast<std::size_t>(b.tse);
      const Var<Real> g = frozen_gates ? Var<Real>::constant((*frozen_gates)[k]) : gates(tse_[k], y);
      if (record_gates) record_gates->push_back(g.value());
      y = config_.tse_mode == TseMode::time_broadcast ? ad::mul_time_broadcast(y, g) : ad::mul(y, g);
    }
    h = i == 0 ? y : ad::add(h, y);
  }
  return h;
}

template <typename Real>
Var<Real> ContextAggregationNet<Real>::hidden(const Var<Real>& x, bool train) const {
  return run(x, train, nullptr, nullptr);
}

template <typename Real>
Var<Real> ContextAggregationNet<Real>::probe_hidden(const Var<Real>& x) const {
  std::vector<Tensor<Real>> recorded;
  {
    ad::NoGradGuard no_grad;
    run(x, false, nullptr, &recorded);
  }
  return run(x, false, &recorded, nullptr);
}

template class ContextAggregationNet<float>;
template class ContextAggregationNet<double>;

}  // namespace dfl::nets
