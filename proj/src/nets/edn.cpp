#include "dfl/nets/edn.hpp"

#include <stdexcept>

namespace dfl::nets {

void EdnConfig::validate() const {
  if (bands < 1 || channels < 1) throw std::invalid_argument("EDN: bands and channels must be positive");
  if (down_stages < 0 || residual_blocks < 0) throw std::invalid_argument("EDN: negative stage count");
  if (bands % (1 << down_stages) != 0)
    throw std::invalid_argument("EDN: " + std::to_string(bands) + " bands cannot be restored after " +
                                std::to_string(down_stages) + " frequency halvings");
  for (int k : {input_kernel_f, input_kernel_t, output_kernel})
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("EDN: kernel sizes must be odd and positive");
}

int EdnConfig::analytic_receptive_field() const {
  // every 3x3 conv adds 2 frames; the input and output kernels add k - 1
  return 1 + (input_kernel_t - 1) + 2 * down_stages + 4 * residual_blocks + 2 * down_stages + (output_kernel - 1);
}

void to_json(nlohmann::json& j, const EdnConfig& c) {
  j = {{"bands", c.bands},
       {"channels", c.channels},
       {"input_kernel_f", c.input_kernel_f},
       {"input_kernel_t", c.input_kernel_t},
       {"down_stages", c.down_stages},
       {"residual_blocks", c.residual_blocks},
       {"output_kernel", c.output_kernel}};
}

void from_json(const nlohmann::json& j, EdnConfig& c) {
  c.bands = j.value("bands", c.bands);
  c.channels = j.value("channels", c.channels);
  c.input_kernel_f = j.value("input_kernel_f", c.input_kernel_f);
  c.input_kernel_t = j.value("input_kernel_t", c.input_kernel_t);
  c.down_stages = j.value("down_stages", c.down_stages);
  c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
  c.output_kernel = j.value("output_kernel", c.output_kernel);
}

template <typename Real>
EncoderDecoderNet<Real>::EncoderDecoderNet(const EdnConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto& store = this->store_;
  auto conv_norm = [&](const std::string& name, Index cin, Index cout, Index kf, Index kt, ConvSpec spec) {
    return ConvNorm{Conv2d<Real>::make(store, name + ".conv", cin, cout, kf, kt, spec, rng, false),
                    BatchNorm2d<Real>::make(store, name + ".bn", cout)};
  };
  const Index c = config_.channels;
  input_norm_ = BatchNorm2d<Real>::make(store, "edn.input_norm", 1);
  input_ = conv_norm("edn.input", 1, c, config_.input_kernel_f, config_.input_kernel_t,
                     ConvSpec::same(config_.input_kernel_f, config_.input_kernel_t));
  Index width = c;
  for (int s = 0; s < config_.down_stages; ++s) {
    down_.push_back(conv_norm("edn.down" + std::to_string(s + 1), width, 2 * width, 3, 3, ConvSpec::same(3, 3, 1, 1, 2, 1)));
    width *= 2;
  }
  for (int r = 0; r < config_.residual_blocks; ++r) {
    const std::string name = "edn.res" + std::to_string(r + 1);
    residual_.push_back({conv_norm(name + ".a", width, width, 3, 3, ConvSpec::same(3, 3)),
                         conv_norm(name + ".b", width, width, 3, 3, ConvSpec::same(3, 3))});
  }
  for (int s = 0; s < config_.down_stages; ++s) {
    up_.push_back(conv_norm("edn.up" + std::to_string(s + 1), width, width / 2, 3, 3, ConvSpec::same(3, 3)));
    width /= 2;
  }
  output_ = conv_norm("edn.output", c, c, config_.output_kernel, config_.output_kernel,
                      ConvSpec::same(config_.output_kernel, config_.output_kernel));
  this->head_ = Conv2d<Real>::make(store, "edn.head", c, 1, 1, 1, ConvSpec{}, rng, true, true);
}

template <typename Real>
Var<Real> EncoderDecoderNet<Real>::hidden(const Var<Real>& x, bool train) const {
  this->require_input(x, config_.bands);
  const auto skip = ad::swish(input_(input_norm_(x, train), train));
  Var<Real> h = skip;
  for (const auto& d : down_) h = ad::swish(d(h, train));
  for (const auto& r : residual_) h = ad::add(h, r.second(ad::swish(r.first(h, train)), train));
  for (const auto& u : up_) h = ad::swish(u(ad::upsample_nearest(h, 2, 1), train));
  if (h.shape() != skip.shape())
    throw ad::ShapeError("EDN decoder produced " + ad::to_string(h.shape()) + ", expected " + ad::to_string(skip.shape()));
  return ad::swish(output_(ad::add(h, skip), train));
}

template class EncoderDecoderNet<float>;
template class EncoderDecoderNet<double>;

}  // namespace dfl::nets
