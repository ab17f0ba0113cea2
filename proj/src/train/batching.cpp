#include "dfl/train/batching.hpp"

#include <stdexcept>

namespace dfl::train {

template <typename Real>
Tensor<Real> to_tensor(const audio::FeatureMatrix& features) {
  Tensor<Real> t({1, 1, features.bands, features.frames});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(features.values[static_cast<std::size_t>(i)]);
  return t;
}

template <typename Real>
audio::FeatureMatrix to_matrix(const Tensor<Real>& tensor, audio::FeatureDomain domain) {
  if (tensor.rank() != 4 || tensor.dim(0) != 1 || tensor.dim(1) != 1)
    throw ad::ShapeError("to_matrix expects (1, 1, F, T), got " + ad::to_string(tensor.shape()));
  audio::FeatureMatrix m;
  m.bands = tensor.dim(2);
  m.frames = tensor.dim(3);
  m.domain = domain;
  m.values.assign(tensor.values().begin(), tensor.values().end());
  return m;
}

Index random_crop_start(Index total_frames, Index frames, std::mt19937_64& rng) {
  if (total_frames <= frames) return 0;
  return std::uniform_int_distribution<Index>(0, total_frames - frames)(rng);
}

Index centre_crop_start(Index total_frames, Index frames) {
  return total_frames <= frames ? 0 : (total_frames - frames) / 2;
}

template <typename Real>
Tensor<Real> stack_crops(const std::vector<const audio::FeatureMatrix*>& items, const std::vector<Index>& starts,
                         Index frames) {
  if (items.empty() || items.size() != starts.size()) throw std::invalid_argument("stack_crops: bad batch");
  const Index bands = items.front()->bands;
  Tensor<Real> out({static_cast<Index>(items.size()), 1, bands, frames});
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto& m = *items[b];
    if (m.bands != bands) throw ad::ShapeError("stack_crops: band counts differ within a batch");
    if (m.frames < 1) throw std::invalid_argument("stack_crops: empty feature matrix");
    for (Index f = 0; f < bands; ++f)
      for (Index t = 0; t < frames; ++t)
        out.at(static_cast<Index>(b), 0, f, t) = static_cast<Real>(m.at(f, (starts[b] + t) % m.frames));
  }
  return out;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, std::int64_t epoch, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

#define DFL_BATCHING_INSTANTIATE(R)                                                             \
  template Tensor<R> to_tensor<R>(const audio::FeatureMatrix&);                                 \
  template audio::FeatureMatrix to_matrix<R>(const Tensor<R>&, audio::FeatureDomain);           \
  template Tensor<R> stack_crops<R>(const std::vector<const audio::FeatureMatrix*>&, const std::vector<Index>&, Index);

DFL_BATCHING_INSTANTIATE(float)
DFL_BATCHING_INSTANTIATE(double)

}  // namespace dfl::train
