#pragma once

#include <random>
#include <vector>

#include "dfl/audio/features.hpp"
#include "dfl/autodiff/tensor.hpp"

namespace dfl::train {

using ad::Index;
using ad::Tensor;

/// (1, 1, F, T) tensor with the same band-major layout as the matrix.
template <typename Real>
Tensor<Real> to_tensor(const audio::FeatureMatrix& features);

/// Band-major matrix from a (1, 1, F, T) tensor.
template <typename Real>
audio::FeatureMatrix to_matrix(const Tensor<Real>& tensor, audio::FeatureDomain domain);

/// Uniform start for a `frames`-long crop; 0 when the utterance is shorter.
Index random_crop_start(Index total_frames, Index frames, std::mt19937_64& rng);
Index centre_crop_start(Index total_frames, Index frames);

/// Stacks crops into (B, 1, F, frames). Crops wrap around utterances shorter
/// than `frames`.
template <typename Real>
Tensor<Real> stack_crops(const std::vector<const audio::FeatureMatrix*>& items, const std::vector<Index>& starts,
                         Index frames);

/// Generator seeded from (seed, epoch, stream) so any epoch can be replayed.
std::mt19937_64 epoch_rng(std::uint64_t seed, std::int64_t epoch, std::uint64_t stream);

}  // namespace dfl::train
