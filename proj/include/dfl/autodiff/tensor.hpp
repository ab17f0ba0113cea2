#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfl::ad {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array. Dimensions follow the (N, C, F, T) convention for
/// feature maps: batch, channel, frequency, time.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0});
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const noexcept { return static_cast<Index>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const Real& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4-D accessor for (N, C, F, T) maps.
  Real& at(Index n, Index c, Index f, Index t) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + f) * shape_[3] + t)];
  }
  const Real& at(Index n, Index c, Index f, Index t) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + f) * shape_[3] + t)];
  }

  void fill(Real v);
  void reshape(Shape shape);
  bool all_finite() const;

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    for (Index i = 0; i < size(); ++i) out[i] = static_cast<Other>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dfl::ad
