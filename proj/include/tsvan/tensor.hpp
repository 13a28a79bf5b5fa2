#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tsvan/rng.hpp"

namespace tsvan {

// Extents of a tensor, outermost first. Rank 1..4; rank-4 tensors are read
// as (batch, channel, height, width).
using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);
// Throws ValidationError unless 1 <= rank <= 4 and every extent >= 1.
void validate_shape(const Shape& shape);

// Dense row-major array. Value semantics: copies are deep, operations return
// new tensors and never modify their inputs.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{1}) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access (n, c, h, w). No bounds checks.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same buffer, new extents. Element counts must agree.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const;

  // Exact elementwise equality of shape and values.
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

enum class ElementwiseOp { add, sub, mul };

// `b` must have the shape of `a` or hold exactly one element.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Sums over `axes`, dropping them. Summing every axis yields shape {1}.
// Accumulation runs in row-major order of the input, in double precision.
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T>
T reduce_mean(const Tensor<T>& a);

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> randn(SeededRng& rng, const Shape& shape);
template <typename T>
Tensor<T> rand_uniform(SeededRng& rng, const Shape& shape, double lo, double hi);

// Concatenates rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Channels [begin, begin + count) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count);

}  // namespace tsvan
