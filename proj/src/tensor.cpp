#include "tsvan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsvan/error.hpp"

namespace tsvan {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw ValidationError("tensor rank must be 1..4, got shape " + shape_str(shape));
  for (auto e : shape)
    if (e == 0) throw ValidationError("tensor extents must be >= 1, got " + shape_str(shape));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ValidationError("buffer length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  validate_shape(shape);
  if (shape_numel(shape) != data_.size())
    throw ValidationError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const bool scalar_b = b.size() == 1;
  if (!scalar_b && a.shape() != b.shape())
    throw ValidationError("elementwise: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T rhs = scalar_b ? b[0] : b[i];
    switch (op) {
      case ElementwiseOp::add: out[i] = a[i] + rhs; break;
      case ElementwiseOp::sub: out[i] = a[i] - rhs; break;
      case ElementwiseOp::mul: out[i] = a[i] * rhs; break;
    }
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.rank();
  std::vector<bool> reduced(rank, false);
  for (auto ax : axes) {
    if (ax >= rank)
      throw ValidationError("reduce_sum: axis " + std::to_string(ax) + " invalid for shape " + shape_str(a.shape()));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < rank; ++d)
    if (!reduced[d]) out_shape.push_back(a.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);

  std::vector<double> acc(shape_numel(out_shape), 0.0);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < rank; ++d)
      if (!reduced[d]) o = o * a.dim(d) + idx[d];
    acc[o] += static_cast<double>(a[i]);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < a.dim(d)) break;
      idx[d] = 0;
    }
  }
  std::vector<T> out(acc.begin(), acc.end());
  return Tensor<T>(std::move(out_shape), std::move(out));
}

template <typename T>
T reduce_mean(const Tensor<T>& a) {
  double s = 0.0;
  for (auto v : a.data()) s += static_cast<double>(v);
  return static_cast<T>(s / static_cast<double>(a.size()));
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size())
    throw ValidationError("dot: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<T>(s);
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ValidationError("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max<T>(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
Tensor<T> randn(SeededRng& rng, const Shape& shape) {
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.normal());
  return out;
}

template <typename T>
Tensor<T> rand_uniform(SeededRng& rng, const Shape& shape, double lo, double hi) {
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ValidationError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.raw() + i * ca * hw, ca * hw, out.raw() + i * (ca + cb) * hw);
    std::copy_n(b.raw() + i * cb * hw, cb * hw, out.raw() + (i * (ca + cb) + ca) * hw);
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (a.rank() != 4 || count == 0 || begin + count > a.dim(1))
    throw ValidationError("slice_channels: range out of bounds for " + shape_str(a.shape()));
  const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> out({n, count, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.raw() + (i * c + begin) * hw, count * hw, out.raw() + i * count * hw);
  return out;
}

#define TSVAN_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                   \
  template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> reduce_sum(const Tensor<T>&, const std::vector<std::size_t>&);           \
  template T reduce_mean(const Tensor<T>&);                                                   \
  template T dot(const Tensor<T>&, const Tensor<T>&);                                         \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> randn(SeededRng&, const Shape&);                                         \
  template Tensor<T> rand_uniform(SeededRng&, const Shape&, double, double);                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);

TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)

}  // namespace tsvan
