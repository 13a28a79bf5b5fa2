#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsvan/tensor.hpp"

namespace tsvan {

// Geometry of a 2-D convolution. Cross-correlation convention, zero padding.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // floor((in + 2 pad - k) / stride) + 1; throws if that would be < 1.
  std::size_t out_extent(std::size_t in) const;
  // (in - 1) stride - 2 pad + k; throws if that would be < 1.
  std::size_t transpose_out_extent(std::size_t in) const;
  void validate() const;
};

template <typename T>
struct ConvGrads {
  Tensor<T> dx, dw, db;
};

// x: (N, in, H, W), w: (out, in, k, k), b: (out).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvSpec& spec);

// Adjoint of conv2d with respect to its input. x: (N, in, H, W), w: (in, out, k, k)
// (the same buffer a conv2d from `out` to `in` channels would use), b: (out).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec);
template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                       const ConvSpec& spec);

// x: (N, in), w: (out, in), b: (out) -> (N, out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
ConvGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope);
template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x);
// Takes the forward output y = tanh(x).
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
// Takes the forward output y = sigmoid(x).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
struct MaxPoolResult {
  Tensor<T> y;
  // Flat input index of the element selected for each output element.
  std::vector<std::size_t> argmax;
};

// Non-overlapping k x k pooling on (N, C, H, W); output extent floor(H / k).
// Ties go to the first maximal element in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x, std::size_t k = 2);
template <typename T>
Tensor<T> maxpool2d_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor<T>& dy);

// Softmax over the last axis with max subtraction.
template <typename T>
Tensor<T> softmax_logits(const Tensor<T>& x);
// Takes the forward output p.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dy);

// Convolutional LSTM cell. Gates are one conv2d over concat(x, h_prev) with
// 4 * hidden output channels in the order input, forget, output, candidate.
struct ConvLstmSpec {
  std::size_t in_channels = 1;
  std::size_t hidden_channels = 1;
  std::size_t kernel = 3;  // odd; "same" padding

  ConvSpec gate_conv() const;
  Shape weight_shape() const;
  Shape bias_shape() const;
};

template <typename T>
struct ConvLstmCache {
  Tensor<T> input;  // concat(x, h_prev)
  Tensor<T> c_prev;
  Tensor<T> i, f, o, g;  // post-activation gates
  Tensor<T> tanh_c;
};

template <typename T>
struct ConvLstmState {
  Tensor<T> h, c;
};

template <typename T>
struct ConvLstmGrads {
  Tensor<T> dx, dh_prev, dc_prev, dw, db;
};

template <typename T>
ConvLstmState<T> convlstm_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                               const Tensor<T>& w, const Tensor<T>& b, const ConvLstmSpec& spec,
                               ConvLstmCache<T>* cache = nullptr);
// Single-step backward from upstream gradients on (h, c).
template <typename T>
ConvLstmGrads<T> convlstm_backward(const ConvLstmCache<T>& cache, const Tensor<T>& w, const Tensor<T>& dh,
                                   const Tensor<T>& dc, const ConvLstmSpec& spec);

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Named parameters in insertion order. Value and gradient shapes always match.
template <typename T>
class ParamSet {
 public:
  Param<T>& add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Param<T>& get(const std::string& name);
  const Param<T>& get(const std::string& name) const;
  const Tensor<T>& value(const std::string& name) const { return get(name).value; }
  // Adds `g` into the gradient of `name`.
  void accumulate(const std::string& name, const Tensor<T>& g);
  void zero_grad();

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t numel() const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Param<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Glorot uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(SeededRng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out);

}  // namespace tsvan
