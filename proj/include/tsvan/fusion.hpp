#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsvan/tensor.hpp"

namespace tsvan {

// Multi-scale motion fusion.
//
// At every scale a per-pixel n x n kernel K(a, b) is applied to the n x n
// neighbourhood P(a, b) of the content map (replicate padding at borders),
// and the result is blended back into the content map through a mask:
//
//   h~(a, b) = sum_ij K(a, b)[i][j] * h(a + i - r, b + j - r),   r = n / 2
//   h^(a, b) = M(a, b) h~(a, b) + (1 - M(a, b)) h(a, b)
//
// The same kernel is applied to every channel. Kernel fields are stored
// channel-major so that the output of a conv layer can be used directly:
//   separable: vertical and horizontal, each (N, n, l, l); K[i][j] = v[i] h[j]
//   dense:     (N, n*n, l, l), entry i*n + j of pixel (a, b) is K[i][j]
//   mask:      (N, 1, l, l), entries in [0, 1]
//   content:   (N, d, l, l)

struct FusionConfig {
  std::size_t scales = 1;
  std::size_t kernel = 3;
  std::vector<std::size_t> resolutions;  // strictly increasing, finest last
  std::vector<std::size_t> channels;     // content width per scale

  void validate() const;
};

template <typename T>
struct SeparableKernelField {
  Tensor<T> vertical;
  Tensor<T> horizontal;
};

template <typename T>
struct DenseKernelField {
  Tensor<T> weights;
};

template <typename T>
using ContentPyramid = std::vector<Tensor<T>>;

// K[i][j] = v[i] * h[j], returned as an (n, n) tensor.
template <typename T>
Tensor<T> expand_kernel(std::span<const T> vertical, std::span<const T> horizontal);

// Row-major unflattening of the kernel stored at pixel (a, b) of batch entry `batch`.
template <typename T>
Tensor<T> recover_dense(const DenseKernelField<T>& field, std::size_t batch, std::size_t a, std::size_t b);
// Inverse of recover_dense for one pixel: writes an (n, n) kernel into the field.
template <typename T>
void store_dense(DenseKernelField<T>& field, std::size_t batch, std::size_t a, std::size_t b, const Tensor<T>& kernel);

// Dense field holding the outer product of the separable field at every pixel.
template <typename T>
DenseKernelField<T> expand_field(const SeparableKernelField<T>& field);

template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& content, const DenseKernelField<T>& kernels);
template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& content, const SeparableKernelField<T>& kernels);

template <typename T>
struct DenseConvGrads {
  Tensor<T> dcontent;
  Tensor<T> dweights;
};

template <typename T>
struct SeparableConvGrads {
  Tensor<T> dcontent;
  Tensor<T> dvertical;
  Tensor<T> dhorizontal;
};

template <typename T>
DenseConvGrads<T> adaptive_conv_backward(const Tensor<T>& content, const DenseKernelField<T>& kernels,
                                         const Tensor<T>& dy);
template <typename T>
SeparableConvGrads<T> adaptive_conv_backward(const Tensor<T>& content, const SeparableKernelField<T>& kernels,
                                             const Tensor<T>& dy);

// Throws ValidationError if any mask entry lies outside [0, 1] (no clamping).
template <typename T>
void validate_mask(const Tensor<T>& mask);

// M = 0 returns the content value and M = 1 the convolved value, bit for bit.
template <typename T>
Tensor<T> mask_blend(const Tensor<T>& content, const Tensor<T>& convolved, const Tensor<T>& mask);

template <typename T>
struct BlendGrads {
  Tensor<T> dcontent;
  Tensor<T> dconvolved;
  Tensor<T> dmask;
};

template <typename T>
BlendGrads<T> mask_blend_backward(const Tensor<T>& content, const Tensor<T>& convolved, const Tensor<T>& mask,
                                  const Tensor<T>& dy);

// M = (tanh(raw) + 1) / 2.
template <typename T>
Tensor<T> mask_activation(const Tensor<T>& raw);
// Takes the forward output M.
template <typename T>
Tensor<T> mask_activation_backward(const Tensor<T>& mask, const Tensor<T>& dy);

// adaptive_conv followed by mask_blend at every scale, each scale
// independently. With `parallel` the scales run on separate threads.
template <typename T>
ContentPyramid<T> fuse_pyramid(const ContentPyramid<T>& pyramid, const std::vector<SeparableKernelField<T>>& kernels,
                               const std::vector<Tensor<T>>& masks, const FusionConfig& cfg, bool parallel = false);

enum class KernelMode { dense, separable };

struct KernelParamCount {
  std::size_t per_pixel = 0;
  std::vector<std::size_t> per_scale;  // per_pixel * l_s^2
  std::size_t total = 0;
};

// n^2 (dense) or 2n (separable) values per pixel, times l_s^2 per scale.
KernelParamCount kernel_param_count(std::size_t n, KernelMode mode, const std::vector<std::size_t>& resolutions);

}  // namespace tsvan
