#include "tsvan/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "tsvan/error.hpp"

namespace tsvan {

void FusionConfig::validate() const {
  if (scales < 1) throw ValidationError("FusionConfig: need at least one scale");
  if (kernel < 3 || kernel % 2 == 0)
    throw ValidationError("FusionConfig: kernel size must be odd and >= 3, got " + std::to_string(kernel));
  if (resolutions.size() != scales || channels.size() != scales)
    throw ValidationError("FusionConfig: resolutions and channels must list one entry per scale");
  for (std::size_t s = 1; s < scales; ++s)
    if (resolutions[s] <= resolutions[s - 1])
      throw ValidationError("FusionConfig: resolutions must be strictly increasing");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

std::size_t clamp_index(long v, std::size_t extent) {
  if (v < 0) return 0;
  if (v >= static_cast<long>(extent)) return extent - 1;
  return static_cast<std::size_t>(v);
}

// Validates a (N, n or n*n, H, W) kernel tensor against the content map and
// returns n.
template <typename T>
std::size_t check_field(const Tensor<T>& content, const Tensor<T>& field, bool dense) {
  require(content.rank() == 4, "adaptive_conv: content must be (N, d, H, W), got " + shape_str(content.shape()));
  require(field.rank() == 4 && field.dim(0) == content.dim(0) && field.dim(2) == content.dim(2) &&
              field.dim(3) == content.dim(3),
          "adaptive_conv: kernel field " + shape_str(field.shape()) + " does not match content " +
              shape_str(content.shape()));
  std::size_t n = field.dim(1);
  if (dense) {
    n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(field.dim(1)))));
    require(n * n == field.dim(1), "adaptive_conv: dense field depth " + std::to_string(field.dim(1)) +
                                       " is not a square");
  }
  require(n % 2 == 1, "adaptive_conv: kernel size must be odd, got " + std::to_string(n));
  return n;
}

// Clamped neighbourhood offsets of one row or column.
void neighbourhood(std::size_t centre, std::size_t n, std::size_t extent, std::size_t* out) {
  const long r = static_cast<long>(n / 2);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = clamp_index(static_cast<long>(centre) + static_cast<long>(i) - r, extent);
}

}  // namespace

template <typename T>
Tensor<T> expand_kernel(std::span<const T> vertical, std::span<const T> horizontal) {
  require(!vertical.empty() && vertical.size() == horizontal.size(),
          "expand_kernel: 1-D kernels have lengths " + std::to_string(vertical.size()) + " and " +
              std::to_string(horizontal.size()));
  const std::size_t n = vertical.size();
  Tensor<T> k({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k[i * n + j] = vertical[i] * horizontal[j];
  return k;
}

template <typename T>
Tensor<T> recover_dense(const DenseKernelField<T>& field, std::size_t batch, std::size_t a, std::size_t b) {
  const Tensor<T>& w = field.weights;
  require(w.rank() == 4, "recover_dense: field must be rank 4");
  require(batch < w.dim(0) && a < w.dim(2) && b < w.dim(3),
          "recover_dense: index (" + std::to_string(batch) + ", " + std::to_string(a) + ", " + std::to_string(b) +
              ") out of range for " + shape_str(w.shape()));
  const std::size_t n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(w.dim(1)))));
  require(n * n == w.dim(1), "recover_dense: field depth is not a square");
  Tensor<T> k({n, n});
  for (std::size_t q = 0; q < n * n; ++q) k[q] = w.at(batch, q, a, b);
  return k;
}

template <typename T>
void store_dense(DenseKernelField<T>& field, std::size_t batch, std::size_t a, std::size_t b,
                 const Tensor<T>& kernel) {
  Tensor<T>& w = field.weights;
  require(w.rank() == 4 && batch < w.dim(0) && a < w.dim(2) && b < w.dim(3), "store_dense: index out of range");
  require(kernel.size() == w.dim(1), "store_dense: kernel size does not match field depth");
  for (std::size_t q = 0; q < kernel.size(); ++q) w.at(batch, q, a, b) = kernel[q];
}

template <typename T>
DenseKernelField<T> expand_field(const SeparableKernelField<T>& field) {
  const Tensor<T>& v = field.vertical;
  const Tensor<T>& h = field.horizontal;
  require(v.rank() == 4 && v.shape() == h.shape(), "expand_field: vertical " + shape_str(v.shape()) +
                                                       " and horizontal " + shape_str(h.shape()) + " differ");
  const std::size_t N = v.dim(0), n = v.dim(1), H = v.dim(2), W = v.dim(3);
  DenseKernelField<T> out{Tensor<T>({N, n * n, H, W})};
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) out.weights.at(b, i * n + j, y, x) = v.at(b, i, y, x) * h.at(b, j, y, x);
  return out;
}

template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& content, const DenseKernelField<T>& kernels) {
  const std::size_t n = check_field(content, kernels.weights, true);
  const std::size_t N = content.dim(0), D = content.dim(1), H = content.dim(2), W = content.dim(3);
  const std::size_t HW = H * W;
  Tensor<T> out(content.shape());
  std::vector<std::size_t> rows(n), cols(n);
  std::vector<T> k(n * n);
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t y = 0; y < H; ++y) {
      neighbourhood(y, n, H, rows.data());
      for (std::size_t x = 0; x < W; ++x) {
        neighbourhood(x, n, W, cols.data());
        for (std::size_t q = 0; q < n * n; ++q) k[q] = kernels.weights.at(b, q, y, x);
        for (std::size_t c = 0; c < D; ++c) {
          const T* plane = content.raw() + (b * D + c) * HW;
          T s = 0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) s += k[i * n + j] * plane[rows[i] * W + cols[j]];
          out.at(b, c, y, x) = s;
        }
      }
    }
  return out;
}

template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& content, const SeparableKernelField<T>& kernels) {
  require(kernels.vertical.shape() == kernels.horizontal.shape(), "adaptive_conv: separable kernel shapes differ");
  const std::size_t n = check_field(content, kernels.vertical, false);
  const std::size_t N = content.dim(0), D = content.dim(1), H = content.dim(2), W = content.dim(3);
  const std::size_t HW = H * W;
  Tensor<T> out(content.shape());
  std::vector<std::size_t> rows(n), cols(n);
  std::vector<T> kv(n), kh(n);
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t y = 0; y < H; ++y) {
      neighbourhood(y, n, H, rows.data());
      for (std::size_t x = 0; x < W; ++x) {
        neighbourhood(x, n, W, cols.data());
        for (std::size_t i = 0; i < n; ++i) {
          kv[i] = kernels.vertical.at(b, i, y, x);
          kh[i] = kernels.horizontal.at(b, i, y, x);
        }
        for (std::size_t c = 0; c < D; ++c) {
          const T* plane = content.raw() + (b * D + c) * HW;
          T s = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const T* row = plane + rows[i] * W;
            T r = 0;
            for (std::size_t j = 0; j < n; ++j) r += kh[j] * row[cols[j]];
            s += kv[i] * r;
          }
          out.at(b, c, y, x) = s;
        }
      }
    }
  return out;
}

template <typename T>
DenseConvGrads<T> adaptive_conv_backward(const Tensor<T>& content, const DenseKernelField<T>& kernels,
                                         const Tensor<T>& dy) {
  const std::size_t n = check_field(content, kernels.weights, true);
  require(dy.shape() == content.shape(), "adaptive_conv_backward: upstream gradient shape mismatch");
  const std::size_t N = content.dim(0), D = content.dim(1), H = content.dim(2), W = content.dim(3);
  const std::size_t HW = H * W;
  DenseConvGrads<T> g{Tensor<T>(content.shape()), Tensor<T>(kernels.weights.shape())};
  std::vector<std::size_t> rows(n), cols(n);
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t y = 0; y < H; ++y) {
      neighbourhood(y, n, H, rows.data());
      for (std::size_t x = 0; x < W; ++x) {
        neighbourhood(x, n, W, cols.data());
        for (std::size_t c = 0; c < D; ++c) {
          const T gy = dy.at(b, c, y, x);
          const T* plane = content.raw() + (b * D + c) * HW;
          T* dplane = g.dcontent.raw() + (b * D + c) * HW;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t src = rows[i] * W + cols[j];
              g.dweights.at(b, i * n + j, y, x) += gy * plane[src];
              dplane[src] += gy * kernels.weights.at(b, i * n + j, y, x);
            }
        }
      }
    }
  return g;
}

template <typename T>
SeparableConvGrads<T> adaptive_conv_backward(const Tensor<T>& content, const SeparableKernelField<T>& kernels,
                                             const Tensor<T>& dy) {
  require(kernels.vertical.shape() == kernels.horizontal.shape(),
          "adaptive_conv_backward: separable kernel shapes differ");
  const std::size_t n = check_field(content, kernels.vertical, false);
  require(dy.shape() == content.shape(), "adaptive_conv_backward: upstream gradient shape mismatch");
  const std::size_t N = content.dim(0), D = content.dim(1), H = content.dim(2), W = content.dim(3);
  const std::size_t HW = H * W;
  SeparableConvGrads<T> g{Tensor<T>(content.shape()), Tensor<T>(kernels.vertical.shape()),
                          Tensor<T>(kernels.horizontal.shape())};
  std::vector<std::size_t> rows(n), cols(n);
  std::vector<T> kv(n), kh(n), dv(n), dh(n), rowsum(n);
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t y = 0; y < H; ++y) {
      neighbourhood(y, n, H, rows.data());
      for (std::size_t x = 0; x < W; ++x) {
        neighbourhood(x, n, W, cols.data());
        for (std::size_t i = 0; i < n; ++i) {
          kv[i] = kernels.vertical.at(b, i, y, x);
          kh[i] = kernels.horizontal.at(b, i, y, x);
        }
        std::fill(dv.begin(), dv.end(), T(0));
        std::fill(dh.begin(), dh.end(), T(0));
        for (std::size_t c = 0; c < D; ++c) {
          const T gy = dy.at(b, c, y, x);
          const T* plane = content.raw() + (b * D + c) * HW;
          T* dplane = g.dcontent.raw() + (b * D + c) * HW;
          for (std::size_t i = 0; i < n; ++i) {
            const T* row = plane + rows[i] * W;
            T* drow = dplane + rows[i] * W;
            T r = 0;
            const T gv = gy * kv[i];
            for (std::size_t j = 0; j < n; ++j) {
              const T v = row[cols[j]];
              r += kh[j] * v;
              dh[j] += gv * v;
              drow[cols[j]] += gv * kh[j];
            }
            dv[i] += gy * r;
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          g.dvertical.at(b, i, y, x) = dv[i];
          g.dhorizontal.at(b, i, y, x) = dh[i];
        }
      }
    }
  return g;
}

template <typename T>
void validate_mask(const Tensor<T>& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!(mask[i] >= T(0) && mask[i] <= T(1)))
      throw ValidationError("mask entry " + std::to_string(i) + " = " + std::to_string(static_cast<double>(mask[i])) +
                            " lies outside [0, 1]");
}

namespace {
template <typename T>
void check_blend(const Tensor<T>& content, const Tensor<T>& convolved, const Tensor<T>& mask) {
  require(content.rank() == 4 && convolved.shape() == content.shape(),
          "mask_blend: content " + shape_str(content.shape()) + " and convolved " + shape_str(convolved.shape()) +
              " differ");
  require(mask.rank() == 4 && mask.dim(0) == content.dim(0) && mask.dim(1) == 1 && mask.dim(2) == content.dim(2) &&
              mask.dim(3) == content.dim(3),
          "mask_blend: mask " + shape_str(mask.shape()) + " does not match content " + shape_str(content.shape()));
}
}  // namespace

template <typename T>
Tensor<T> mask_blend(const Tensor<T>& content, const Tensor<T>& convolved, const Tensor<T>& mask) {
  check_blend(content, convolved, mask);
  validate_mask(mask);
  const std::size_t N = content.dim(0), D = content.dim(1), HW = content.dim(2) * content.dim(3);
  Tensor<T> out(content.shape());
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t c = 0; c < D; ++c)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t k = (b * D + c) * HW + p;
        const T m = mask[b * HW + p];
        if (m == T(0))
          out[k] = content[k];
        else if (m == T(1))
          out[k] = convolved[k];
        else
          out[k] = m * convolved[k] + (T(1) - m) * content[k];
      }
  return out;
}

template <typename T>
BlendGrads<T> mask_blend_backward(const Tensor<T>& content, const Tensor<T>& convolved, const Tensor<T>& mask,
                                  const Tensor<T>& dy) {
  check_blend(content, convolved, mask);
  require(dy.shape() == content.shape(), "mask_blend_backward: upstream gradient shape mismatch");
  const std::size_t N = content.dim(0), D = content.dim(1), HW = content.dim(2) * content.dim(3);
  BlendGrads<T> g{Tensor<T>(content.shape()), Tensor<T>(content.shape()), Tensor<T>(mask.shape())};
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t c = 0; c < D; ++c)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t k = (b * D + c) * HW + p;
        const T m = mask[b * HW + p];
        g.dconvolved[k] = m * dy[k];
        g.dcontent[k] = (T(1) - m) * dy[k];
        g.dmask[b * HW + p] += dy[k] * (convolved[k] - content[k]);
      }
  return g;
}

template <typename T>
Tensor<T> mask_activation(const Tensor<T>& raw) {
  Tensor<T> m(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) m[i] = (std::tanh(raw[i]) + T(1)) / T(2);
  return m;
}

template <typename T>
Tensor<T> mask_activation_backward(const Tensor<T>& mask, const Tensor<T>& dy) {
  require(mask.shape() == dy.shape(), "mask_activation_backward: shape mismatch");
  Tensor<T> d(mask.shape());
  // d/dr (tanh r + 1) / 2 = (1 - tanh^2 r) / 2 = 2 M (1 - M)
  for (std::size_t i = 0; i < mask.size(); ++i) d[i] = dy[i] * T(2) * mask[i] * (T(1) - mask[i]);
  return d;
}

template <typename T>
ContentPyramid<T> fuse_pyramid(const ContentPyramid<T>& pyramid, const std::vector<SeparableKernelField<T>>& kernels,
                               const std::vector<Tensor<T>>& masks, const FusionConfig& cfg, bool parallel) {
  cfg.validate();
  if (pyramid.size() != cfg.scales || kernels.size() != cfg.scales || masks.size() != cfg.scales)
    throw ValidationError("fuse_pyramid: expected " + std::to_string(cfg.scales) + " scales, got pyramid " +
                          std::to_string(pyramid.size()) + ", kernels " + std::to_string(kernels.size()) +
                          ", masks " + std::to_string(masks.size()));
  ContentPyramid<T> out(cfg.scales);
  std::vector<std::exception_ptr> errors(cfg.scales);
  auto run = [&](std::size_t s) {
    try {
      const Tensor<T>& h = pyramid[s];
      const std::size_t l = cfg.resolutions[s];
      require(h.rank() == 4 && h.dim(1) == cfg.channels[s] && h.dim(2) == l && h.dim(3) == l,
              "content map " + shape_str(h.shape()) + " does not match resolution " + std::to_string(l) +
                  " and width " + std::to_string(cfg.channels[s]));
      require(kernels[s].vertical.dim(1) == cfg.kernel, "kernel length does not match configured n");
      out[s] = mask_blend(h, adaptive_conv(h, kernels[s]), masks[s]);
    } catch (...) {
      errors[s] = std::current_exception();
    }
  };
  if (parallel && cfg.scales > 1) {
    std::vector<std::thread> workers;
    for (std::size_t s = 0; s < cfg.scales; ++s) workers.emplace_back(run, s);
    for (auto& t : workers) t.join();
  } else {
    for (std::size_t s = 0; s < cfg.scales; ++s) run(s);
  }
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    if (!errors[s]) continue;
    try {
      std::rethrow_exception(errors[s]);
    } catch (const std::exception& e) {
      throw ValidationError("fuse_pyramid: scale " + std::to_string(s) + ": " + e.what());
    }
  }
  return out;
}

KernelParamCount kernel_param_count(std::size_t n, KernelMode mode, const std::vector<std::size_t>& resolutions) {
  KernelParamCount c;
  c.per_pixel = mode == KernelMode::dense ? n * n : 2 * n;
  for (auto l : resolutions) {
    c.per_scale.push_back(c.per_pixel * l * l);
    c.total += c.per_scale.back();
  }
  return c;
}

#define TSVAN_INSTANTIATE(T)                                                                                         \
  template Tensor<T> expand_kernel(std::span<const T>, std::span<const T>);                                          \
  template Tensor<T> recover_dense(const DenseKernelField<T>&, std::size_t, std::size_t, std::size_t);               \
  template void store_dense(DenseKernelField<T>&, std::size_t, std::size_t, std::size_t, const Tensor<T>&);          \
  template DenseKernelField<T> expand_field(const SeparableKernelField<T>&);                                         \
  template Tensor<T> adaptive_conv(const Tensor<T>&, const DenseKernelField<T>&);                                    \
  template Tensor<T> adaptive_conv(const Tensor<T>&, const SeparableKernelField<T>&);                                \
  template DenseConvGrads<T> adaptive_conv_backward(const Tensor<T>&, const DenseKernelField<T>&, const Tensor<T>&); \
  template SeparableConvGrads<T> adaptive_conv_backward(const Tensor<T>&, const SeparableKernelField<T>&,            \
                                                        const Tensor<T>&);                                           \
  template void validate_mask(const Tensor<T>&);                                                                     \
  template Tensor<T> mask_blend(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template BlendGrads<T> mask_blend_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                             const Tensor<T>&);                                                      \
  template Tensor<T> mask_activation(const Tensor<T>&);                                                              \
  template Tensor<T> mask_activation_backward(const Tensor<T>&, const Tensor<T>&);                                   \
  template ContentPyramid<T> fuse_pyramid(const ContentPyramid<T>&, const std::vector<SeparableKernelField<T>>&,      \
                                          const std::vector<Tensor<T>>&, const FusionConfig&, bool);

TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)

}  // namespace tsvan
