#include "tsvan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsvan/error.hpp"

namespace tsvan {

std::size_t ConvSpec::out_extent(std::size_t in) const {
  const long span = static_cast<long>(in) + 2 * static_cast<long>(padding) - static_cast<long>(kernel);
  if (stride == 0 || span < 0)
    throw ValidationError("conv: input extent " + std::to_string(in) + " too small for kernel " +
                          std::to_string(kernel) + " with padding " + std::to_string(padding));
  return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t ConvSpec::transpose_out_extent(std::size_t in) const {
  const long out = (static_cast<long>(in) - 1) * static_cast<long>(stride) - 2 * static_cast<long>(padding) +
                   static_cast<long>(kernel);
  if (out < 1) throw ValidationError("conv_transpose: output extent would be < 1");
  return static_cast<std::size_t>(out);
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0)
    throw ValidationError("ConvSpec: channels, kernel and stride must be positive");
}

namespace {

// C(MxN) += A(MxK) B(KxN)
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[i * K + k];
      if (a == T(0)) continue;
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C(MxN) += A(KxM)^T B(KxN)
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T a = A[k * M + i];
      if (a == T(0)) continue;
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C(MxN) += A(MxK) B(NxK)^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] += s;
    }
  }
}

struct Geometry {
  std::size_t channels, h, w, k, stride, pad, oh, ow;
};

// col: (channels * k * k) x (oh * ow)
template <typename T>
void im2col(const T* x, const Geometry& g, T* col) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj, ++row) {
        T* dst = col + row * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            dst[oy * g.ow + ox] =
                (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x[(c * g.h + iy) * g.w + ix] : T(0);
          }
        }
      }
}

// Scatter-add of im2col.
template <typename T>
void col2im(const T* col, const Geometry& g, T* x) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj, ++row) {
        const T* src = col + row * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= H) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < W) x[(c * g.h + iy) * g.w + ix] += src[oy * g.ow + ox];
          }
        }
      }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

template <typename T>
void check_conv_inputs(const char* op, const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                       bool transpose) {
  spec.validate();
  const Shape expect_w = transpose ? Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}
                                   : Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  require(x.rank() == 4 && x.dim(1) == spec.in_channels,
          std::string(op) + ": input " + shape_str(x.shape()) + " does not have " +
              std::to_string(spec.in_channels) + " channels");
  require(w.shape() == expect_w,
          std::string(op) + ": weight " + shape_str(w.shape()) + " expected " + shape_str(expect_w));
}

// Geometry of the forward conv that maps the big map to the small one.
Geometry conv_geometry(std::size_t channels, std::size_t h, std::size_t w, const ConvSpec& spec) {
  return Geometry{channels, h, w, spec.kernel, spec.stride, spec.padding, spec.out_extent(h), spec.out_extent(w)};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec) {
  check_conv_inputs("conv2d", x, w, spec, false);
  require(b.size() == spec.out_channels, "conv2d: bias length mismatch");
  const std::size_t N = x.dim(0);
  const Geometry g = conv_geometry(spec.in_channels, x.dim(2), x.dim(3), spec);
  const std::size_t K = spec.in_channels * spec.kernel * spec.kernel, P = g.oh * g.ow;
  Tensor<T> y({N, spec.out_channels, g.oh, g.ow});
  std::vector<T> col(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.raw() + n * spec.in_channels * g.h * g.w, g, col.data());
    T* out = y.raw() + n * spec.out_channels * P;
    for (std::size_t o = 0; o < spec.out_channels; ++o) std::fill_n(out + o * P, P, b[o]);
    gemm_nn(spec.out_channels, P, K, w.raw(), col.data(), out);
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvSpec& spec) {
  check_conv_inputs("conv2d_backward", x, w, spec, false);
  const std::size_t N = x.dim(0);
  const Geometry g = conv_geometry(spec.in_channels, x.dim(2), x.dim(3), spec);
  require(dy.shape() == Shape({N, spec.out_channels, g.oh, g.ow}), "conv2d_backward: upstream gradient shape mismatch");
  const std::size_t K = spec.in_channels * spec.kernel * spec.kernel, P = g.oh * g.ow;
  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({spec.out_channels})};
  std::vector<T> col(K * P), dcol(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    const T* dyn = dy.raw() + n * spec.out_channels * P;
    im2col(x.raw() + n * spec.in_channels * g.h * g.w, g, col.data());
    gemm_nt(spec.out_channels, K, P, dyn, col.data(), grads.dw.raw());
    std::fill(dcol.begin(), dcol.end(), T(0));
    gemm_tn(K, P, spec.out_channels, w.raw(), dyn, dcol.data());
    col2im(dcol.data(), g, grads.dx.raw() + n * spec.in_channels * g.h * g.w);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      T s = 0;
      for (std::size_t p = 0; p < P; ++p) s += dyn[o * P + p];
      grads.db[o] += s;
    }
  }
  return grads;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec) {
  check_conv_inputs("conv_transpose2d", x, w, spec, true);
  require(b.size() == spec.out_channels, "conv_transpose2d: bias length mismatch");
  const std::size_t N = x.dim(0);
  const std::size_t oh = spec.transpose_out_extent(x.dim(2)), ow = spec.transpose_out_extent(x.dim(3));
  // The conv from (out, oh, ow) back to (in, H, W) must land on the input extents.
  const Geometry g = conv_geometry(spec.out_channels, oh, ow, spec);
  require(g.oh == x.dim(2) && g.ow == x.dim(3), "conv_transpose2d: inconsistent geometry");
  const std::size_t K = spec.out_channels * spec.kernel * spec.kernel, P = g.oh * g.ow;
  Tensor<T> y({N, spec.out_channels, oh, ow});
  std::vector<T> col(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(col.begin(), col.end(), T(0));
    gemm_tn(K, P, spec.in_channels, w.raw(), x.raw() + n * spec.in_channels * P, col.data());
    T* out = y.raw() + n * spec.out_channels * oh * ow;
    for (std::size_t o = 0; o < spec.out_channels; ++o) std::fill_n(out + o * oh * ow, oh * ow, b[o]);
    col2im(col.data(), g, out);
  }
  return y;
}

template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                       const ConvSpec& spec) {
  check_conv_inputs("conv_transpose2d_backward", x, w, spec, true);
  const std::size_t N = x.dim(0);
  const std::size_t oh = spec.transpose_out_extent(x.dim(2)), ow = spec.transpose_out_extent(x.dim(3));
  require(dy.shape() == Shape({N, spec.out_channels, oh, ow}),
          "conv_transpose2d_backward: upstream gradient shape mismatch");
  const Geometry g = conv_geometry(spec.out_channels, oh, ow, spec);
  const std::size_t K = spec.out_channels * spec.kernel * spec.kernel, P = g.oh * g.ow;
  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({spec.out_channels})};
  std::vector<T> col(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    const T* dyn = dy.raw() + n * spec.out_channels * oh * ow;
    im2col(dyn, g, col.data());
    gemm_nn(spec.in_channels, P, K, w.raw(), col.data(), grads.dx.raw() + n * spec.in_channels * P);
    gemm_nt(spec.in_channels, K, P, x.raw() + n * spec.in_channels * P, col.data(), grads.dw.raw());
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      T s = 0;
      for (std::size_t p = 0; p < oh * ow; ++p) s += dyn[o * oh * ow + p];
      grads.db[o] += s;
    }
  }
  return grads;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1) && b.size() == w.dim(0),
          "linear: shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()) +
              " are incompatible");
  const std::size_t N = x.dim(0), out = w.dim(0), in = w.dim(1);
  Tensor<T> y({N, out});
  for (std::size_t n = 0; n < N; ++n) std::copy_n(b.raw(), out, y.raw() + n * out);
  gemm_nt(N, out, in, x.raw(), w.raw(), y.raw());
  return y;
}

template <typename T>
ConvGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), "linear_backward: shape mismatch");
  const std::size_t N = x.dim(0), out = w.dim(0), in = w.dim(1);
  require(dy.shape() == Shape({N, out}), "linear_backward: upstream gradient shape mismatch");
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({out})};
  gemm_nn(N, in, out, dy.raw(), w.raw(), g.dx.raw());
  gemm_tn(out, in, N, dy.raw(), x.raw(), g.dw.raw());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) g.db[o] += dy[n * out + o];
  return g;
}

namespace {
template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

template <typename T, typename F>
Tensor<T> zip(const char* op, const Tensor<T>& a, const Tensor<T>& dy, F f) {
  require(a.shape() == dy.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                       shape_str(dy.shape()));
  Tensor<T> dx(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) dx[i] = f(a[i], dy[i]);
  return dx;
}
}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return map(x, [](T v) { return v > T(0) ? v : T(0); });
}
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  return zip("relu_backward", x, dy, [](T v, T g) { return v > T(0) ? g : T(0); });
}
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return map(x, [slope](T v) { return v > T(0) ? v : slope * v; });
}
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope) {
  return zip("leaky_relu_backward", x, dy, [slope](T v, T g) { return v > T(0) ? g : slope * g; });
}
template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  return map(x, [](T v) { return std::tanh(v); });
}
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  return zip("tanh_backward", y, dy, [](T v, T g) { return g * (T(1) - v * v); });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return map(x, [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
}
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  return zip("sigmoid_backward", y, dy, [](T v, T g) { return g * v * (T(1) - v); });
}

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x, std::size_t k) {
  require(x.rank() == 4 && k >= 1 && x.dim(2) >= k && x.dim(3) >= k,
          "maxpool2d: input " + shape_str(x.shape()) + " too small for window " + std::to_string(k));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), oh = H / k, ow = W / k;
  MaxPoolResult<T> r{Tensor<T>({N, C, oh, ow}), std::vector<std::size_t>(N * C * oh * ow)};
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = nc * H * W + (oy * k) * W + ox * k;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = nc * H * W + (oy * k + i) * W + ox * k + j;
            if (x[idx] > x[best]) best = idx;
          }
        r.y[o] = x[best];
        r.argmax[o] = best;
      }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor<T>& dy) {
  require(argmax.size() == dy.size(), "maxpool2d_backward: index count mismatch");
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> softmax_logits(const Tensor<T>& x) {
  const std::size_t K = x.shape().back(), rows = x.size() / K;
  Tensor<T> p(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.raw() + r * K;
    T* out = p.raw() + r * K;
    const T m = *std::max_element(in, in + K);
    T s = 0;
    for (std::size_t j = 0; j < K; ++j) s += (out[j] = std::exp(in[j] - m));
    for (std::size_t j = 0; j < K; ++j) out[j] /= s;
  }
  return p;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dy) {
  require(p.shape() == dy.shape(), "softmax_backward: shape mismatch");
  const std::size_t K = p.shape().back(), rows = p.size() / K;
  Tensor<T> dx(p.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t j = 0; j < K; ++j) s += p[r * K + j] * dy[r * K + j];
    for (std::size_t j = 0; j < K; ++j) dx[r * K + j] = p[r * K + j] * (dy[r * K + j] - s);
  }
  return dx;
}

ConvSpec ConvLstmSpec::gate_conv() const {
  if (kernel % 2 == 0) throw ValidationError("ConvLstmSpec: kernel must be odd");
  return ConvSpec{in_channels + hidden_channels, 4 * hidden_channels, kernel, 1, kernel / 2};
}
Shape ConvLstmSpec::weight_shape() const { return {4 * hidden_channels, in_channels + hidden_channels, kernel, kernel}; }
Shape ConvLstmSpec::bias_shape() const { return {4 * hidden_channels}; }

template <typename T>
ConvLstmState<T> convlstm_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                               const Tensor<T>& w, const Tensor<T>& b, const ConvLstmSpec& spec,
                               ConvLstmCache<T>* cache) {
  require(x.rank() == 4 && h_prev.rank() == 4 && x.dim(1) == spec.in_channels &&
              h_prev.dim(1) == spec.hidden_channels && h_prev.shape() == c_prev.shape() &&
              x.dim(0) == h_prev.dim(0) && x.dim(2) == h_prev.dim(2) && x.dim(3) == h_prev.dim(3),
          "convlstm_step: x " + shape_str(x.shape()) + ", h " + shape_str(h_prev.shape()) + ", c " +
              shape_str(c_prev.shape()) + " are not aligned");
  const std::size_t Hc = spec.hidden_channels;
  Tensor<T> input = concat_channels(x, h_prev);
  const Tensor<T> gates = conv2d(input, w, b, spec.gate_conv());
  Tensor<T> i = sigmoid(slice_channels(gates, 0, Hc));
  Tensor<T> f = sigmoid(slice_channels(gates, Hc, Hc));
  Tensor<T> o = sigmoid(slice_channels(gates, 2 * Hc, Hc));
  Tensor<T> g = tanh_act(slice_channels(gates, 3 * Hc, Hc));
  Tensor<T> c(c_prev.shape()), h(c_prev.shape()), tc(c_prev.shape());
  for (std::size_t k = 0; k < c.size(); ++k) {
    c[k] = f[k] * c_prev[k] + i[k] * g[k];
    tc[k] = std::tanh(c[k]);
    h[k] = o[k] * tc[k];
  }
  if (cache) *cache = ConvLstmCache<T>{std::move(input), c_prev, i, f, o, g, tc};
  return {std::move(h), std::move(c)};
}

template <typename T>
ConvLstmGrads<T> convlstm_backward(const ConvLstmCache<T>& cache, const Tensor<T>& w, const Tensor<T>& dh,
                                   const Tensor<T>& dc, const ConvLstmSpec& spec) {
  const Shape& s = cache.c_prev.shape();
  require(dh.shape() == s && dc.shape() == s, "convlstm_backward: upstream gradient shape mismatch");
  const std::size_t N = s[0], Hc = s[1], HW = s[2] * s[3];
  Tensor<T> dgates({N, 4 * Hc, s[2], s[3]});
  Tensor<T> dc_prev(s);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ch = 0; ch < Hc; ++ch)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t k = (n * Hc + ch) * HW + p;
        const T i = cache.i[k], f = cache.f[k], o = cache.o[k], g = cache.g[k], tc = cache.tanh_c[k];
        const T dct = dc[k] + dh[k] * o * (T(1) - tc * tc);
        dc_prev[k] = dct * f;
        auto gate = [&](std::size_t which) -> T& { return dgates[((n * 4 * Hc) + which * Hc + ch) * HW + p]; };
        gate(0) = dct * g * i * (T(1) - i);
        gate(1) = dct * cache.c_prev[k] * f * (T(1) - f);
        gate(2) = dh[k] * tc * o * (T(1) - o);
        gate(3) = dct * i * (T(1) - g * g);
      }
  ConvGrads<T> cg = conv2d_backward(cache.input, w, dgates, spec.gate_conv());
  return {slice_channels(cg.dx, 0, spec.in_channels), slice_channels(cg.dx, spec.in_channels, Hc),
          std::move(dc_prev), std::move(cg.dw), std::move(cg.db)};
}

template <typename T>
Param<T>& ParamSet<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ValidationError("ParamSet: duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  Tensor<T> grad(value.shape());
  params_.push_back(Param<T>{name, std::move(value), std::move(grad)});
  return params_.back();
}

template <typename T>
Param<T>& ParamSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("ParamSet: no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Param<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("ParamSet: no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
void ParamSet<T>::accumulate(const std::string& name, const Tensor<T>& g) {
  Param<T>& p = get(name);
  require(p.grad.shape() == g.shape(),
          "ParamSet: gradient " + shape_str(g.shape()) + " does not match '" + name + "' " + shape_str(p.grad.shape()));
  for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data().begin(), p.grad.data().end(), T(0));
}

template <typename T>
std::size_t ParamSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Tensor<T> xavier_uniform(SeededRng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rand_uniform<T>(rng, shape, -bound, bound);
}

#define TSVAN_INSTANTIATE(T)                                                                                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&);             \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&);   \
  template ConvGrads<T> conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                                  const ConvSpec&);                                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template ConvGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> relu(const Tensor<T>&);                                                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                           \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&, T);                                \
  template Tensor<T> tanh_act(const Tensor<T>&);                                                                \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                 \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template MaxPoolResult<T> maxpool2d(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> maxpool2d_backward(const Shape&, const std::vector<std::size_t>&, const Tensor<T>&);       \
  template Tensor<T> softmax_logits(const Tensor<T>&);                                                          \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template ConvLstmState<T> convlstm_step(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                          const Tensor<T>&, const Tensor<T>&, const ConvLstmSpec&,              \
                                          ConvLstmCache<T>*);                                                   \
  template ConvLstmGrads<T> convlstm_backward(const ConvLstmCache<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                              const Tensor<T>&, const ConvLstmSpec&);                           \
  template class ParamSet<T>;                                                                                   \
  template Tensor<T> xavier_uniform(SeededRng&, const Shape&, std::size_t, std::size_t);

TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)

}  // namespace tsvan
