#include "tsvan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "tsvan/error.hpp"
#include "tsvan/fusion.hpp"
#include "tsvan/losses.hpp"
#include "tsvan/nn.hpp"

namespace tsvan {

void GradCheckStats::merge(const GradCheckStats& other) {
  coords += other.coords;
  if (other.max_rel_err > max_rel_err || worst.empty()) {
    max_rel_err = other.max_rel_err;
    worst = other.worst;
  }
}

GradCheckStats check_gradients(const std::vector<TensorD>& inputs, const std::vector<bool>& differentiable,
                               const GradForward& forward, const GradBackward& backward, SeededRng& rng,
                               const GradCheckOptions& opts) {
  if (differentiable.size() != inputs.size())
    throw ValidationError("check_gradients: differentiable mask has wrong length");
  const TensorD y = forward(inputs);
  const TensorD r = randn<double>(rng, y.shape());
  const std::vector<TensorD> analytic = backward(inputs, r);
  if (analytic.size() != inputs.size()) throw ValidationError("check_gradients: backward returned wrong count");

  GradCheckStats stats;
  std::vector<TensorD> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!differentiable[i]) continue;
    if (analytic[i].shape() != inputs[i].shape())
      throw ValidationError("check_gradients: gradient " + std::to_string(i) + " has shape " +
                            shape_str(analytic[i].shape()) + ", input has " + shape_str(inputs[i].shape()));
    std::vector<std::size_t> coords(inputs[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
      for (std::size_t k = 0; k < opts.max_coords; ++k)
        std::swap(coords[k], coords[k + rng.below(coords.size() - k)]);
      coords.resize(opts.max_coords);
    }
    for (std::size_t j : coords) {
      const double x0 = inputs[i][j];
      probe[i][j] = x0 + opts.step;
      const double lp = dot(forward(probe), r);
      probe[i][j] = x0 - opts.step;
      const double lm = dot(forward(probe), r);
      probe[i][j] = x0;
      const double numeric = (lp - lm) / (2.0 * opts.step);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++stats.coords;
      if (err > stats.max_rel_err || stats.worst.empty()) {
        stats.max_rel_err = std::max(stats.max_rel_err, err);
        std::ostringstream os;
        os << "input " << i << ", element " << j << ": analytic " << a << " vs numeric " << numeric;
        stats.worst = os.str();
      }
    }
  }
  return stats;
}

namespace {

struct Case {
  std::vector<TensorD> inputs;
  std::vector<bool> differentiable;
  GradForward forward;
  GradBackward backward;
};

using CaseFactory = std::function<std::vector<Case>(SeededRng&, std::size_t shape_index)>;

// Normal draws pushed away from zero, for inputs to piecewise-linear ops.
TensorD away_from_zero(SeededRng& rng, const Shape& shape) {
  TensorD t = randn<double>(rng, shape);
  for (auto& v : t.data()) v += v >= 0 ? 0.05 : -0.05;
  return t;
}

// Distinct values spaced 0.01 apart in random order, so pooling windows have no near-ties.
TensorD spaced_values(SeededRng& rng, const Shape& shape) {
  TensorD t(shape);
  const std::size_t n = t.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
  for (std::size_t k = 0; k < n; ++k) t[k] = 0.01 * static_cast<double>(perm[k]) - 0.005 * static_cast<double>(n);
  return t;
}

TensorD scalar_of(double v) { return TensorD::scalar(v); }

std::vector<Case> conv2d_cases(SeededRng& rng, std::size_t s) {
  static const ConvSpec specs[] = {{1, 2, 3, 1, 0}, {3, 2, 3, 2, 1}, {2, 3, 4, 2, 1}};
  static const std::size_t N[] = {1, 2, 1}, H[] = {5, 6, 7};
  const ConvSpec spec = specs[s];
  Case c;
  c.inputs = {randn<double>(rng, {N[s], spec.in_channels, H[s], H[s]}),
              randn<double>(rng, {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
              randn<double>(rng, {spec.out_channels})};
  c.differentiable = {true, true, true};
  c.forward = [spec](const std::vector<TensorD>& in) { return conv2d(in[0], in[1], in[2], spec); };
  c.backward = [spec](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = conv2d_backward(in[0], in[1], dy, spec);
    return std::vector<TensorD>{g.dx, g.dw, g.db};
  };
  return {c};
}

std::vector<Case> conv_transpose2d_cases(SeededRng& rng, std::size_t s) {
  static const ConvSpec specs[] = {{1, 2, 3, 1, 0}, {3, 2, 3, 2, 1}, {2, 3, 4, 2, 1}};
  static const std::size_t N[] = {1, 2, 1}, H[] = {3, 4, 4};
  const ConvSpec spec = specs[s];
  Case c;
  c.inputs = {randn<double>(rng, {N[s], spec.in_channels, H[s], H[s]}),
              randn<double>(rng, {spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}),
              randn<double>(rng, {spec.out_channels})};
  c.differentiable = {true, true, true};
  c.forward = [spec](const std::vector<TensorD>& in) { return conv_transpose2d(in[0], in[1], in[2], spec); };
  c.backward = [spec](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = conv_transpose2d_backward(in[0], in[1], dy, spec);
    return std::vector<TensorD>{g.dx, g.dw, g.db};
  };
  return {c};
}

std::vector<Case> linear_cases(SeededRng& rng, std::size_t s) {
  static const std::size_t N[] = {1, 4, 2}, I[] = {3, 5, 8}, O[] = {2, 3, 6};
  Case c;
  c.inputs = {randn<double>(rng, {N[s], I[s]}), randn<double>(rng, {O[s], I[s]}), randn<double>(rng, {O[s]})};
  c.differentiable = {true, true, true};
  c.forward = [](const std::vector<TensorD>& in) { return linear(in[0], in[1], in[2]); };
  c.backward = [](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = linear_backward(in[0], in[1], dy);
    return std::vector<TensorD>{g.dx, g.dw, g.db};
  };
  return {c};
}

const Shape kElementwiseShapes[] = {{7}, {2, 3, 4, 4}, {3, 5}};

Case unary_case(TensorD x, std::function<TensorD(const TensorD&)> f,
                std::function<TensorD(const TensorD&, const TensorD&)> df) {
  Case c;
  c.inputs = {std::move(x)};
  c.differentiable = {true};
  c.forward = [f](const std::vector<TensorD>& in) { return f(in[0]); };
  c.backward = [df](const std::vector<TensorD>& in, const TensorD& dy) { return std::vector<TensorD>{df(in[0], dy)}; };
  return c;
}

std::vector<Case> activation_cases(SeededRng& rng, std::size_t s) {
  const Shape shape = kElementwiseShapes[s];
  std::vector<Case> out;
  out.push_back(unary_case(
      away_from_zero(rng, shape), [](const TensorD& x) { return relu(x); },
      [](const TensorD& x, const TensorD& dy) { return relu_backward(x, dy); }));
  out.push_back(unary_case(
      away_from_zero(rng, shape), [](const TensorD& x) { return leaky_relu(x, 0.2); },
      [](const TensorD& x, const TensorD& dy) { return leaky_relu_backward(x, dy, 0.2); }));
  out.push_back(unary_case(
      randn<double>(rng, shape), [](const TensorD& x) { return tanh_act(x); },
      [](const TensorD& x, const TensorD& dy) { return tanh_backward(tanh_act(x), dy); }));
  out.push_back(unary_case(
      scale(randn<double>(rng, shape), 2.0), [](const TensorD& x) { return sigmoid(x); },
      [](const TensorD& x, const TensorD& dy) { return sigmoid_backward(sigmoid(x), dy); }));
  return out;
}

std::vector<Case> maxpool_cases(SeededRng& rng, std::size_t s) {
  static const Shape shapes[] = {{1, 1, 4, 4}, {2, 2, 6, 6}, {1, 3, 5, 5}};
  const Shape shape = shapes[s];
  return {unary_case(
      spaced_values(rng, shape), [](const TensorD& x) { return maxpool2d(x, 2).y; },
      [](const TensorD& x, const TensorD& dy) {
        auto r = maxpool2d(x, 2);
        return maxpool2d_backward(x.shape(), r.argmax, dy);
      })};
}

std::vector<Case> softmax_cases(SeededRng& rng, std::size_t s) {
  static const Shape shapes[] = {{1, 3}, {4, 5}, {2, 10}};
  return {unary_case(
      randn<double>(rng, shapes[s]), [](const TensorD& x) { return softmax_logits(x); },
      [](const TensorD& x, const TensorD& dy) { return softmax_backward(softmax_logits(x), dy); })};
}

std::vector<Case> convlstm_cases(SeededRng& rng, std::size_t s) {
  static const ConvLstmSpec specs[] = {{1, 1, 3}, {2, 3, 3}, {3, 2, 1}};
  static const std::size_t N[] = {1, 2, 1}, H[] = {4, 5, 3};
  const ConvLstmSpec spec = specs[s];
  const std::size_t hid = spec.hidden_channels;
  Case c;
  c.inputs = {randn<double>(rng, {N[s], spec.in_channels, H[s], H[s]}),
              randn<double>(rng, {N[s], hid, H[s], H[s]}), randn<double>(rng, {N[s], hid, H[s], H[s]}),
              scale(randn<double>(rng, spec.weight_shape()), 0.5), randn<double>(rng, spec.bias_shape())};
  c.differentiable = {true, true, true, true, true};
  c.forward = [spec](const std::vector<TensorD>& in) {
    auto st = convlstm_step(in[0], in[1], in[2], in[3], in[4], spec);
    return concat_channels(st.h, st.c);
  };
  c.backward = [spec, hid](const std::vector<TensorD>& in, const TensorD& dy) {
    ConvLstmCache<double> cache;
    convlstm_step(in[0], in[1], in[2], in[3], in[4], spec, &cache);
    auto g = convlstm_backward(cache, in[3], slice_channels(dy, 0, hid), slice_channels(dy, hid, hid), spec);
    return std::vector<TensorD>{g.dx, g.dh_prev, g.dc_prev, g.dw, g.db};
  };
  return {c};
}

std::vector<Case> adaptive_conv_cases(SeededRng& rng, std::size_t s) {
  static const std::size_t N[] = {1, 2, 1}, D[] = {1, 3, 2}, L[] = {4, 5, 6}, K[] = {3, 3, 5};
  const std::size_t n = K[s];
  Case dense;
  dense.inputs = {randn<double>(rng, {N[s], D[s], L[s], L[s]}), randn<double>(rng, {N[s], n * n, L[s], L[s]})};
  dense.differentiable = {true, true};
  dense.forward = [](const std::vector<TensorD>& in) { return adaptive_conv(in[0], DenseKernelField<double>{in[1]}); };
  dense.backward = [](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = adaptive_conv_backward(in[0], DenseKernelField<double>{in[1]}, dy);
    return std::vector<TensorD>{g.dcontent, g.dweights};
  };
  Case sep;
  sep.inputs = {randn<double>(rng, {N[s], D[s], L[s], L[s]}), randn<double>(rng, {N[s], n, L[s], L[s]}),
                randn<double>(rng, {N[s], n, L[s], L[s]})};
  sep.differentiable = {true, true, true};
  sep.forward = [](const std::vector<TensorD>& in) {
    return adaptive_conv(in[0], SeparableKernelField<double>{in[1], in[2]});
  };
  sep.backward = [](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = adaptive_conv_backward(in[0], SeparableKernelField<double>{in[1], in[2]}, dy);
    return std::vector<TensorD>{g.dcontent, g.dvertical, g.dhorizontal};
  };
  return {dense, sep};
}

std::vector<Case> mask_blend_cases(SeededRng& rng, std::size_t s) {
  static const std::size_t N[] = {1, 2, 1}, D[] = {1, 3, 4}, L[] = {3, 4, 6};
  Case c;
  c.inputs = {randn<double>(rng, {N[s], D[s], L[s], L[s]}), randn<double>(rng, {N[s], D[s], L[s], L[s]}),
              rand_uniform<double>(rng, {N[s], 1, L[s], L[s]}, 0.1, 0.9)};
  c.differentiable = {true, true, true};
  c.forward = [](const std::vector<TensorD>& in) { return mask_blend(in[0], in[1], in[2]); };
  c.backward = [](const std::vector<TensorD>& in, const TensorD& dy) {
    auto g = mask_blend_backward(in[0], in[1], in[2], dy);
    return std::vector<TensorD>{g.dcontent, g.dconvolved, g.dmask};
  };
  return {c};
}

std::vector<Case> mask_activation_cases(SeededRng& rng, std::size_t s) {
  static const Shape shapes[] = {{1, 1, 3, 3}, {2, 1, 4, 4}, {1, 1, 8, 8}};
  return {unary_case(
      scale(randn<double>(rng, shapes[s]), 1.5), [](const TensorD& x) { return mask_activation(x); },
      [](const TensorD& x, const TensorD& dy) { return mask_activation_backward(mask_activation(x), dy); })};
}

// Wraps a scalar loss whose backward is linear in the upstream scalar.
Case loss_case(std::vector<TensorD> inputs, std::vector<bool> differentiable,
               std::function<std::pair<double, std::vector<TensorD>>(const std::vector<TensorD>&)> f) {
  Case c;
  c.inputs = std::move(inputs);
  c.differentiable = std::move(differentiable);
  c.forward = [f](const std::vector<TensorD>& in) { return scalar_of(f(in).first); };
  c.backward = [f](const std::vector<TensorD>& in, const TensorD& dy) {
    auto grads = f(in).second;
    for (auto& g : grads)
      if (g.size() > 0) g = scale(g, dy[0]);
    return grads;
  };
  return c;
}

std::vector<Case> loss_cases(SeededRng& rng, std::size_t s) {
  static const Shape shapes[] = {{5}, {2, 3, 4, 4}, {4, 6}};
  static const std::size_t N[] = {1, 3, 5}, D[] = {2, 4, 8}, K[] = {2, 4, 7};
  std::vector<Case> out;
  out.push_back(loss_case({randn<double>(rng, shapes[s]), randn<double>(rng, shapes[s])}, {true, false},
                          [](const std::vector<TensorD>& in) {
                            auto r = l2_loss(in[0], in[1]);
                            return std::make_pair(r.value, std::vector<TensorD>{r.grad, TensorD()});
                          }));
  out.push_back(loss_case({randn<double>(rng, {N[s], D[s]}), randn<double>(rng, {N[s], D[s]})}, {true, true},
                          [](const std::vector<TensorD>& in) {
                            auto r = kl_to_standard_normal(GaussianParams<double>{in[0], in[1]});
                            return std::make_pair(r.value, std::vector<TensorD>{r.dmean, r.dlogvar});
                          }));
  auto score = [&] { return rand_uniform<double>(rng, {N[s], 1}, 0.05, 0.95); };
  out.push_back(loss_case({score(), score(), score()}, {true, true, true}, [](const std::vector<TensorD>& in) {
    auto r = gan_discriminator_loss(in[0], in[1], in[2]);
    return std::make_pair(r.value, std::vector<TensorD>{r.dreal, r.drecon, r.dprior});
  }));
  out.push_back(loss_case({score(), score()}, {true, true}, [](const std::vector<TensorD>& in) {
    auto r = gan_generator_loss(in[0], in[1]);
    return std::make_pair(r.value, std::vector<TensorD>{r.drecon, r.dprior});
  }));
  std::vector<std::size_t> labels(N[s]);
  for (auto& l : labels) l = rng.below(K[s]);
  out.push_back(loss_case({scale(randn<double>(rng, {N[s], K[s]}), 2.0)}, {true},
                          [labels](const std::vector<TensorD>& in) {
                            auto r = aux_class_loss(in[0], labels);
                            return std::make_pair(r.value, std::vector<TensorD>{r.grad});
                          }));
  // Two-scale pyramid: inputs are refined scales followed by the targets.
  const std::size_t l0 = 2 + s;
  out.push_back(loss_case(
      {randn<double>(rng, {1, 2, l0, l0}), randn<double>(rng, {1, 1, 2 * l0, 2 * l0}),
       randn<double>(rng, {1, 2, l0, l0}), randn<double>(rng, {1, 1, 2 * l0, 2 * l0})},
      {true, true, false, false}, [](const std::vector<TensorD>& in) {
        auto r = content_consistency_loss(ContentPyramid<double>{in[0], in[1]}, ContentPyramid<double>{in[2], in[3]});
        return std::make_pair(r.value, std::vector<TensorD>{r.grads[0], r.grads[1], TensorD(), TensorD()});
      }));
  return out;
}

const std::map<std::string, CaseFactory>& registry() {
  static const std::map<std::string, CaseFactory> r{
      {"conv2d", conv2d_cases},
      {"conv_transpose2d", conv_transpose2d_cases},
      {"linear", linear_cases},
      {"activations", activation_cases},
      {"maxpool", maxpool_cases},
      {"softmax", softmax_cases},
      {"convlstm_step", convlstm_cases},
      {"adaptive_conv", adaptive_conv_cases},
      {"mask_blend", mask_blend_cases},
      {"mask_activation", mask_activation_cases},
      {"losses", loss_cases},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, _] : registry()) v.push_back(name);
    return v;
  }();
  return names;
}

OpCheckReport gradcheck_op(const std::string& op, const std::vector<std::uint64_t>& seeds,
                           const GradCheckOptions& opts) {
  auto it = registry().find(op);
  if (it == registry().end()) {
    std::string known;
    for (const auto& n : gradcheck_ops()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown gradcheck op '" + op + "' (known: " + known + ")");
  }
  OpCheckReport report;
  report.op = op;
  for (std::uint64_t seed : seeds)
    for (std::size_t shape = 0; shape < 3; ++shape) {
      SeededRng rng(split_seed(seed, shape));
      for (const Case& c : it->second(rng, shape)) {
        report.stats.merge(check_gradients(c.inputs, c.differentiable, c.forward, c.backward, rng, opts));
        ++report.cases;
      }
    }
  report.passed = report.stats.max_rel_err < opts.tolerance;
  return report;
}

}  // namespace tsvan
