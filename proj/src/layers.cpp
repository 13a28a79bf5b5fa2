#include "tsvan/layers.hpp"

#include "tsvan/error.hpp"

namespace tsvan {

Shape Layer::weight_shape() const {
  const ConvSpec& s = spec;
  switch (kind) {
    case LayerKind::conv: return {s.out_channels, s.in_channels, s.kernel, s.kernel};
    case LayerKind::deconv: return {s.in_channels, s.out_channels, s.kernel, s.kernel};
    case LayerKind::linear: return {s.out_channels, s.in_channels};
  }
  return {};
}

template <typename T>
void init_layer(ParamSet<T>& params, const Layer& layer, SeededRng& rng) {
  const std::size_t area = layer.kind == LayerKind::linear ? 1 : layer.spec.kernel * layer.spec.kernel;
  params.add(layer.weight_name(), xavier_uniform<T>(rng, layer.weight_shape(), layer.spec.in_channels * area,
                                                    layer.spec.out_channels * area));
  params.add(layer.bias_name(), Tensor<T>(layer.bias_shape()));
}

template <typename T>
Tensor<T> layer_forward(const Layer& layer, const ParamSet<T>& params, const Tensor<T>& x, LayerTrace<T>* trace) {
  const Tensor<T>& w = params.value(layer.weight_name());
  const Tensor<T>& b = params.value(layer.bias_name());
  Tensor<T> y;
  try {
    switch (layer.kind) {
      case LayerKind::conv: y = conv2d(x, w, b, layer.spec); break;
      case LayerKind::deconv: y = conv_transpose2d(x, w, b, layer.spec); break;
      case LayerKind::linear: y = linear(x, w, b); break;
    }
  } catch (const ValidationError& e) {
    throw ValidationError(layer.name + ": " + e.what());
  }
  switch (layer.act) {
    case Activation::none: break;
    case Activation::relu: y = relu(y); break;
    case Activation::tanh: y = tanh_act(y); break;
  }
  if (trace) *trace = {x, y};
  return y;
}

template <typename T>
Tensor<T> layer_backward(const Layer& layer, ParamSet<T>& params, const LayerTrace<T>& trace, const Tensor<T>& dy,
                         bool param_grads) {
  Tensor<T> dz;
  switch (layer.act) {
    case Activation::none: dz = dy; break;
    // relu(z) > 0 exactly where z > 0, so the output selects the same units.
    case Activation::relu: dz = relu_backward(trace.output, dy); break;
    case Activation::tanh: dz = tanh_backward(trace.output, dy); break;
  }
  const Tensor<T>& w = params.value(layer.weight_name());
  ConvGrads<T> g;
  switch (layer.kind) {
    case LayerKind::conv: g = conv2d_backward(trace.input, w, dz, layer.spec); break;
    case LayerKind::deconv: g = conv_transpose2d_backward(trace.input, w, dz, layer.spec); break;
    case LayerKind::linear: g = linear_backward(trace.input, w, dz); break;
  }
  if (param_grads) {
    params.accumulate(layer.weight_name(), g.dw);
    params.accumulate(layer.bias_name(), g.db);
  }
  return g.dx;
}

template <typename T>
Tensor<T> stack_forward(const std::vector<Layer>& layers, const ParamSet<T>& params, const Tensor<T>& x,
                        StackTrace<T>* trace) {
  if (trace) trace->layers.assign(layers.size(), {});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) h = layer_forward(layers[i], params, h, trace ? &trace->layers[i] : nullptr);
  return h;
}

template <typename T>
Tensor<T> stack_backward(const std::vector<Layer>& layers, ParamSet<T>& params, const StackTrace<T>& trace,
                         Tensor<T> dy, bool param_grads) {
  for (std::size_t i = layers.size(); i-- > 0;) dy = layer_backward(layers[i], params, trace.layers[i], dy, param_grads);
  return dy;
}

#define TSVAN_INSTANTIATE(T)                                                                                     \
  template void init_layer<T>(ParamSet<T>&, const Layer&, SeededRng&);                                           \
  template Tensor<T> layer_forward<T>(const Layer&, const ParamSet<T>&, const Tensor<T>&, LayerTrace<T>*);        \
  template Tensor<T> layer_backward<T>(const Layer&, ParamSet<T>&, const LayerTrace<T>&, const Tensor<T>&, bool); \
  template Tensor<T> stack_forward<T>(const std::vector<Layer>&, const ParamSet<T>&, const Tensor<T>&,            \
                                      StackTrace<T>*);                                                           \
  template Tensor<T> stack_backward<T>(const std::vector<Layer>&, ParamSet<T>&, const StackTrace<T>&, Tensor<T>, bool);
TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)
#undef TSVAN_INSTANTIATE

}  // namespace tsvan
