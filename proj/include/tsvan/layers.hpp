#pragma once

#include <string>
#include <vector>

#include "tsvan/nn.hpp"
#include "tsvan/rng.hpp"

namespace tsvan {

// A parameterised layer followed by an activation, with parameters stored as
// "<name>.w" and "<name>.b" in a ParamSet.

enum class LayerKind { conv, deconv, linear };
enum class Activation { none, relu, tanh };

struct Layer {
  LayerKind kind = LayerKind::conv;
  std::string name;
  ConvSpec spec;  // linear layers use in_channels / out_channels as feature counts
  Activation act = Activation::none;

  Shape weight_shape() const;
  Shape bias_shape() const { return {spec.out_channels}; }
  std::string weight_name() const { return name + ".w"; }
  std::string bias_name() const { return name + ".b"; }
};

template <typename T>
struct LayerTrace {
  Tensor<T> input;
  Tensor<T> output;  // after the activation
};

// Xavier-uniform weights, zero bias.
template <typename T>
void init_layer(ParamSet<T>& params, const Layer& layer, SeededRng& rng);

template <typename T>
Tensor<T> layer_forward(const Layer& layer, const ParamSet<T>& params, const Tensor<T>& x,
                        LayerTrace<T>* trace = nullptr);

// Returns the gradient with respect to the layer input. With `param_grads`
// the weight and bias gradients are accumulated into `params`.
template <typename T>
Tensor<T> layer_backward(const Layer& layer, ParamSet<T>& params, const LayerTrace<T>& trace, const Tensor<T>& dy,
                         bool param_grads);

// A chain of layers evaluated in order.
template <typename T>
struct StackTrace {
  std::vector<LayerTrace<T>> layers;
};

template <typename T>
Tensor<T> stack_forward(const std::vector<Layer>& layers, const ParamSet<T>& params, const Tensor<T>& x,
                        StackTrace<T>* trace = nullptr);
template <typename T>
Tensor<T> stack_backward(const std::vector<Layer>& layers, ParamSet<T>& params, const StackTrace<T>& trace,
                         Tensor<T> dy, bool param_grads);

}  // namespace tsvan
