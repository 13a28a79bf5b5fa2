#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "tsvan/fusion.hpp"
#include "tsvan/layers.hpp"
#include "tsvan/losses.hpp"
#include "tsvan/nn.hpp"
#include "tsvan/rng.hpp"

namespace tsvan {

// Toy two-stream next-frame model.
//
// Content stream: E_c encodes (x_t, one-hot k) into q(z_c); G_c decodes
// (z_c, one-hot k) through a fully connected layer to a 4x4 map and then
// U = log2(size / 4) upsampling stages (4x4/2/1 deconvolution, 3x3
// convolution) and a tanh head. The outputs of the last S stages are the
// content pyramid.
//
// Motion stream: E_m encodes (dx_t, one-hot k) into q(z_m). A convLSTM step
// turns z_m, reshaped to (M / 16, 4, 4), into the motion embedding e_m. G_m
// decodes (z_c, one-hot k) the same way as G_c, concatenates e_m at 4x4 and
// upsamples in parallel with G_c; at every pyramid scale a subnet emits the
// separable kernels (w_v, w_h) and the mask. Each pyramid level is fused
// before it feeds the next content stage.
struct ModelConfig {
  std::size_t ngf = 8;
  std::size_t content_dim = 64;  // C
  std::size_t motion_dim = 16;   // M
  std::size_t scales = 2;        // S
  std::size_t kernel = 3;        // n
  std::size_t classes = 4;       // K
  std::size_t size = 32;
  std::size_t channels = 1;
  bool convlstm = true;

  // size must be a power of two >= 8 with S <= log2(size / 4); M divisible by 16.
  void validate() const;
  std::size_t stages() const;
  std::size_t stage_width(std::size_t stage) const;
  // Index of the first stage whose output is a pyramid level.
  std::size_t first_tap() const { return stages() - scales; }
  std::size_t base_channels() const { return 4 * ngf; }
  std::size_t embedding_channels() const;
  FusionConfig fusion() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Architecture {
  std::vector<Layer> content_encoder;  // convolutions down to 4x4
  Layer content_head;                  // fully connected to 2C
  std::vector<Layer> motion_encoder;
  Layer motion_head;                   // fully connected to 2M
  Layer content_fc, motion_fc;         // latent to 4ngf x 4 x 4
  std::vector<std::vector<Layer>> content_stages, motion_stages;
  std::vector<Layer> trunks, branch_v, branch_h, branch_m;  // per scale
  Layer output;                        // 3x3 convolution, tanh
  ConvLstmSpec lstm;
};

Architecture make_architecture(const ModelConfig& cfg);

template <typename T>
struct MotionFields {
  std::vector<SeparableKernelField<T>> kernels;
  std::vector<Tensor<T>> masks;
};

template <typename T>
struct Model {
  ModelConfig config;
  Architecture arch;
  ParamSet<T> content;  // E_c and G_c
  ParamSet<T> motion;   // E_m, G_m with its subnets, convLSTM

  // Kernel branches start at the identity kernel and masks at 0.5.
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  template <typename U>
  Model<U> cast() const {
    return {config, arch, content.template cast<U>(), motion.template cast<U>()};
  }
};

// Standard normal draws for the reparameterisation: content (N, C), motion (N, M).
template <typename T>
struct Noise {
  Tensor<T> content;
  Tensor<T> motion;

  static Noise draw(SeededRng& rng, std::size_t batch, const ModelConfig& cfg);
  static Noise zeros(std::size_t batch, const ModelConfig& cfg);
};

struct ForwardOptions {
  bool zero_noise = false;  // use posterior means
  bool masks_zero = false;  // diagnostic: replace every mask by 0
};

template <typename T>
struct NextFrame {
  Tensor<T> frame;           // x^_{t+1}
  Tensor<T> reconstruction;  // G_c output without fusion
  ContentPyramid<T> pyramid;
  ContentPyramid<T> refined;
  GaussianParams<T> content_q, motion_q;
  MotionFields<T> fields;
};

// x, dx: (N, channels, size, size); labels: N class indices.
template <typename T>
NextFrame<T> forward_next_frame(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& dx,
                                const std::vector<std::size_t>& labels, SeededRng& rng, const ForwardOptions& opts = {});
// Same, with explicit noise.
template <typename T>
NextFrame<T> forward_next_frame(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& dx,
                                const std::vector<std::size_t>& labels, const Noise<T>& noise,
                                const ForwardOptions& opts = {});

// A training batch of frame triples x_{t-1}, x_t, x_{t+1}.
template <typename T>
struct Batch {
  Tensor<T> prev, cur, next;
  std::vector<std::size_t> labels;
};

enum class Phase { content, motion };

struct LossBreakdown {
  Phase phase = Phase::content;
  std::size_t iteration = 0;
  double total = 0;
  double recon = 0;        // content phase: L2(x^_t, x_t)
  double kl = 0;           // KL of the phase's latent
  double consistency = 0;  // motion phase
  double video_recon = 0;  // motion phase: L2(x^_{t+1}, x_{t+1})
  double lambda5 = 0;

  nlohmann::json to_json() const;
};

// Zeroes the gradients of the phase's parameter set and fills them with the
// gradient of the phase objective:
//   content: l1 L2(x^_t, x_t) + l2 KL(z_c)
//   motion:  l3 consistency + l4 L2(x^_{t+1}, x_{t+1}) + l5 KL(z_m)
// The other set is left untouched. Throws NumericError on a non-finite term.
template <typename T>
LossBreakdown compute_gradients(Model<T>& model, const Batch<T>& batch, Phase phase, const Noise<T>& noise,
                                const LossWeights& weights, std::size_t iteration, std::size_t total_iterations);

// Consistency targets: G_c pyramid of x_{t+1} decoded from its posterior mean.
template <typename T>
ContentPyramid<T> target_pyramid(const Model<T>& model, const Tensor<T>& next, const std::vector<std::size_t>& labels);

// Frames generated from the prior. The first frame is G_c's decoding of
// z_c ~ N(0, I); every later step draws z_m ~ N(0, I), advances the convLSTM
// state and fuses the content carried from the previous step. The coarsest
// refined pyramid level is the carried content. The first `heatup` frames are
// discarded. Returns (frames, channels, size, size).
TensorF rollout(const Model<float>& model, std::size_t label, SeededRng& rng, std::size_t frames,
                std::size_t heatup = 2, bool masks_zero = false);

}  // namespace tsvan
