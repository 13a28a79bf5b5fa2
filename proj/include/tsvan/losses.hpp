#pragma once

#include <cstddef>
#include <vector>

#include "tsvan/fusion.hpp"
#include "tsvan/tensor.hpp"

namespace tsvan {

// Diagonal Gaussian q(z | .) as (mean, log-variance), each (N, dim).
template <typename T>
struct GaussianParams {
  Tensor<T> mean;
  Tensor<T> logvar;
};

// Weights of the content objective (l1 recon, l2 KL) and the motion
// objective (l3 consistency, l4 video recon, l5 KL). l5 ramps linearly from
// l5_start to l5_end over training.
struct LossWeights {
  double l1 = 1e4;
  double l2 = 7.0;
  double l3 = 1e2;
  double l4 = 1e4;
  double l5_start = 2.0;
  double l5_end = 20.0;

  void validate() const;
  double lambda5(std::size_t iteration, std::size_t total_iterations) const;

  // Weizmann Human Action row of the published hyper-parameter table.
  static LossWeights weizmann() { return {}; }
};

template <typename T>
struct LossGrad {
  T value{};
  Tensor<T> grad;  // d loss / d first argument
};

// Mean of squared differences over every element.
template <typename T>
LossGrad<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
struct KlResult {
  T value{};
  Tensor<T> dmean;
  Tensor<T> dlogvar;
};

// KL(q || N(0, I)) = sum_d 1/2 (s^2 + m^2 - 1 - ln s^2), averaged over the batch.
template <typename T>
KlResult<T> kl_to_standard_normal(const GaussianParams<T>& q);

inline constexpr double kGanScoreEpsilon = 1e-7;

template <typename T>
struct GanDiscriminatorLoss {
  T value{};
  Tensor<T> dreal, drecon, dprior;
};

template <typename T>
struct GanGeneratorLoss {
  T value{};
  Tensor<T> drecon, dprior;
};

// Binary cross-entropy with real samples as positives and both generated
// sets (reconstructions and prior samples) as negatives. Scores are
// probabilities, clamped to [eps, 1 - eps]; the gradient is zero where the
// clamp is active.
//   D: -mean[ln d_real + ln(1 - d_recon) + ln(1 - d_prior)]
//   G: -mean[ln d_recon + ln d_prior]
template <typename T>
GanDiscriminatorLoss<T> gan_discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_recon,
                                               const Tensor<T>& d_prior);
template <typename T>
GanGeneratorLoss<T> gan_generator_loss(const Tensor<T>& d_recon, const Tensor<T>& d_prior);

// Cross-entropy -ln softmax(logits)[label], averaged over the batch.
// logits: (N, K); labels: N entries in [0, K).
template <typename T>
LossGrad<T> aux_class_loss(const Tensor<T>& logits, const std::vector<std::size_t>& labels);

template <typename T>
struct PyramidLoss {
  T value{};
  std::vector<Tensor<T>> grads;  // w.r.t. each scale of the refined pyramid
};

// Sum over scales of l2_loss(refined_prev[s], current[s]).
template <typename T>
PyramidLoss<T> content_consistency_loss(const ContentPyramid<T>& refined_prev, const ContentPyramid<T>& current);

double total_content_loss(const LossWeights& w, double recon, double kl);
double total_motion_loss(const LossWeights& w, double consistency, double video_recon, double kl_sum,
                         std::size_t iteration, std::size_t total_iterations);

}  // namespace tsvan
