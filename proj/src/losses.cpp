#include "tsvan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tsvan/error.hpp"

namespace tsvan {

void LossWeights::validate() const {
  for (double v : {l1, l2, l3, l4, l5_start, l5_end})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("LossWeights: weights must be finite and >= 0");
  if (l5_start > l5_end) throw ValidationError("LossWeights: lambda5 schedule must be non-decreasing");
}

double LossWeights::lambda5(std::size_t iteration, std::size_t total_iterations) const {
  if (total_iterations == 0) return l5_end;
  const double frac = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(total_iterations));
  return l5_start + (l5_end - l5_start) * frac;
}

template <typename T>
LossGrad<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ValidationError("l2_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  LossGrad<T> r{T(0), Tensor<T>(pred.shape())};
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    s += d * d;
    r.grad[i] = static_cast<T>(2.0 * d * inv_n);
  }
  r.value = static_cast<T>(s * inv_n);
  return r;
}

template <typename T>
KlResult<T> kl_to_standard_normal(const GaussianParams<T>& q) {
  if (q.mean.shape() != q.logvar.shape())
    throw ValidationError("kl_to_standard_normal: mean " + shape_str(q.mean.shape()) + " and log-variance " +
                          shape_str(q.logvar.shape()) + " differ");
  const std::size_t batch = q.mean.rank() >= 2 ? q.mean.dim(0) : 1;
  const double inv_b = 1.0 / static_cast<double>(batch);
  KlResult<T> r{T(0), Tensor<T>(q.mean.shape()), Tensor<T>(q.mean.shape())};
  double s = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double m = q.mean[i], lv = q.logvar[i], var = std::exp(lv);
    s += 0.5 * (var + m * m - 1.0 - lv);
    r.dmean[i] = static_cast<T>(m * inv_b);
    r.dlogvar[i] = static_cast<T>(0.5 * (var - 1.0) * inv_b);
  }
  r.value = static_cast<T>(s * inv_b);
  return r;
}

namespace {

// -ln(p) (or -ln(1 - p) when `negative`) with clamped p, plus its derivative.
template <typename T>
double bce_term(T p, bool negative, T* grad, double inv_b) {
  const double eps = kGanScoreEpsilon;
  const double raw = static_cast<double>(p);
  const double c = std::clamp(raw, eps, 1.0 - eps);
  const bool active = raw > eps && raw < 1.0 - eps;
  if (negative) {
    *grad = active ? static_cast<T>(inv_b / (1.0 - c)) : T(0);
    return -std::log(1.0 - c);
  }
  *grad = active ? static_cast<T>(-inv_b / c) : T(0);
  return -std::log(c);
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ValidationError(std::string(op) + ": score shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " differ");
}

}  // namespace

template <typename T>
GanDiscriminatorLoss<T> gan_discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_recon,
                                               const Tensor<T>& d_prior) {
  require_same("gan_discriminator_loss", d_real, d_recon);
  require_same("gan_discriminator_loss", d_real, d_prior);
  const double inv_b = 1.0 / static_cast<double>(d_real.size());
  GanDiscriminatorLoss<T> r{T(0), Tensor<T>(d_real.shape()), Tensor<T>(d_real.shape()), Tensor<T>(d_real.shape())};
  double s = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    s += bce_term(d_real[i], false, &r.dreal[i], inv_b);
    s += bce_term(d_recon[i], true, &r.drecon[i], inv_b);
    s += bce_term(d_prior[i], true, &r.dprior[i], inv_b);
  }
  r.value = static_cast<T>(s * inv_b);
  return r;
}

template <typename T>
GanGeneratorLoss<T> gan_generator_loss(const Tensor<T>& d_recon, const Tensor<T>& d_prior) {
  require_same("gan_generator_loss", d_recon, d_prior);
  const double inv_b = 1.0 / static_cast<double>(d_recon.size());
  GanGeneratorLoss<T> r{T(0), Tensor<T>(d_recon.shape()), Tensor<T>(d_recon.shape())};
  double s = 0.0;
  for (std::size_t i = 0; i < d_recon.size(); ++i) {
    s += bce_term(d_recon[i], false, &r.drecon[i], inv_b);
    s += bce_term(d_prior[i], false, &r.dprior[i], inv_b);
  }
  r.value = static_cast<T>(s * inv_b);
  return r;
}

template <typename T>
LossGrad<T> aux_class_loss(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ValidationError("aux_class_loss: logits " + shape_str(logits.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  const double inv_b = 1.0 / static_cast<double>(B);
  LossGrad<T> r{T(0), Tensor<T>(logits.shape())};
  double s = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= K)
      throw ValidationError("aux_class_loss: label " + std::to_string(labels[b]) + " out of range for K = " +
                            std::to_string(K));
    const T* row = logits.raw() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max<double>(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - m);
    const double log_z = m + std::log(z);
    s += log_z - static_cast<double>(row[labels[b]]);
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(row[k]) - log_z);
      r.grad[b * K + k] = static_cast<T>((p - (k == labels[b] ? 1.0 : 0.0)) * inv_b);
    }
  }
  r.value = static_cast<T>(s * inv_b);
  return r;
}

template <typename T>
PyramidLoss<T> content_consistency_loss(const ContentPyramid<T>& refined_prev, const ContentPyramid<T>& current) {
  if (refined_prev.size() != current.size())
    throw ValidationError("content_consistency_loss: pyramids have " + std::to_string(refined_prev.size()) + " and " +
                          std::to_string(current.size()) + " scales");
  PyramidLoss<T> r;
  double s = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (refined_prev[i].shape() != current[i].shape())
      throw ValidationError("content_consistency_loss: scale " + std::to_string(i) + " shapes " +
                            shape_str(refined_prev[i].shape()) + " and " + shape_str(current[i].shape()) + " differ");
    LossGrad<T> l = l2_loss(refined_prev[i], current[i]);
    s += static_cast<double>(l.value);
    r.grads.push_back(std::move(l.grad));
  }
  r.value = static_cast<T>(s);
  return r;
}

double total_content_loss(const LossWeights& w, double recon, double kl) {
  w.validate();
  return w.l1 * recon + w.l2 * kl;
}

double total_motion_loss(const LossWeights& w, double consistency, double video_recon, double kl_sum,
                         std::size_t iteration, std::size_t total_iterations) {
  w.validate();
  return w.l3 * consistency + w.l4 * video_recon + w.lambda5(iteration, total_iterations) * kl_sum;
}

#define TSVAN_INSTANTIATE(T)                                                                                 \
  template LossGrad<T> l2_loss(const Tensor<T>&, const Tensor<T>&);                                          \
  template KlResult<T> kl_to_standard_normal(const GaussianParams<T>&);                                      \
  template GanDiscriminatorLoss<T> gan_discriminator_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template GanGeneratorLoss<T> gan_generator_loss(const Tensor<T>&, const Tensor<T>&);                       \
  template LossGrad<T> aux_class_loss(const Tensor<T>&, const std::vector<std::size_t>&);                    \
  template PyramidLoss<T> content_consistency_loss(const ContentPyramid<T>&, const ContentPyramid<T>&);

TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)

}  // namespace tsvan
