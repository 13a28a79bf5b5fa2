#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"

#include "tsvan/losses.hpp"
#include "tsvan/model.hpp"
#include "tsvan/synthdata.hpp"

namespace tsvan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam over one ParamSet, reading the accumulated gradients. Moments are kept
// per parameter in insertion order.
template <typename T>
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg);
  void step(ParamSet<T>& params);
  std::size_t iterations() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Teacher-forcing probability falling linearly from 1 at iteration 0 to 0 at `total`.
struct Schedule {
  std::size_t total = 1;

  double teacher_forcing_prob(std::size_t iteration) const;
};

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 8;
  AdamConfig adam;
  LossWeights weights;
  // Content and motion phases alternate in blocks of this many iterations.
  std::size_t content_steps = 3;
  std::size_t motion_steps = 2;
  // Motion-phase inputs are replaced by the model's own prediction with
  // probability 1 - teacher_forcing_prob(iteration).
  bool scheduled_sampling = false;
  std::uint64_t seed = 1;

  void validate() const;
  Phase phase_of(std::size_t iteration) const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Settings for short desk-scale runs: a faster optimiser, and KL weights
// divided by the pixel count of one frame so that they weigh against the
// per-pixel-mean L2 terms as they would against a per-frame sum.
TrainConfig desk_train_config(const ClipSpec& spec);

// Random (clip, t) triples from `ids` with 1 <= t <= T - 2. When `before_prev`
// is given, t >= 2 and it receives x_{t-2}.
Batch<float> sample_batch(const Dataset& data, const std::vector<std::size_t>& ids, std::size_t batch, SeededRng& rng,
                          TensorF* before_prev = nullptr);

struct TrainResult {
  std::vector<LossBreakdown> history;
};

// Iteration i draws its batch and noise from split_seed(cfg.seed, i).
TrainResult train_model(Model<float>& model, const Dataset& data, const TrainConfig& cfg,
                        const std::function<void(const LossBreakdown&)>& on_step = {});

struct PredictionReport {
  std::size_t pairs = 0;
  double model_l2 = 0;     // mean L2(x^_{t+1}, x_{t+1}) with posterior means
  double baseline_l2 = 0;  // mean L2(x_t, x_{t+1})
  double ratio = 0;

  nlohmann::json to_json() const;
};

// Next-frame prediction over every 1 <= t <= T - 2 of the given clips.
PredictionReport evaluate_prediction(const Model<float>& model, const Dataset& data, const std::vector<std::size_t>& ids);

// Copy-last-frame baseline over the same pairs, computed directly in double.
double copy_last_baseline(const Dataset& data, const std::vector<std::size_t>& ids);

}  // namespace tsvan
