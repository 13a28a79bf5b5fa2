#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "tsvan/layers.hpp"
#include "tsvan/metrics.hpp"
#include "tsvan/synthdata.hpp"

namespace tsvan {

// Small per-frame conv net over (x_t, x_t - x_{t-1}) stacked as 2C channels:
// three conv3 + relu + maxpool2 blocks and a linear head. Clip logits are the
// mean of the per-step logits over t = 1..T-1.
struct ClassifierConfig {
  std::size_t channels = 1;
  std::size_t size = 32;
  std::size_t classes = 4;
  std::size_t width = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

struct Classifier {
  ClassifierConfig config;
  std::vector<Layer> convs;
  Layer head;
  ParamSet<float> params;

  static Classifier init(const ClassifierConfig& cfg, std::uint64_t seed);

  // Clip logits (N, K) for clips stacked as (N, T, C, H, W) flattened to (N * T, C, H, W).
  TensorF logits(const std::vector<const TensorF*>& clips) const;
  ClassDistribution predict(const TensorF& clip) const;
  std::size_t predict_label(const TensorF& clip) const;
  // Adapter for evaluate_with_classifier.
  ClipClassifier as_clip_classifier(std::size_t frames) const;
};

struct ClassifierTrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch = 8;
  double lr = 3e-3;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierTrainConfig from_json(const nlohmann::json& j);
};

// Returns the per-iteration cross-entropy.
std::vector<double> train_classifier(Classifier& clf, const Dataset& data, const ClassifierTrainConfig& cfg);

double classifier_accuracy(const Classifier& clf, const Dataset& data, const std::vector<std::size_t>& ids);

}  // namespace tsvan
