#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsvan/tensor.hpp"

namespace tsvan {

// p(y | v) for one video: K non-negative entries summing to 1 (within 1e-9).
using ClassDistribution = std::vector<double>;

void validate_distribution(const ClassDistribution& p);

// All entropies are in nats, with 0 ln 0 = 0.
double entropy(const ClassDistribution& p);

// H(y): entropy of the mean distribution over all videos.
double inter_entropy(std::span<const ClassDistribution> dists);
// Mean over videos of H(y | v).
double mean_intra_entropy(std::span<const ClassDistribution> dists);
// exp(H(y) - mean H(y | v)).
double inception_score(std::span<const ClassDistribution> dists);
// exp(mean KL(p(y | v) || p(y))); equal to inception_score up to rounding.
double inception_score_kl(std::span<const ClassDistribution> dists);

struct MetricsReport {
  std::size_t classes = 0;
  std::size_t videos = 0;
  double inter_entropy = 0.0;
  double mean_intra_entropy = 0.0;
  double inception_score = 0.0;

  // {"K", "N", "inter_entropy", "mean_intra_entropy", "inception_score"}
  nlohmann::json to_json() const;
};

MetricsReport compute_metrics(std::span<const ClassDistribution> dists);

struct ClipClassifier {
  Shape input_shape;
  std::size_t classes = 0;
  std::function<ClassDistribution(const TensorF&)> predict;
};

// Runs the classifier on every clip in order and reports the metrics of the
// resulting distributions.
MetricsReport evaluate_with_classifier(std::span<const TensorF> clips, const ClipClassifier& classifier);

}  // namespace tsvan
