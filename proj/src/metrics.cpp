#include "tsvan/metrics.hpp"

#include <cmath>

#include "tsvan/error.hpp"

namespace tsvan {

void validate_distribution(const ClassDistribution& p) {
  if (p.empty()) throw ValidationError("class distribution is empty");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("class distribution has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError("class distribution sums to " + std::to_string(s));
}

double entropy(const ClassDistribution& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

namespace {

std::size_t check_dists(std::span<const ClassDistribution> dists) {
  if (dists.empty()) throw ValidationError("metrics need at least one distribution");
  const std::size_t K = dists.front().size();
  for (const auto& p : dists) {
    if (p.size() != K)
      throw ValidationError("class count mismatch: " + std::to_string(p.size()) + " vs " + std::to_string(K));
    validate_distribution(p);
  }
  return K;
}

ClassDistribution marginal(std::span<const ClassDistribution> dists, std::size_t K) {
  ClassDistribution m(K, 0.0);
  for (const auto& p : dists)
    for (std::size_t k = 0; k < K; ++k) m[k] += p[k];
  for (auto& v : m) v /= static_cast<double>(dists.size());
  return m;
}

}  // namespace

double inter_entropy(std::span<const ClassDistribution> dists) {
  const std::size_t K = check_dists(dists);
  return entropy(marginal(dists, K));
}

double mean_intra_entropy(std::span<const ClassDistribution> dists) {
  check_dists(dists);
  double s = 0.0;
  for (const auto& p : dists) s += entropy(p);
  return s / static_cast<double>(dists.size());
}

double inception_score(std::span<const ClassDistribution> dists) {
  return std::exp(inter_entropy(dists) - mean_intra_entropy(dists));
}

double inception_score_kl(std::span<const ClassDistribution> dists) {
  const std::size_t K = check_dists(dists);
  const ClassDistribution m = marginal(dists, K);
  double s = 0.0;
  for (const auto& p : dists)
    for (std::size_t k = 0; k < K; ++k)
      if (p[k] > 0.0) s += p[k] * (std::log(p[k]) - std::log(m[k]));
  return std::exp(s / static_cast<double>(dists.size()));
}

nlohmann::json MetricsReport::to_json() const {
  return nlohmann::json{{"K", classes},
                        {"N", videos},
                        {"inter_entropy", inter_entropy},
                        {"mean_intra_entropy", mean_intra_entropy},
                        {"inception_score", inception_score}};
}

MetricsReport compute_metrics(std::span<const ClassDistribution> dists) {
  MetricsReport r;
  r.classes = check_dists(dists);
  r.videos = dists.size();
  r.inter_entropy = inter_entropy(dists);
  r.mean_intra_entropy = mean_intra_entropy(dists);
  r.inception_score = std::exp(r.inter_entropy - r.mean_intra_entropy);
  return r;
}

MetricsReport evaluate_with_classifier(std::span<const TensorF> clips, const ClipClassifier& classifier) {
  if (!classifier.predict) throw ValidationError("evaluate_with_classifier: classifier has no predict function");
  std::vector<ClassDistribution> dists;
  dists.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].shape() != classifier.input_shape)
      throw ValidationError("evaluate_with_classifier: clip " + std::to_string(i) + " has shape " +
                            shape_str(clips[i].shape()) + ", classifier expects " +
                            shape_str(classifier.input_shape));
    ClassDistribution p = classifier.predict(clips[i]);
    if (p.size() != classifier.classes)
      throw ValidationError("evaluate_with_classifier: classifier returned " + std::to_string(p.size()) +
                            " classes, expected " + std::to_string(classifier.classes));
    dists.push_back(std::move(p));
  }
  return compute_metrics(dists);
}

}  // namespace tsvan
