#include "tsvan/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "tsvan/error.hpp"
#include "tsvan/losses.hpp"
#include "tsvan/train.hpp"

namespace tsvan {

void ClassifierConfig::validate() const {
  if (channels != 1 && channels != 3) throw ValidationError("classifier: channels must be 1 or 3");
  if (size < 8 || size % 8 != 0) throw ValidationError("classifier: size must be a multiple of 8");
  if (classes < 2) throw ValidationError("classifier: need at least 2 classes");
  if (width < 1) throw ValidationError("classifier: width must be >= 1");
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"channels", channels}, {"size", size}, {"classes", classes}, {"width", width}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  try {
    c.channels = j.value("channels", c.channels);
    c.size = j.value("size", c.size);
    c.classes = j.value("classes", c.classes);
    c.width = j.value("width", c.width);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("classifier config: ") + e.what());
  }
  c.validate();
  return c;
}

void ClassifierTrainConfig::validate() const {
  if (iterations < 1) throw ValidationError("classifier training: iterations must be >= 1");
  if (batch < 1) throw ValidationError("classifier training: batch must be >= 1");
  if (!(lr > 0)) throw ValidationError("classifier training: learning rate must be positive");
}

nlohmann::json ClassifierTrainConfig::to_json() const {
  return {{"iterations", iterations}, {"batch", batch}, {"lr", lr}, {"seed", seed}};
}

ClassifierTrainConfig ClassifierTrainConfig::from_json(const nlohmann::json& j) {
  ClassifierTrainConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("classifier training config: ") + e.what());
  }
  c.validate();
  return c;
}

Classifier Classifier::init(const ClassifierConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Classifier clf;
  clf.config = cfg;
  const std::size_t widths[3] = {cfg.width, 2 * cfg.width, 2 * cfg.width};
  std::size_t in = 2 * cfg.channels;
  for (std::size_t i = 0; i < 3; ++i) {
    clf.convs.push_back({LayerKind::conv, "clf.conv" + std::to_string(i), {in, widths[i], 3, 1, 1}, Activation::relu});
    in = widths[i];
  }
  const std::size_t side = cfg.size / 8;
  clf.head = {LayerKind::linear, "clf.fc", {in * side * side, cfg.classes, 1, 1, 0}, Activation::none};
  SeededRng rng(seed);
  for (const auto& l : clf.convs) init_layer(clf.params, l, rng);
  init_layer(clf.params, clf.head, rng);
  return clf;
}

namespace {

struct ClassifierTrace {
  std::vector<LayerTrace<float>> convs;
  std::vector<MaxPoolResult<float>> pools;
  std::vector<Shape> pool_inputs;
  LayerTrace<float> head;
  std::size_t clips = 0, steps = 0;
};

// (N * (T-1), 2C, H, W) inputs from N clips of T frames.
TensorF step_inputs(const std::vector<const TensorF*>& clips, const ClassifierConfig& cfg) {
  if (clips.empty()) throw ValidationError("classifier: no clips");
  const Shape& s = clips.front()->shape();
  if (s.size() != 4 || s[1] != cfg.channels || s[2] != cfg.size || s[3] != cfg.size || s[0] < 2)
    throw ValidationError("classifier: clip shape " + shape_str(s) + " does not match (T>=2, " +
                          std::to_string(cfg.channels) + ", " + std::to_string(cfg.size) + ", " +
                          std::to_string(cfg.size) + ")");
  const std::size_t T = s[0], C = s[1], plane = s[2] * s[3], per = C * plane;
  TensorF x({clips.size() * (T - 1), 2 * C, s[2], s[3]});
  float* out = x.raw();
  for (const TensorF* clip : clips) {
    if (clip->shape() != s) throw ValidationError("classifier: clips in a batch must share a shape");
    const float* f = clip->raw();
    for (std::size_t t = 1; t < T; ++t) {
      const float* cur = f + t * per;
      const float* prev = f + (t - 1) * per;
      out = std::copy_n(cur, per, out);
      for (std::size_t i = 0; i < per; ++i) *out++ = cur[i] - prev[i];
    }
  }
  return x;
}

TensorF classifier_forward(const Classifier& clf, const std::vector<const TensorF*>& clips, ClassifierTrace* trace) {
  TensorF h = step_inputs(clips, clf.config);
  const std::size_t steps = clips.front()->dim(0) - 1;
  if (trace) {
    trace->clips = clips.size();
    trace->steps = steps;
  }
  for (const auto& l : clf.convs) {
    LayerTrace<float> lt;
    h = layer_forward(l, clf.params, h, trace ? &lt : nullptr);
    auto pool = maxpool2d(h, 2);
    if (trace) {
      trace->convs.push_back(std::move(lt));
      trace->pool_inputs.push_back(h.shape());
    }
    h = pool.y;
    if (trace) trace->pools.push_back(std::move(pool));
  }
  h = h.reshaped({h.dim(0), h.size() / h.dim(0)});
  LayerTrace<float> ht;
  const TensorF step_logits = layer_forward(clf.head, clf.params, h, trace ? &ht : nullptr);
  if (trace) trace->head = std::move(ht);
  const std::size_t K = clf.config.classes;
  TensorF logits({clips.size(), K});
  for (std::size_t n = 0; n < clips.size(); ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0;
      for (std::size_t t = 0; t < steps; ++t) acc += step_logits[(n * steps + t) * K + k];
      logits[n * K + k] = static_cast<float>(acc / static_cast<double>(steps));
    }
  return logits;
}

void classifier_backward(Classifier& clf, const ClassifierTrace& trace, const TensorF& dlogits) {
  const std::size_t K = clf.config.classes, steps = trace.steps;
  TensorF dstep({trace.clips * steps, K});
  const float inv = 1.0f / static_cast<float>(steps);
  for (std::size_t n = 0; n < trace.clips; ++n)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t k = 0; k < K; ++k) dstep[(n * steps + t) * K + k] = dlogits[n * K + k] * inv;
  TensorF dh = layer_backward(clf.head, clf.params, trace.head, dstep, true);
  for (std::size_t i = clf.convs.size(); i-- > 0;) {
    const Shape pooled = trace.pools[i].y.shape();
    dh = maxpool2d_backward(trace.pool_inputs[i], trace.pools[i].argmax, dh.reshaped(pooled));
    dh = layer_backward(clf.convs[i], clf.params, trace.convs[i], dh, true);
  }
}

}  // namespace

TensorF Classifier::logits(const std::vector<const TensorF*>& clips) const {
  return classifier_forward(*this, clips, nullptr);
}

ClassDistribution Classifier::predict(const TensorF& clip) const {
  const TensorF p = softmax_logits(logits({&clip}));
  ClassDistribution d(p.size());
  double total = 0;
  for (std::size_t k = 0; k < p.size(); ++k) total += d[k] = p[k];
  for (auto& v : d) v /= total;
  return d;
}

std::size_t Classifier::predict_label(const TensorF& clip) const {
  const TensorF l = logits({&clip});
  return static_cast<std::size_t>(std::max_element(l.raw(), l.raw() + l.size()) - l.raw());
}

ClipClassifier Classifier::as_clip_classifier(std::size_t frames) const {
  return {Shape{frames, config.channels, config.size, config.size}, config.classes,
          [this](const TensorF& clip) { return predict(clip); }};
}

std::vector<double> train_classifier(Classifier& clf, const Dataset& data, const ClassifierTrainConfig& cfg) {
  cfg.validate();
  if (data.manifest.classes.size() != clf.config.classes)
    throw ValidationError("classifier training: dataset has " + std::to_string(data.manifest.classes.size()) +
                          " classes, classifier expects " + std::to_string(clf.config.classes));
  const auto& ids = data.manifest.train;
  if (ids.empty()) throw ValidationError("classifier training: empty train split");
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam<float> opt(ac);
  std::vector<double> history;
  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    SeededRng rng(split_seed(cfg.seed, i));
    std::vector<const TensorF*> clips;
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const VideoClip& c = data.clips.at(ids[rng.below(ids.size())]);
      clips.push_back(&c.frames);
      labels.push_back(c.action);
    }
    ClassifierTrace trace;
    const TensorF logits = classifier_forward(clf, clips, &trace);
    const auto loss = aux_class_loss(logits, labels);
    if (!std::isfinite(loss.value))
      throw NumericError("classifier training: non-finite loss at iteration " + std::to_string(i));
    clf.params.zero_grad();
    classifier_backward(clf, trace, loss.grad);
    opt.step(clf.params);
    history.push_back(loss.value);
  }
  return history;
}

double classifier_accuracy(const Classifier& clf, const Dataset& data, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw ValidationError("classifier accuracy: no clips");
  std::size_t correct = 0;
  for (std::size_t id : ids) {
    const VideoClip& c = data.clips.at(id);
    if (clf.predict_label(c.frames) == c.action) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

}  // namespace tsvan
