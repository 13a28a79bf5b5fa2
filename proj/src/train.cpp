#include "tsvan/train.hpp"

#include <cmath>

#include "tsvan/error.hpp"

namespace tsvan {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw ValidationError("adam: learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ValidationError("adam: decay rates must lie in [0, 1)");
  if (!(eps > 0)) throw ValidationError("adam: eps must be positive");
}

template <typename T>
Adam<T>::Adam(const AdamConfig& cfg) : cfg_(cfg) {
  // A zero rate is allowed here so that a frozen run can be expressed.
  if (!(cfg.lr >= 0)) throw ValidationError("adam: learning rate must be non-negative");
  AdamConfig probe = cfg;
  probe.lr = 1;
  probe.validate();
}

template <typename T>
void Adam<T>::step(ParamSet<T>& params) {
  auto& ps = params.params();
  if (m_.empty()) {
    for (const auto& p : ps) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != ps.size()) throw ValidationError("adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto value = ps[k].value.data();
    const auto grad = ps[k].grad.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double update = cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

double Schedule::teacher_forcing_prob(std::size_t iteration) const {
  if (total < 1) throw ValidationError("schedule: total iterations must be >= 1");
  if (iteration > total)
    throw ValidationError("schedule: iteration " + std::to_string(iteration) + " beyond total " + std::to_string(total));
  return 1.0 - static_cast<double>(iteration) / static_cast<double>(total);
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ValidationError("train: iterations must be >= 1");
  if (batch < 1) throw ValidationError("train: batch must be >= 1");
  if (content_steps + motion_steps < 1) throw ValidationError("train: phase ratio must not be 0:0");
  AdamConfig probe = adam;
  if (probe.lr == 0) probe.lr = 1;
  probe.validate();
  weights.validate();
}

Phase TrainConfig::phase_of(std::size_t iteration) const {
  return iteration % (content_steps + motion_steps) < content_steps ? Phase::content : Phase::motion;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch", batch},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"lambda1", weights.l1},
          {"lambda2", weights.l2},
          {"lambda3", weights.l3},
          {"lambda4", weights.l4},
          {"lambda5_start", weights.l5_start},
          {"lambda5_end", weights.l5_end},
          {"content_steps", content_steps},
          {"motion_steps", motion_steps},
          {"scheduled_sampling", scheduled_sampling},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.weights.l1 = j.value("lambda1", c.weights.l1);
    c.weights.l2 = j.value("lambda2", c.weights.l2);
    c.weights.l3 = j.value("lambda3", c.weights.l3);
    c.weights.l4 = j.value("lambda4", c.weights.l4);
    c.weights.l5_start = j.value("lambda5_start", c.weights.l5_start);
    c.weights.l5_end = j.value("lambda5_end", c.weights.l5_end);
    c.content_steps = j.value("content_steps", c.content_steps);
    c.motion_steps = j.value("motion_steps", c.motion_steps);
    c.scheduled_sampling = j.value("scheduled_sampling", c.scheduled_sampling);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig desk_train_config(const ClipSpec& spec) {
  spec.validate();
  TrainConfig c;
  c.batch = 16;
  c.adam.lr = 2e-3;
  c.adam.beta1 = 0.9;
  const double pixels = static_cast<double>(spec.channels * spec.size * spec.size);
  c.weights.l2 /= pixels;
  c.weights.l5_start /= pixels;
  c.weights.l5_end /= pixels;
  return c;
}

namespace {

void copy_frame(const VideoClip& clip, std::size_t t, TensorF& dst, std::size_t slot) {
  const std::size_t per = clip.frames.size() / clip.num_frames();
  std::copy_n(clip.frames.raw() + t * per, per, dst.raw() + slot * per);
}

}  // namespace

Batch<float> sample_batch(const Dataset& data, const std::vector<std::size_t>& ids, std::size_t batch, SeededRng& rng,
                          TensorF* before_prev) {
  if (ids.empty()) throw ValidationError("sample_batch: no clips to sample from");
  const std::size_t T = data.spec.frames, first = before_prev ? 2 : 1;
  if (T < first + 2) throw ValidationError("sample_batch: clips need at least " + std::to_string(first + 2) + " frames");
  const Shape s{batch, data.spec.channels, data.spec.size, data.spec.size};
  Batch<float> b{TensorF(s), TensorF(s), TensorF(s), {}};
  if (before_prev) *before_prev = TensorF(s);
  for (std::size_t n = 0; n < batch; ++n) {
    const VideoClip& clip = data.clips.at(ids[rng.below(ids.size())]);
    const std::size_t t = first + rng.below(T - 1 - first);
    if (before_prev) copy_frame(clip, t - 2, *before_prev, n);
    copy_frame(clip, t - 1, b.prev, n);
    copy_frame(clip, t, b.cur, n);
    copy_frame(clip, t + 1, b.next, n);
    b.labels.push_back(clip.action);
  }
  return b;
}

TrainResult train_model(Model<float>& model, const Dataset& data, const TrainConfig& cfg,
                        const std::function<void(const LossBreakdown&)>& on_step) {
  cfg.validate();
  if (data.spec.channels != model.config.channels || data.spec.size != model.config.size)
    throw ValidationError("train: dataset frames do not match the model configuration");
  if (data.manifest.classes.size() != model.config.classes)
    throw ValidationError("train: dataset has " + std::to_string(data.manifest.classes.size()) +
                          " classes, model expects " + std::to_string(model.config.classes));
  Adam<float> content_opt(cfg.adam), motion_opt(cfg.adam);
  const Schedule schedule{cfg.iterations};
  TrainResult result;
  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    SeededRng rng(split_seed(cfg.seed, i));
    const Phase phase = cfg.phase_of(i);
    const bool sample_self = phase == Phase::motion && cfg.scheduled_sampling;
    TensorF before_prev;
    Batch<float> batch = sample_batch(data, data.manifest.train, cfg.batch, rng, sample_self ? &before_prev : nullptr);
    if (sample_self && rng.uniform() >= schedule.teacher_forcing_prob(i)) {
      // x_t is replaced by the model's own prediction from (x_{t-1}, x_{t-1} - x_{t-2}).
      ForwardOptions det;
      det.zero_noise = true;
      batch.cur = forward_next_frame(model, batch.prev, sub(batch.prev, before_prev), batch.labels, rng, det).frame;
    }
    const Noise<float> noise = Noise<float>::draw(rng, cfg.batch, model.config);
    LossBreakdown lb = compute_gradients(model, batch, phase, noise, cfg.weights, i, cfg.iterations);
    if (phase == Phase::content)
      content_opt.step(model.content);
    else
      motion_opt.step(model.motion);
    result.history.push_back(lb);
    if (on_step) on_step(lb);
  }
  return result;
}

nlohmann::json PredictionReport::to_json() const {
  return {{"pairs", pairs}, {"model_l2", model_l2}, {"baseline_l2", baseline_l2}, {"ratio", ratio}};
}

PredictionReport evaluate_prediction(const Model<float>& model, const Dataset& data, const std::vector<std::size_t>& ids) {
  const std::size_t T = data.spec.frames;
  if (T < 3) throw ValidationError("evaluate: clips need at least 3 frames");
  if (ids.empty()) throw ValidationError("evaluate: no clips");
  PredictionReport r;
  double total = 0;
  ForwardOptions det;
  det.zero_noise = true;
  SeededRng unused(0);
  for (std::size_t id : ids) {
    const VideoClip& clip = data.clips.at(id);
    const std::size_t n = T - 2;
    const Shape s{n, data.spec.channels, data.spec.size, data.spec.size};
    TensorF prev(s), cur(s), next(s);
    for (std::size_t k = 0; k < n; ++k) {
      copy_frame(clip, k, prev, k);
      copy_frame(clip, k + 1, cur, k);
      copy_frame(clip, k + 2, next, k);
    }
    const auto out = forward_next_frame(model, cur, sub(cur, prev), std::vector<std::size_t>(n, clip.action), unused, det);
    const std::size_t per = cur.size() / n;
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0;
      for (std::size_t i = 0; i < per; ++i) {
        const double d = static_cast<double>(out.frame[k * per + i]) - next[k * per + i];
        acc += d * d;
      }
      total += acc / static_cast<double>(per);
    }
    r.pairs += n;
  }
  r.model_l2 = total / static_cast<double>(r.pairs);
  r.baseline_l2 = copy_last_baseline(data, ids);
  r.ratio = r.baseline_l2 > 0 ? r.model_l2 / r.baseline_l2 : 0.0;
  return r;
}

double copy_last_baseline(const Dataset& data, const std::vector<std::size_t>& ids) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t id : ids) {
    const VideoClip& clip = data.clips.at(id);
    const std::size_t per = clip.frames.size() / clip.num_frames();
    for (std::size_t t = 1; t + 1 < clip.num_frames(); ++t) {
      double acc = 0;
      for (std::size_t i = 0; i < per; ++i) {
        const double d = static_cast<double>(clip.frames[(t + 1) * per + i]) - clip.frames[t * per + i];
        acc += d * d;
      }
      total += acc / static_cast<double>(per);
      ++pairs;
    }
  }
  if (pairs == 0) throw ValidationError("copy_last_baseline: no frame pairs");
  return total / static_cast<double>(pairs);
}

}  // namespace tsvan
