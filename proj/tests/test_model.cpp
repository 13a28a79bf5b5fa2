#include "doctest.h"

#include "tsvan/error.hpp"
#include "tsvan/gradcheck.hpp"
#include "tsvan/model.hpp"

using namespace tsvan;

namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.ngf = 4;
  c.content_dim = 8;
  c.motion_dim = 16;
  c.scales = 2;
  c.kernel = 3;
  c.classes = 3;
  c.size = 16;
  return c;
}

template <typename T>
Batch<T> random_batch(SeededRng& rng, const ModelConfig& c, std::size_t n) {
  const Shape s{n, c.channels, c.size, c.size};
  Batch<T> b{rand_uniform<T>(rng, s, -1, 1), rand_uniform<T>(rng, s, -1, 1), rand_uniform<T>(rng, s, -1, 1), {}};
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(rng.below(c.classes));
  return b;
}

TensorD flatten(const ParamSet<double>& ps) {
  std::vector<double> v;
  for (const auto& p : ps.params()) v.insert(v.end(), p.value.vec().begin(), p.value.vec().end());
  const std::size_t n = v.size();
  return TensorD({n}, std::move(v));
}

void unflatten(ParamSet<double>& ps, const TensorD& flat, bool grads) {
  std::size_t off = 0;
  for (auto& p : ps.params()) {
    auto& dst = grads ? p.grad : p.value;
    std::copy_n(flat.raw() + off, dst.size(), dst.raw());
    off += dst.size();
  }
}

TensorD flatten_grads(const ParamSet<double>& ps) {
  std::vector<double> v;
  for (const auto& p : ps.params()) v.insert(v.end(), p.grad.vec().begin(), p.grad.vec().end());
  const std::size_t n = v.size();
  return TensorD({n}, std::move(v));
}

}  // namespace

TEST_CASE("architecture follows the configuration") {
  const ModelConfig c;
  CHECK(c.stages() == 3);
  CHECK(c.first_tap() == 1);
  const FusionConfig f = c.fusion();
  CHECK(f.resolutions == std::vector<std::size_t>{16, 32});
  CHECK(f.channels == std::vector<std::size_t>{8, 8});
  const auto m = Model<float>::init(c, 1);
  for (std::size_t s = 0; s < c.scales; ++s) {
    CHECK(m.arch.branch_v[s].spec.out_channels == c.kernel);
    CHECK(m.arch.branch_h[s].spec.out_channels == c.kernel);
    CHECK(m.arch.branch_m[s].spec.out_channels == 1);
  }
  for (const auto* ps : {&m.content, &m.motion})
    for (const auto& p : ps->params()) CHECK(p.value.all_finite());
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());

  ModelConfig bad = c;
  bad.size = 24;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.scales = 4;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.motion_dim = 10;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("forward shapes and diagnostics") {
  const ModelConfig c = micro_config();
  const auto m = Model<double>::init(c, 2);
  SeededRng rng(3);
  const auto b = random_batch<double>(rng, c, 2);
  const Tensor<double> dx = sub(b.cur, b.prev);

  const auto out = forward_next_frame(m, b.cur, dx, b.labels, rng);
  CHECK(out.frame.shape() == b.cur.shape());
  CHECK(out.pyramid.size() == 2);
  CHECK(out.pyramid[0].shape() == Shape{2, 4, 8, 8});
  CHECK(out.pyramid[1].shape() == Shape{2, 4, 16, 16});
  CHECK(out.fields.kernels[1].vertical.shape() == Shape{2, 3, 16, 16});
  CHECK(out.fields.masks[0].shape() == Shape{2, 1, 8, 8});
  CHECK(out.content_q.mean.shape() == Shape{2, 8});
  CHECK(out.motion_q.logvar.shape() == Shape{2, 16});

  ForwardOptions zero_masks;
  zero_masks.masks_zero = true;
  const auto z = forward_next_frame(m, b.cur, dx, b.labels, rng, zero_masks);
  CHECK(z.frame == z.reconstruction);
  CHECK(z.refined == z.pyramid);

  ForwardOptions det;
  det.zero_noise = true;
  SeededRng r1(10), r2(99);
  CHECK(forward_next_frame(m, b.cur, dx, b.labels, r1, det).frame ==
        forward_next_frame(m, b.cur, dx, b.labels, r2, det).frame);

  CHECK_THROWS_AS((void)forward_next_frame(m, b.cur, dx, std::vector<std::size_t>{0, 7}, rng), ValidationError);
  CHECK_THROWS_AS((void)forward_next_frame(m, TensorD({2, 1, 8, 8}), dx, b.labels, rng), ValidationError);
}

TEST_CASE("full-pipeline parameter gradients match finite differences") {
  const ModelConfig c = micro_config();
  for (Phase phase : {Phase::content, Phase::motion}) {
    CAPTURE(phase == Phase::content ? "content" : "motion");
    auto m = Model<double>::init(c, 4);
    SeededRng rng(5);
    const auto batch = random_batch<double>(rng, c, 2);
    const auto noise = Noise<double>::draw(rng, 2, c);
    const LossWeights w;
    ParamSet<double>& ps = phase == Phase::content ? m.content : m.motion;

    auto forward = [&](const std::vector<TensorD>& in) {
      auto probe = m;
      unflatten(phase == Phase::content ? probe.content : probe.motion, in[0], false);
      return TensorD::scalar(compute_gradients(probe, batch, phase, noise, w, 10, 100).total);
    };
    auto backward = [&](const std::vector<TensorD>& in, const TensorD& dy) {
      auto probe = m;
      ParamSet<double>& pp = phase == Phase::content ? probe.content : probe.motion;
      unflatten(pp, in[0], false);
      compute_gradients(probe, batch, phase, noise, w, 10, 100);
      return std::vector<TensorD>{scale(flatten_grads(pp), dy[0])};
    };
    GradCheckOptions opts;
    opts.max_coords = 200;
    opts.tolerance = 1e-3;
    const auto stats = check_gradients({flatten(ps)}, {true}, forward, backward, rng, opts);
    CAPTURE(stats.worst);
    CHECK(stats.coords == 200);
    CHECK(stats.max_rel_err < 1e-3);
  }
}

TEST_CASE("phases touch only their own parameter set") {
  const ModelConfig c = micro_config();
  auto m = Model<float>::init(c, 6);
  SeededRng rng(7);
  const auto b = random_batch<float>(rng, c, 2);
  const auto noise = Noise<float>::draw(rng, 2, c);
  m.motion.zero_grad();
  compute_gradients(m, b, Phase::content, noise, LossWeights{}, 0, 10);
  for (const auto& p : m.motion.params()) CHECK(p.grad == TensorF(p.value.shape()));
  m.content.zero_grad();
  compute_gradients(m, b, Phase::motion, noise, LossWeights{}, 0, 10);
  for (const auto& p : m.content.params()) CHECK(p.grad == TensorF(p.value.shape()));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const ModelConfig c = micro_config();
  auto m = Model<float>::init(c, 8);
  SeededRng rng(9);
  auto b = random_batch<float>(rng, c, 1);
  b.cur[0] = std::numeric_limits<float>::infinity();
  try {
    compute_gradients(m, b, Phase::content, Noise<float>::draw(rng, 1, c), LossWeights{}, 3, 10);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration 3") != std::string::npos);
  }
}

TEST_CASE("rollout") {
  const ModelConfig c = micro_config();
  const auto m = Model<float>::init(c, 10);
  SeededRng a(11), b(11);
  const TensorF r1 = rollout(m, 1, a, 6, 2), r2 = rollout(m, 1, b, 6, 2);
  CHECK(r1.shape() == Shape{6, 1, 16, 16});
  CHECK(r1 == r2);

  SeededRng z(12);
  const TensorF frozen = rollout(m, 2, z, 5, 0, true);
  const std::size_t per = 16 * 16;
  for (std::size_t t = 1; t < 5; ++t)
    CHECK(std::equal(frozen.raw(), frozen.raw() + per, frozen.raw() + t * per));
  CHECK_THROWS_AS((void)rollout(m, 3, z, 5), ValidationError);
}
