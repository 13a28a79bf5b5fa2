#include "doctest.h"

#include <cmath>

#include "tsvan/error.hpp"
#include "tsvan/losses.hpp"

using namespace tsvan;

TEST_CASE("l2 loss") {
  CHECK(l2_loss(TensorD({2}, {1, 2}), TensorD({2})).value == 2.5);
  SeededRng rng(1);
  const TensorD x = randn<double>(rng, {3, 4});
  CHECK(l2_loss(x, x).value == 0.0);
  CHECK_THROWS_AS((void)l2_loss(x, TensorD({4, 3})), ValidationError);
}

TEST_CASE("kl closed forms") {
  auto kl = [](double m, double lv) {
    return kl_to_standard_normal(GaussianParams<double>{TensorD({1, 1}, m), TensorD({1, 1}, lv)}).value;
  };
  CHECK(kl(0, 0) == 0.0);
  CHECK(std::abs(kl(1, 0) - 0.5) < 1e-9);
  CHECK(std::abs(kl(0, std::log(2.0)) - 0.5 * (2.0 - 1.0 - std::log(2.0))) < 1e-12);
  SeededRng rng(2);
  for (int i = 0; i < 100; ++i) CHECK(kl(rng.normal(), rng.normal()) >= 0.0);
  // Batch mean: two identical rows give the single-row value.
  const auto two = kl_to_standard_normal(GaussianParams<double>{TensorD({2, 1}, 1.0), TensorD({2, 1}, 0.0)});
  CHECK(std::abs(two.value - 0.5) < 1e-12);
}

TEST_CASE("gan losses") {
  const double e = kGanScoreEpsilon;
  const TensorD half({4, 1}, 0.5);
  CHECK(std::abs(gan_discriminator_loss(half, half, half).value - 3 * std::log(2.0)) < 1e-9);
  CHECK(std::abs(gan_generator_loss(half, half).value - 2 * std::log(2.0)) < 1e-9);
  const auto perfect = gan_discriminator_loss(TensorD({2, 1}, 1 - e), TensorD({2, 1}, e), TensorD({2, 1}, e));
  CHECK(perfect.value < 1e-6);
  const auto clamped = gan_discriminator_loss(TensorD({1, 1}, 1.0), TensorD({1, 1}, 0.0), TensorD({1, 1}, 0.0));
  CHECK(std::isfinite(clamped.value));
  CHECK(clamped.dreal[0] == 0.0);
}

TEST_CASE("aux class loss") {
  CHECK(std::abs(aux_class_loss(TensorD({1, 4}), {2}).value - std::log(4.0)) < 1e-9);
  TensorD margin({1, 3});
  margin[1] = 20.0;
  // -ln softmax at margin 20 is ln(1 + 2 e^-20).
  CHECK(std::abs(aux_class_loss(margin, {1}).value) < 1e-8);
  CHECK_THROWS_AS((void)aux_class_loss(TensorD({1, 3}), {3}), ValidationError);
  CHECK_THROWS_AS((void)aux_class_loss(TensorD({2, 3}), {0}), ValidationError);
}

TEST_CASE("content consistency") {
  SeededRng rng(3);
  const ContentPyramid<double> a{randn<double>(rng, {1, 2, 4, 4}), randn<double>(rng, {1, 1, 8, 8})};
  CHECK(content_consistency_loss(a, a).value == 0.0);
  ContentPyramid<double> b = a;
  b[1] = add(b[1], TensorD::scalar(0.3));
  CHECK(std::abs(content_consistency_loss(a, b).value - 0.09) < 1e-12);
  const ContentPyramid<double> c{randn<double>(rng, {1, 2, 4, 4}), randn<double>(rng, {1, 1, 8, 8})};
  CHECK(content_consistency_loss(a, c).value == l2_loss(a[0], c[0]).value + l2_loss(a[1], c[1]).value);
  CHECK_THROWS_AS((void)content_consistency_loss(a, ContentPyramid<double>{a[0]}), ValidationError);
}

TEST_CASE("weighted totals and schedule") {
  const LossWeights w = LossWeights::weizmann();
  CHECK(std::abs(total_content_loss(w, 0.01, 0.1) - 100.7) < 1e-9);
  CHECK(total_content_loss(w, 0, 0) == 0.0);
  CHECK(total_motion_loss(w, 0, 0, 0, 5, 10) == 0.0);
  CHECK(w.lambda5(0, 100) == 2.0);
  CHECK(w.lambda5(100, 100) == 20.0);
  CHECK(w.lambda5(50, 100) == 11.0);
  LossWeights bad;
  bad.l3 = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  LossWeights inverted;
  inverted.l5_start = 30;
  CHECK_THROWS_AS(inverted.validate(), ValidationError);

  LossWeights doubled = w;
  doubled.l3 *= 2;
  CHECK(total_motion_loss(doubled, 1.0, 0.5, 0.2, 3, 10) - total_motion_loss(w, 1.0, 0.5, 0.2, 3, 10) ==
        doctest::Approx(w.l3));
}
