#include "doctest.h"

#include <cmath>

#include "tsvan/error.hpp"
#include "tsvan/rng.hpp"
#include "tsvan/tensor.hpp"

using namespace tsvan;

TEST_CASE("elementwise arithmetic") {
  const TensorD a({2}, {1, 2}), b({2}, {3, 4});
  CHECK(add(a, b).vec() == std::vector<double>{4, 6});
  CHECK(sub(a, a).vec() == std::vector<double>{0, 0});
  CHECK(mul(a, b).vec() == std::vector<double>{3, 8});
  CHECK(scale(a, 2.0).vec() == std::vector<double>{2, 4});
  CHECK(add(a, TensorD::scalar(1.0)).vec() == std::vector<double>{2, 3});

  SeededRng rng(1);
  const TensorF x = randn<float>(rng, {3, 4});
  CHECK(mul(x, TensorF({3, 4}, 0.0f)) == TensorF({3, 4}, 0.0f));
  CHECK(sub(x, x) == TensorF({3, 4}, 0.0f));
}

TEST_CASE("inputs are not modified") {
  SeededRng rng(2);
  const TensorD a = randn<double>(rng, {2, 3}), b = randn<double>(rng, {2, 3});
  const TensorD a0 = a, b0 = b;
  (void)add(a, b);
  (void)mul(a, b);
  (void)reduce_sum(a, {1});
  CHECK(a == a0);
  CHECK(b == b0);
}

TEST_CASE("shape mismatch names both shapes") {
  const TensorD a({2, 3}), b({3, 2});
  try {
    (void)add(a, b);
    FAIL("expected an exception");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(shape_str(a.shape())) != std::string::npos);
    CHECK(msg.find(shape_str(b.shape())) != std::string::npos);
  }
}

TEST_CASE("reductions") {
  CHECK(reduce_mean(TensorD({4}, {1, 2, 3, 4})) == 2.5);
  const TensorD s = reduce_sum(TensorD({2, 3}, 1.0), {0, 1});
  CHECK(s.size() == 1);
  CHECK(s[0] == 6.0);
  CHECK(reduce_sum(TensorD({2, 2}, {1, 2, 3, 4}), {0}).vec() == std::vector<double>{4, 6});
  CHECK(reduce_sum(TensorD({2, 2}, {1, 2, 3, 4}), {1}).vec() == std::vector<double>{3, 7});
  CHECK_THROWS_AS((void)reduce_sum(TensorD({2, 2}), {2}), ValidationError);

  SeededRng rng(5);
  const TensorF x = randn<float>(rng, {3, 5, 7});
  CHECK(reduce_sum(x, {0, 2}) == reduce_sum(x, {0, 2}));
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(TensorF(Shape{}), ValidationError);
  CHECK_THROWS_AS(TensorF(Shape{2, 0}), ValidationError);
  CHECK_THROWS_AS(TensorF(Shape{1, 1, 1, 1, 1}), ValidationError);
  CHECK_THROWS_AS(TensorF(Shape{2, 2}, std::vector<float>(3)), ValidationError);
  CHECK_THROWS_AS((void)TensorF({2, 3}).reshaped({4}), ValidationError);
  CHECK(TensorF({2, 3}).reshaped({6}).shape() == Shape{6});
}

TEST_CASE("rng determinism and normal moments") {
  SeededRng a(42), b(42);
  CHECK(randn<float>(a, {100}) == randn<float>(b, {100}));

  SeededRng rng(7);
  const std::size_t n = 1'000'000;
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) <= 0.01);
  CHECK(var >= 0.99);
  CHECK(var <= 1.01);
}

TEST_CASE("rng stream layout") {
  SeededRng rng(9);
  CHECK(rng.next_u64() == mix64(9 + 0x9E3779B97F4A7C15ULL));
  CHECK(rng.next_u64() == mix64(9 + 2 * 0x9E3779B97F4A7C15ULL));
  CHECK(split_seed(1, 2) == mix64(1 ^ mix64(2 + 0x9E3779B97F4A7C15ULL)));
  CHECK(split_seed(1, 2) != split_seed(1, 3));

  SeededRng u(11);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.below(5) < 5);
  }
}

TEST_CASE("channel concat and slice") {
  SeededRng rng(3);
  const TensorD a = randn<double>(rng, {2, 3, 4, 4}), b = randn<double>(rng, {2, 1, 4, 4});
  const TensorD c = concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 4, 4, 4});
  CHECK(slice_channels(c, 0, 3) == a);
  CHECK(slice_channels(c, 3, 1) == b);
  CHECK_THROWS_AS((void)slice_channels(c, 3, 2), ValidationError);
  CHECK_THROWS_AS((void)concat_channels(a, TensorD({2, 1, 5, 5})), ValidationError);
}
