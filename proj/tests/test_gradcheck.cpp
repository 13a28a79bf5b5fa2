#include "doctest.h"

#include "tsvan/error.hpp"
#include "tsvan/gradcheck.hpp"

using namespace tsvan;

TEST_CASE("every registered op matches finite differences") {
  for (const auto& op : gradcheck_ops()) {
    CAPTURE(op);
    const auto report = gradcheck_op(op, {1, 2, 3, 4, 5});
    CAPTURE(report.stats.worst);
    CHECK(report.cases >= 15);
    CHECK(report.stats.coords > 0);
    CHECK(report.passed);
    CHECK(report.stats.max_rel_err < 1e-4);
  }
}

TEST_CASE("check_gradients detects a wrong backward") {
  SeededRng rng(3);
  const TensorD x = randn<double>(rng, {4});
  auto fwd = [](const std::vector<TensorD>& in) { return mul(in[0], in[0]); };
  auto bad = [](const std::vector<TensorD>& in, const TensorD& dy) {
    return std::vector<TensorD>{mul(in[0], dy)};  // missing factor 2
  };
  const auto stats = check_gradients({x}, {true}, fwd, bad, rng);
  CHECK(stats.max_rel_err > 0.4);
  CHECK(stats.coords == 4);
}

TEST_CASE("max_coords samples a subset") {
  SeededRng rng(4);
  const TensorD x = randn<double>(rng, {50});
  auto fwd = [](const std::vector<TensorD>& in) { return scale(in[0], 3.0); };
  auto bwd = [](const std::vector<TensorD>&, const TensorD& dy) { return std::vector<TensorD>{scale(dy, 3.0)}; };
  GradCheckOptions opts;
  opts.max_coords = 10;
  const auto stats = check_gradients({x}, {true}, fwd, bwd, rng, opts);
  CHECK(stats.coords == 10);
  CHECK(stats.max_rel_err < 1e-8);
}

TEST_CASE("unknown op is a validation error") {
  CHECK_THROWS_AS(gradcheck_op("nope", {1}), ValidationError);
}
