#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsvan/rng.hpp"
#include "tsvan/tensor.hpp"

namespace tsvan {

// Central finite-difference check of hand-written backward passes.
//
// The scalar objective is the projection L(x) = sum(r * f(x)) for a random
// r, so the analytic gradient is backward(x, r). Each checked coordinate is
// compared through |a - n| / max(|a|, |n|, floor).

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-4;
  std::size_t max_coords = 0;  // sampled coordinates per input; 0 checks all
};

struct GradCheckStats {
  double max_rel_err = 0.0;
  std::size_t coords = 0;
  std::string worst;  // "input i, element j: analytic a vs numeric n"

  void merge(const GradCheckStats& other);
};

using GradForward = std::function<TensorD(const std::vector<TensorD>&)>;
// Returns one gradient per input; entries for non-differentiable inputs are ignored.
using GradBackward = std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD&)>;

GradCheckStats check_gradients(const std::vector<TensorD>& inputs, const std::vector<bool>& differentiable,
                               const GradForward& forward, const GradBackward& backward, SeededRng& rng,
                               const GradCheckOptions& opts = {});

struct OpCheckReport {
  std::string op;
  std::size_t cases = 0;
  GradCheckStats stats;
  bool passed = false;
};

// Names accepted by gradcheck_op.
const std::vector<std::string>& gradcheck_ops();

// Runs every seed against the three built-in shape configurations of `op`.
OpCheckReport gradcheck_op(const std::string& op, const std::vector<std::uint64_t>& seeds,
                           const GradCheckOptions& opts = {});

}  // namespace tsvan
