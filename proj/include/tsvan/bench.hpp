#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsvan/fusion.hpp"

namespace tsvan {

struct BenchCase {
  KernelMode mode = KernelMode::separable;
  std::size_t n = 5;
  std::size_t scales = 1;
  std::vector<std::size_t> resolutions;  // one per scale, finest last
  std::size_t channels = 8;              // content width at every scale
  std::size_t repetitions = 5;
  std::size_t warmup = 1;
  bool parallel = false;  // run the scales on separate threads (separable only)

  void validate() const;
  std::string name() const;
};

// Resolutions finest-last ending at `finest`, halving towards the coarsest.
std::vector<std::size_t> pyramid_resolutions(std::size_t scales, std::size_t finest);

struct BenchResult {
  BenchCase spec;
  std::size_t params_per_pixel = 0;
  std::size_t kernel_values = 0;       // over every scale
  std::size_t working_set_bytes = 0;   // content, kernels, masks and outputs
  double residual = 0;                 // max relative deviation from the oracle
  bool correct = false;
  // Per fused frame; only filled when `correct`.
  double median_ns = 0;
  double min_ns = 0;

  nlohmann::json to_json() const;
};

inline constexpr double kBenchTolerance = 1e-5;

// Checks the case against a direct double-precision oracle (and, for the
// separable path, against its dense expansion), then times it. A case that
// fails the check is returned without timings.
BenchResult run_bench_case(const BenchCase& c, std::uint64_t seed);
std::vector<BenchResult> run_bench(const std::vector<BenchCase>& cases, std::uint64_t seed);

inline constexpr const char* kBenchCsvHeader = "case,n,S,mode,params_per_pixel,median_ns,min_ns,residual";
// Timing cells are empty for cases that failed the check.
void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& results);

}  // namespace tsvan
