#include "tsvan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "tsvan/error.hpp"

namespace tsvan {

void BenchCase::validate() const {
  if (repetitions < 3) throw ValidationError("bench: repetitions must be >= 3");
  if (warmup < 1) throw ValidationError("bench: warmup must be >= 1");
  if (n < 1 || n % 2 == 0) throw ValidationError("bench: kernel size must be odd, got " + std::to_string(n));
  if (scales < 1) throw ValidationError("bench: need at least one scale");
  if (resolutions.size() != scales)
    throw ValidationError("bench: " + std::to_string(resolutions.size()) + " resolutions for " +
                          std::to_string(scales) + " scales");
  if (channels < 1) throw ValidationError("bench: channels must be >= 1");
  if (parallel && mode == KernelMode::dense) throw ValidationError("bench: the parallel path is separable only");
}

std::string BenchCase::name() const {
  std::string s = std::string(mode == KernelMode::dense ? "dense" : "separable") + "_n" + std::to_string(n) + "_S" +
                  std::to_string(scales);
  return parallel ? s + "_parallel" : s;
}

std::vector<std::size_t> pyramid_resolutions(std::size_t scales, std::size_t finest) {
  if (scales < 1 || finest % (std::size_t{1} << (scales - 1)) != 0)
    throw ValidationError("bench: finest resolution " + std::to_string(finest) + " does not support " +
                          std::to_string(scales) + " scales");
  std::vector<std::size_t> r;
  for (std::size_t s = 0; s < scales; ++s) r.push_back(finest >> (scales - 1 - s));
  return r;
}

nlohmann::json BenchResult::to_json() const {
  nlohmann::json j = {{"case", spec.name()},
                      {"n", spec.n},
                      {"S", spec.scales},
                      {"mode", spec.mode == KernelMode::dense ? "dense" : "separable"},
                      {"resolutions", spec.resolutions},
                      {"channels", spec.channels},
                      {"repetitions", spec.repetitions},
                      {"warmup", spec.warmup},
                      {"parallel", spec.parallel},
                      {"params_per_pixel", params_per_pixel},
                      {"kernel_values", kernel_values},
                      {"working_set_bytes", working_set_bytes},
                      {"residual", residual},
                      {"correct", correct}};
  if (correct) {
    j["median_ns"] = median_ns;
    j["min_ns"] = min_ns;
  }
  return j;
}

namespace {

struct Inputs {
  ContentPyramid<float> content;
  std::vector<SeparableKernelField<float>> separable;
  std::vector<DenseKernelField<float>> dense;
  std::vector<TensorF> masks;
};

Inputs make_inputs(const BenchCase& c, SeededRng& rng) {
  Inputs in;
  for (std::size_t l : c.resolutions) {
    in.content.push_back(randn<float>(rng, {1, c.channels, l, l}));
    SeparableKernelField<float> f{rand_uniform<float>(rng, {1, c.n, l, l}, -1, 1),
                                  rand_uniform<float>(rng, {1, c.n, l, l}, -1, 1)};
    if (c.mode == KernelMode::dense)
      in.dense.push_back({rand_uniform<float>(rng, {1, c.n * c.n, l, l}, -1, 1)});
    in.separable.push_back(std::move(f));
    in.masks.push_back(rand_uniform<float>(rng, {1, 1, l, l}, 0, 1));
  }
  return in;
}

// Direct evaluation in double of one scale with per-pixel kernels given by `kernel(i, j, a, b)`.
template <typename KernelAt>
TensorD oracle_scale(const TensorF& content, const TensorF& mask, std::size_t n, KernelAt kernel) {
  const std::size_t d = content.dim(1), l = content.dim(2);
  const long r = static_cast<long>(n / 2), L = static_cast<long>(l);
  TensorD out({1, d, l, l});
  for (std::size_t ch = 0; ch < d; ++ch)
    for (long a = 0; a < L; ++a)
      for (long b = 0; b < L; ++b) {
        double acc = 0;
        for (long i = 0; i < static_cast<long>(n); ++i)
          for (long j = 0; j < static_cast<long>(n); ++j) {
            const long y = std::clamp(a + i - r, 0L, L - 1), x = std::clamp(b + j - r, 0L, L - 1);
            acc += kernel(i, j, a, b) * static_cast<double>(content.at(0, ch, y, x));
          }
        const double m = mask.at(0, 0, a, b);
        out.at(0, ch, a, b) = m * acc + (1 - m) * static_cast<double>(content.at(0, ch, a, b));
      }
  return out;
}

double relative_residual(const TensorF& got, const TensorD& want) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(got[i]) - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

double relative_residual(const TensorF& got, const TensorF& want) {
  std::vector<double> w(want.vec().begin(), want.vec().end());
  return relative_residual(got, TensorD(want.shape(), std::move(w)));
}

ContentPyramid<float> fuse_once(const BenchCase& c, const Inputs& in, const FusionConfig& fc) {
  if (c.mode == KernelMode::separable) return fuse_pyramid(in.content, in.separable, in.masks, fc, c.parallel);
  ContentPyramid<float> out;
  for (std::size_t s = 0; s < c.scales; ++s)
    out.push_back(mask_blend(in.content[s], adaptive_conv(in.content[s], in.dense[s]), in.masks[s]));
  return out;
}

}  // namespace

BenchResult run_bench_case(const BenchCase& c, std::uint64_t seed) {
  c.validate();
  FusionConfig fc{c.scales, c.n, c.resolutions, std::vector<std::size_t>(c.scales, c.channels)};
  fc.validate();
  BenchResult r;
  r.spec = c;
  const KernelParamCount count = kernel_param_count(c.n, c.mode, c.resolutions);
  r.params_per_pixel = count.per_pixel;
  r.kernel_values = count.total;
  for (std::size_t l : c.resolutions)
    r.working_set_bytes += (2 * c.channels * l * l + count.per_pixel * l * l + l * l) * sizeof(float);

  SeededRng rng(seed);
  const Inputs in = make_inputs(c, rng);
  const ContentPyramid<float> got = fuse_once(c, in, fc);
  const std::size_t n = c.n;
  for (std::size_t s = 0; s < c.scales; ++s) {
    TensorD want;
    if (c.mode == KernelMode::dense) {
      const TensorF& w = in.dense[s].weights;
      want = oracle_scale(in.content[s], in.masks[s], n, [&](long i, long j, long a, long b) {
        return static_cast<double>(w.at(0, static_cast<std::size_t>(i) * n + j, a, b));
      });
    } else {
      const TensorF& v = in.separable[s].vertical;
      const TensorF& h = in.separable[s].horizontal;
      want = oracle_scale(in.content[s], in.masks[s], n, [&](long i, long j, long a, long b) {
        return static_cast<double>(v.at(0, i, a, b)) * static_cast<double>(h.at(0, j, a, b));
      });
      // The separable path must also agree with the dense path on the expanded field.
      const TensorF dense = mask_blend(in.content[s], adaptive_conv(in.content[s], expand_field(in.separable[s])),
                                       in.masks[s]);
      r.residual = std::max(r.residual, relative_residual(got[s], dense));
    }
    r.residual = std::max(r.residual, relative_residual(got[s], want));
  }
  r.correct = r.residual < kBenchTolerance;
  if (!r.correct) return r;

  for (std::size_t i = 0; i < c.warmup; ++i) fuse_once(c, in, fc);
  std::vector<double> times;
  for (std::size_t i = 0; i < c.repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = fuse_once(c, in, fc);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.size() != c.scales) throw ValidationError("bench: fusion returned the wrong number of scales");
    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  r.min_ns = times.front();
  const std::size_t m = times.size() / 2;
  r.median_ns = times.size() % 2 ? times[m] : 0.5 * (times[m - 1] + times[m]);
  return r;
}

std::vector<BenchResult> run_bench(const std::vector<BenchCase>& cases, std::uint64_t seed) {
  std::vector<BenchResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) out.push_back(run_bench_case(cases[i], split_seed(seed, i)));
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& results) {
  os << kBenchCsvHeader << '\n';
  for (const auto& r : results) {
    char residual[32];
    std::snprintf(residual, sizeof residual, "%.3e", r.residual);
    os << r.spec.name() << ',' << r.spec.n << ',' << r.spec.scales << ','
       << (r.spec.mode == KernelMode::dense ? "dense" : "separable") << ',' << r.params_per_pixel << ',';
    if (r.correct)
      os << static_cast<long long>(std::llround(r.median_ns)) << ',' << static_cast<long long>(std::llround(r.min_ns));
    else
      os << ',';
    os << ',' << residual << '\n';
  }
}

}  // namespace tsvan
