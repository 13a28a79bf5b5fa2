// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance            run every criterion
//   acceptance 2,4,8      run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "tsvan/bench.hpp"
#include "tsvan/checkpoint.hpp"
#include "tsvan/classifier.hpp"
#include "tsvan/fusion.hpp"
#include "tsvan/gradcheck.hpp"
#include "tsvan/losses.hpp"
#include "tsvan/metrics.hpp"
#include "tsvan/train.hpp"

using namespace tsvan;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return {};
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Shared between the training criteria.
const Dataset& toy_dataset() {
  static const Dataset d = build_dataset(default_classes(4), 50, 7, ClipSpec{});
  return d;
}

std::optional<Model<float>> trained_model;
std::optional<Classifier> trained_classifier;

// 1. Every backward pass against central differences in double.
Outcome gradient_suite() {
  const std::set<std::string> required = {"conv2d",        "conv_transpose2d", "linear",     "activations",
                                          "maxpool",       "convlstm_step",    "adaptive_conv", "mask_blend",
                                          "mask_activation", "losses"};
  const auto& ops = gradcheck_ops();
  for (const auto& r : required)
    if (std::find(ops.begin(), ops.end(), r) == ops.end()) return {false, "no gradient check for " + r};
  GradCheckOptions opts;
  opts.step = 1e-5;
  opts.tolerance = 1e-4;
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_op, failed;
  std::size_t cases = 0;
  for (const auto& op : ops) {
    const OpCheckReport r = gradcheck_op(op, {1, 2, 3, 4, 5}, opts);
    cases += r.cases;
    if (r.stats.max_rel_err > worst) {
      worst = r.stats.max_rel_err;
      worst_op = op;
    }
    if (!r.passed || r.cases < 15) failed += " " + op;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = failed.empty() && elapsed < 120.0;
  return {pass, fmt("%zu ops, %zu cases, max rel err %.2e (%s), %.1f s%s", ops.size(), cases, worst, worst_op.c_str(),
                    elapsed, failed.empty() ? "" : (" failed:" + failed).c_str())};
}

// 2. Mask preservation, identity kernels and separable-vs-dense agreement.
Outcome fusion_exactness() {
  SeededRng rng(2024);
  const std::size_t n = 5;
  FusionConfig cfg{2, n, {8, 16}, {3, 3}};
  ContentPyramid<float> content = {randn<float>(rng, {2, 3, 8, 8}), randn<float>(rng, {2, 3, 16, 16})};

  bool masks_ok = true, identity_ok = true;
  std::vector<SeparableKernelField<float>> random_fields, identity_fields;
  std::vector<TensorF> zero_masks, one_masks;
  for (const auto& c : content) {
    const std::size_t l = c.dim(2);
    random_fields.push_back({randn<float>(rng, {2, n, l, l}), randn<float>(rng, {2, n, l, l})});
    TensorF delta({2, n, l, l});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t y = 0; y < l; ++y)
        for (std::size_t x = 0; x < l; ++x) delta.at(b, n / 2, y, x) = 1.0f;
    identity_fields.push_back({delta, delta});
    zero_masks.emplace_back(Shape{2, 1, l, l}, 0.0f);
    one_masks.emplace_back(Shape{2, 1, l, l}, 1.0f);
  }
  const auto preserved = fuse_pyramid(content, random_fields, zero_masks, cfg);
  const auto identity = fuse_pyramid(content, identity_fields, one_masks, cfg);
  for (std::size_t s = 0; s < content.size(); ++s) {
    masks_ok = masks_ok && preserved[s] == content[s];
    identity_ok = identity_ok && identity[s] == content[s] &&
                  adaptive_conv(content[s], identity_fields[s]) == content[s] &&
                  adaptive_conv(content[s], expand_field(identity_fields[s])) == content[s];
  }

  double worst = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    SeededRng case_rng(split_seed(77, k));
    const std::size_t kn = 1 + 2 * case_rng.below(4), l = 4 + case_rng.below(13), d = 1 + case_rng.below(4),
                      batch = 1 + case_rng.below(2);
    const TensorF h = randn<float>(case_rng, {batch, d, l, l});
    const SeparableKernelField<float> f{randn<float>(case_rng, {batch, kn, l, l}),
                                        randn<float>(case_rng, {batch, kn, l, l})};
    const TensorF sep = adaptive_conv(h, f);
    const TensorF dense = adaptive_conv(h, expand_field(f));
    double diff = 0, scale = 0;
    for (std::size_t i = 0; i < sep.size(); ++i) {
      diff = std::max(diff, static_cast<double>(std::abs(sep[i] - dense[i])));
      scale = std::max(scale, static_cast<double>(std::abs(dense[i])));
    }
    worst = std::max(worst, scale > 0 ? diff / scale : diff);
  }
  const bool pass = masks_ok && identity_ok && worst < 1e-6;
  return {pass, fmt("mask=0 bit-exact: %s, identity kernels bit-exact: %s, separable vs dense over 100 cases: %.2e",
                    masks_ok ? "yes" : "no", identity_ok ? "yes" : "no", worst)};
}

// 3. Balanced one-hot distributions reproduce the printed bound rows.
Outcome metric_bounds() {
  struct Row {
    std::size_t k;
    const char *h, *intra, *is;
  };
  const Row rows[] = {{90, "4.50", "0.00", "90.00"}, {6, "1.79", "0.00", "6.00"}, {20, "3.00", "0.00", "20.00"}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    std::vector<ClassDistribution> dists;
    for (std::size_t v = 0; v < row.k; ++v) {
      ClassDistribution p(row.k, 0.0);
      p[v] = 1.0;
      dists.push_back(p);
    }
    const MetricsReport m = compute_metrics(dists);
    const std::string h = fmt("%.2f", m.inter_entropy), intra = fmt("%.2f", m.mean_intra_entropy),
                      is = fmt("%.2f", m.inception_score);
    pass = pass && h == row.h && intra == row.intra && is == row.is;
    detail += fmt("%sK=%zu (%s, %s, %s)", detail.empty() ? "" : "; ", row.k, h.c_str(), intra.c_str(), is.c_str());
  }
  return {pass, detail};
}

// 4. Kernel parameter counts reported by the bench harness.
Outcome parameter_counts() {
  BenchCase dense;
  dense.mode = KernelMode::dense;
  dense.n = 17;
  dense.scales = 1;
  dense.resolutions = {64};
  dense.repetitions = 3;
  BenchCase sep;
  sep.mode = KernelMode::separable;
  sep.n = 5;
  sep.scales = 4;
  sep.resolutions = pyramid_resolutions(4, 64);
  sep.repetitions = 3;
  const auto r = run_bench({dense, sep}, 4);
  const std::size_t dense_total = r[0].kernel_values, sep_total = r[1].kernel_values;
  const bool pass = r[0].correct && r[1].correct && r[0].params_per_pixel == 289 && r[1].params_per_pixel == 10 &&
                    dense_total == 1183744 && sep_total == 10 * (64 + 256 + 1024 + 4096) &&
                    sep_total * 20 < dense_total;
  return {pass, fmt("per pixel %zu (dense n=17) vs %zu (separable n=5); totals %zu vs %zu = %.2f%%; residuals %.1e, %.1e",
                    r[0].params_per_pixel, r[1].params_per_pixel, sep_total, dense_total,
                    100.0 * static_cast<double>(sep_total) / static_cast<double>(dense_total), r[0].residual,
                    r[1].residual)};
}

// 5. Next-frame prediction against the copy-last baseline.
Outcome desk_learning() {
  const Dataset& d = toy_dataset();
  ModelConfig mc;
  mc.classes = 4;
  Model<float> model = Model<float>::init(mc, 7);
  TrainConfig tc = desk_train_config(d.spec);
  tc.iterations = 2000;
  tc.seed = 7;
  const auto t0 = Clock::now();
  train_model(model, d, tc);
  const double elapsed = seconds_since(t0);
  const PredictionReport r = evaluate_prediction(model, d, d.manifest.test);
  trained_model = std::move(model);
  const bool pass = r.ratio <= 0.6 && elapsed < 1800.0;
  return {pass, fmt("test L2 %.4f vs copy-last %.4f, ratio %.3f (need <= 0.6), %zu pairs, %.0f s", r.model_l2,
                    r.baseline_l2, r.ratio, r.pairs, elapsed)};
}

// 6. Held-out classifier accuracy and real-clip inception score.
Outcome classifier_pipeline() {
  const Dataset& d = toy_dataset();
  ClassifierConfig cc;
  cc.classes = 4;
  Classifier clf = Classifier::init(cc, 7);
  ClassifierTrainConfig tc;
  tc.seed = 7;
  const auto t0 = Clock::now();
  train_classifier(clf, d, tc);
  const double acc = classifier_accuracy(clf, d, d.manifest.test);
  std::vector<TensorF> clips;
  for (std::size_t id : d.manifest.test) clips.push_back(d.clips[id].frames);
  const MetricsReport m = evaluate_with_classifier(clips, clf.as_clip_classifier(d.spec.frames));
  trained_classifier = std::move(clf);
  const bool pass = acc >= 0.95 && m.inception_score >= 0.9 * 4;
  return {pass, fmt("accuracy %.3f (need >= 0.95), IS %.3f on %zu real clips (need >= 3.6), %.0f s", acc,
                    m.inception_score, m.videos, seconds_since(t0))};
}

// 7. Byte-identical outputs across two invocations of the tool.
Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "tsvan_acceptance";
  std::filesystem::create_directories(dir);
  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "tsvan");
    std::ostringstream out, err;
    return run_cli(args, out, err);
  };
  auto p = [&](const std::string& name) { return (dir / name).string(); };
  bool ok = true;
  for (const char* tag : {"a", "b"}) {
    ok = ok && run({"gen-data", "--classes", "4", "--clips-per-class", "50", "--frames", "10", "--size", "32", "--seed",
                    "7", "--out", p(std::string("data_") + tag + ".smv")}) == 0;
    ok = ok && run({"train", "--data", p("data_a.smv"), "--iterations", "10", "--seed", "7", "--out",
                    p(std::string("model_") + tag + ".tsvc")}) == 0;
  }
  if (!ok) return {false, "a tool invocation failed"};
  const bool data_same = !slurp(p("data_a.smv")).empty() && slurp(p("data_a.smv")) == slurp(p("data_b.smv")) &&
                         slurp(p("data_a.smv.json")) == slurp(p("data_b.smv.json"));
  const bool train_same = !slurp(p("model_a.tsvc")).empty() && slurp(p("model_a.tsvc")) == slurp(p("model_b.tsvc")) &&
                          slurp(p("model_a.tsvc.json")) == slurp(p("model_b.tsvc.json"));
  save_model(load_model(p("model_a.tsvc")), p("model_c.tsvc"));
  const bool roundtrip = slurp(p("model_a.tsvc")) == slurp(p("model_c.tsvc"));
  std::filesystem::remove_all(dir);
  return {data_same && train_same && roundtrip,
          fmt("gen-data identical: %s, 10-iteration checkpoints identical: %s, load/save round-trip identical: %s",
              data_same ? "yes" : "no", train_same ? "yes" : "no", roundtrip ? "yes" : "no")};
}

// 8. Loss closed forms in double.
Outcome loss_closed_forms() {
  const double kl = kl_to_standard_normal(GaussianParams<double>{TensorD({1, 1}, 1.0), TensorD({1, 1}, 0.0)}).value;
  const TensorD half({4, 1}, 0.5);
  const double disc = gan_discriminator_loss(half, half, half).value;
  bool ce_ok = true;
  double ce_err = 0;
  for (std::size_t k : {2, 4, 10, 90}) {
    const double ce = aux_class_loss(TensorD({3, k}, 0.25), {0, k - 1, k / 2}).value;
    ce_err = std::max(ce_err, std::abs(ce - std::log(static_cast<double>(k))));
    ce_ok = ce_ok && std::abs(ce - std::log(static_cast<double>(k))) <= 1e-9;
  }
  const double kl_err = std::abs(kl - 0.5), disc_err = std::abs(disc - 3.0 * std::log(2.0));
  const bool pass = kl_err <= 1e-9 && disc_err <= 1e-9 && ce_ok;
  return {pass, fmt("KL %.12f (err %.1e), discriminator %.12f vs 3 ln 2 (err %.1e), CE vs ln K max err %.1e", kl,
                    kl_err, disc, disc_err, ce_err)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},       {"fusion exactness", fusion_exactness},
      {"metric bounds", metric_bounds},         {"parameter counts", parameter_counts},
      {"desk-scale learning", desk_learning},   {"classifier and metrics", classifier_pipeline},
      {"determinism", determinism},             {"loss closed forms", loss_closed_forms},
  };
  std::set<std::size_t> only;
  if (argc > 1) {
    std::stringstream ss(argv[1]);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t k = 0;
      try {
        k = std::stoul(item);
      } catch (const std::exception&) {
      }
      if (k < 1 || k > criteria.size()) {
        std::cerr << "usage: acceptance [criterion numbers, comma separated, 1.." << criteria.size() << "]\n";
        return 1;
      }
      only.insert(k);
    }
  }
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }

  // Generated clips from the trained model scored by the trained classifier.
  if (trained_model && trained_classifier) {
    std::vector<TensorF> clips;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 50; ++i) {
        SeededRng rng(split_seed(99, k * 50 + i));
        clips.push_back(rollout(*trained_model, k, rng, 10));
      }
    const MetricsReport m = evaluate_with_classifier(clips, trained_classifier->as_clip_classifier(10));
    std::cout << "note: generated clips (200 rollouts) score IS " << fmt("%.3f", m.inception_score)
              << fmt(" (H(y) %.3f, H(y|v) %.3f)", m.inter_entropy, m.mean_intra_entropy) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
