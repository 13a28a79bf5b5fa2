#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tsvan/bench.hpp"
#include "tsvan/checkpoint.hpp"
#include "tsvan/classifier.hpp"
#include "tsvan/error.hpp"
#include "tsvan/losses.hpp"

using namespace tsvan;

namespace {

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

ClipSpec small_spec() {
  ClipSpec s;
  s.frames = 4;
  s.size = 16;
  return s;
}

ClassifierConfig small_classifier() {
  ClassifierConfig c;
  c.size = 16;
  c.classes = 3;
  c.width = 4;
  return c;
}

}  // namespace

TEST_CASE("classifier gradients match finite differences") {
  // Float network, so the step and tolerance are coarse; the layers
  // themselves are checked in double elsewhere.
  const Dataset d = build_dataset(default_classes(3), 2, 5, small_spec());
  Classifier clf = Classifier::init(small_classifier(), 3);
  ClassifierTrainConfig tc;
  tc.iterations = 1;
  tc.batch = 3;
  tc.lr = 1e-12;  // keeps the parameters put while exposing the gradients
  train_classifier(clf, d, tc);

  SeededRng rng(split_seed(tc.seed, 0));
  std::vector<const TensorF*> clips;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < tc.batch; ++b) {
    const VideoClip& c = d.clips.at(d.manifest.train[rng.below(d.manifest.train.size())]);
    clips.push_back(&c.frames);
    labels.push_back(c.action);
  }
  auto loss = [&](const Classifier& probe) {
    return static_cast<double>(aux_class_loss(probe.logits(clips), labels).value);
  };
  std::size_t checked = 0;
  for (const auto& p : clf.params.params()) {
    for (std::size_t k = 0; k < p.value.size(); k += std::max<std::size_t>(1, p.value.size() / 6)) {
      const double g = p.grad[k];
      if (std::abs(g) < 1e-3) continue;
      Classifier probe = clf;
      auto& v = probe.params.get(p.name).value;
      const float h = 1e-2f;
      v[k] = p.value[k] + h;
      const double up = loss(probe);
      v[k] = p.value[k] - h;
      const double down = loss(probe);
      const double numeric = (up - down) / (2.0 * h);
      CAPTURE(p.name);
      CHECK(numeric == doctest::Approx(g).epsilon(0.05));
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("classifier output is a distribution over classes") {
  const Dataset d = build_dataset(default_classes(3), 2, 5, small_spec());
  const Classifier clf = Classifier::init(small_classifier(), 1);
  const auto p = clf.predict(d.clips[0].frames);
  CHECK(p.size() == 3);
  CHECK_NOTHROW(validate_distribution(p));
  CHECK_THROWS_AS(clf.predict(TensorF({4, 1, 8, 8})), ValidationError);
  CHECK_THROWS_AS(clf.predict(TensorF({1, 1, 16, 16})), ValidationError);
}

TEST_CASE("checkpoint round-trip restores parameters and bytes") {
  ModelConfig mc;
  mc.ngf = 4;
  mc.content_dim = 8;
  mc.size = 16;
  const auto m = Model<float>::init(mc, 21);
  const std::string a = temp_path("tsvan_rt_a.tsvc"), b = temp_path("tsvan_rt_b.tsvc");
  save_model(m, a);
  const auto loaded = load_model(a);
  CHECK(loaded.config.to_json() == m.config.to_json());
  for (std::size_t i = 0; i < m.content.size(); ++i) CHECK(loaded.content.params()[i].value == m.content.params()[i].value);
  for (std::size_t i = 0; i < m.motion.size(); ++i) CHECK(loaded.motion.params()[i].value == m.motion.params()[i].value);
  save_model(loaded, b);
  CHECK(slurp(a) == slurp(b));

  const Classifier clf = Classifier::init(small_classifier(), 4);
  save_classifier(clf, a);
  save_classifier(load_classifier(a), b);
  CHECK(slurp(a) == slurp(b));
  CHECK_THROWS_AS(load_model(a), IoError);  // holds a classifier
}

TEST_CASE("checkpoint layout and corruption handling") {
  Checkpoint c;
  c.config = {{"kind", "test"}};
  c.tensors.emplace_back("x", TensorF({2}, std::vector<float>{1.0f, -2.0f}));
  const std::string p = temp_path("tsvan_layout.tsvc");
  write_checkpoint(p, c);
  const std::string bytes = slurp(p);
  CHECK(bytes.substr(0, 4) == "TSVC");
  CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);
  const auto back = read_checkpoint(p);
  REQUIRE(back.tensors.size() == 1);
  CHECK(back.tensors[0].second == c.tensors[0].second);
  CHECK(back.config == c.config);

  std::string bumped = bytes;
  bumped[4] = 9;
  std::ofstream(p, std::ios::binary) << bumped;
  CHECK_THROWS_WITH_AS(read_checkpoint(p), doctest::Contains("version 9"), IoError);
  std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() - 2);
  CHECK_THROWS_AS(read_checkpoint(p), IoError);
  CHECK_THROWS_AS(read_checkpoint(temp_path("tsvan_missing.tsvc")), IoError);
}

TEST_CASE("frame export maps [-1, 1] to bytes with round-half-up") {
  CHECK(to_byte(-1.0f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.0f) == 128);  // 127.5 rounds up
  CHECK(to_byte(-2.0f) == 0);
  CHECK(to_byte(3.0f) == 255);

  TensorF clip({2, 1, 2, 3}, std::vector<float>{-1, 0, 1, 0.5f, -0.5f, 0, 1, 1, 1, 1, 1, 1});
  const auto paths = export_clip_frames(clip, temp_path("tsvan_export"));
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].substr(paths[0].size() - 8) == "_000.pgm");
  const std::string img = slurp(paths[0]);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(img.size() == header.size() + 6);
  CHECK(img.substr(0, header.size()) == header);
  const unsigned char want[6] = {0, 128, 255, 191, 64, 128};
  for (int i = 0; i < 6; ++i) CHECK(static_cast<unsigned char>(img[header.size() + i]) == want[i]);

  TensorF rgb({1, 3, 1, 1}, std::vector<float>{-1, 0, 1});
  const std::string ppm = slurp(export_clip_frames(rgb, temp_path("tsvan_rgb"))[0]);
  CHECK(ppm == std::string("P6\n1 1\n255\n") + std::string{char(0), char(128), char(255)});
}

TEST_CASE("bench verifies before timing and writes the documented CSV") {
  std::vector<BenchCase> cases;
  for (auto mode : {KernelMode::dense, KernelMode::separable}) {
    BenchCase c;
    c.mode = mode;
    c.n = 5;
    c.scales = 2;
    c.resolutions = pyramid_resolutions(2, 16);
    c.channels = 2;
    c.repetitions = 3;
    cases.push_back(c);
  }
  const auto results = run_bench(cases, 1);
  REQUIRE(results.size() == 2);
  for (const auto& r : results) {
    CHECK(r.correct);
    CHECK(r.residual < kBenchTolerance);
    CHECK(r.min_ns > 0);
    CHECK(r.median_ns >= r.min_ns);
  }
  CHECK(results[0].params_per_pixel == 25);
  CHECK(results[1].params_per_pixel == 10);
  CHECK(results[1].kernel_values == 10 * (64 + 256));
  std::ostringstream os;
  write_bench_csv(os, results);
  std::istringstream lines(os.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "case,n,S,mode,params_per_pixel,median_ns,min_ns,residual");
  std::getline(lines, line);
  CHECK(line.rfind("dense_n5_S2,5,2,dense,25,", 0) == 0);
}

TEST_CASE("bench rejects invalid cases") {
  BenchCase c;
  c.resolutions = {16};
  c.repetitions = 2;
  CHECK_THROWS_AS(run_bench_case(c, 1), ValidationError);
  c.repetitions = 3;
  c.warmup = 0;
  CHECK_THROWS_AS(run_bench_case(c, 1), ValidationError);
  c.warmup = 1;
  c.n = 4;
  CHECK_THROWS_AS(run_bench_case(c, 1), ValidationError);
  CHECK_THROWS_AS(pyramid_resolutions(3, 6), ValidationError);
  CHECK(pyramid_resolutions(4, 64) == std::vector<std::size_t>{8, 16, 32, 64});
}
