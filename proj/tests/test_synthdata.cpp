#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "tsvan/error.hpp"
#include "tsvan/synthdata.hpp"

using namespace tsvan;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tsvan_test_" + name)).string();
}

// Motion-direction features: mean |dx| and the normalized correlation of dx with
// the horizontal and vertical image gradients.
std::vector<double> motion_features(const VideoClip& clip) {
  const std::size_t T = clip.num_frames(), H = clip.frames.dim(2);
  double mag = 0, gx_corr = 0, gy_corr = 0;
  for (std::size_t t = 1; t < T; ++t) {
    const TensorF d = difference_map(clip, t), prev = clip.frame(t - 1);
    double sx = 0, sy = 0, nd = 0, nx = 0, ny = 0;
    for (std::size_t y = 1; y + 1 < H; ++y)
      for (std::size_t x = 1; x + 1 < H; ++x) {
        const double dv = d[y * H + x];
        const double gx = prev[y * H + x + 1] - prev[y * H + x - 1];
        const double gy = prev[(y + 1) * H + x] - prev[(y - 1) * H + x];
        sx += dv * gx, sy += dv * gy;
        nd += dv * dv, nx += gx * gx, ny += gy * gy;
        mag += std::abs(dv);
      }
    if (nd > 0) {
      gx_corr += std::abs(sx) / std::sqrt(nd * nx);
      gy_corr += std::abs(sy) / std::sqrt(nd * ny);
    }
  }
  const double n = static_cast<double>(T - 1);
  return {mag / n / static_cast<double>(H * H) * 20.0, gx_corr / n, gy_corr / n};
}

}  // namespace

TEST_CASE("clips are deterministic and in range") {
  const ClipSpec spec;
  for (auto f : all_families()) {
    CAPTURE(family_name(f));
    const VideoClip a = gen_clip(f, 0, 123, spec), b = gen_clip(f, 0, 123, spec);
    CHECK(a.frames == b.frames);
    CHECK(a.frames.shape() == Shape{10, 1, 32, 32});
    for (float v : a.frames.vec()) CHECK((v >= -1.0f && v <= 1.0f));
    CHECK(gen_clip(f, 0, 124, spec).frames != a.frames);
  }
}

TEST_CASE("static clips do not move") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const VideoClip c = gen_clip(MotionFamily::still, 2, seed, ClipSpec{});
    for (std::size_t t = 1; t < c.num_frames(); ++t) {
      CHECK(c.frame(t) == c.frame(0));
      CHECK(difference_map(c, t) == TensorF({1, 32, 32}, 0.0f));
    }
  }
}

TEST_CASE("difference maps reconstruct exactly") {
  for (auto f : all_families()) {
    const VideoClip c = gen_clip(f, 0, 77, ClipSpec{6, 32, 3, 1.0});
    for (std::size_t t = 1; t < c.num_frames(); ++t) {
      const TensorF d = difference_map(c, t);
      CHECK(add(d, c.frame(t - 1)) == c.frame(t));
      for (float v : d.vec()) CHECK(std::abs(v) <= 2.0f);
    }
  }
  const VideoClip c = gen_clip(MotionFamily::rotate, 0, 1, ClipSpec{});
  CHECK_THROWS_AS((void)difference_map(c, 0), ValidationError);
  CHECK_THROWS_AS((void)difference_map(c, 10), ValidationError);
}

TEST_CASE("horizontal translation shifts frames exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const VideoClip c = gen_clip(MotionFamily::translate_horizontal, 0, seed, ClipSpec{});
    const long W = 32;
    for (std::size_t t = 0; t + 1 < c.num_frames(); ++t) {
      const double dv = c.poses[t + 1].cx - c.poses[t].cx;
      REQUIRE(dv == std::round(dv));
      const long v = static_cast<long>(dv);
      REQUIRE(v != 0);
      bool same = true;
      for (long y = 0; y < W; ++y)
        for (long x = std::max(0L, v); x < std::min(W, W + v); ++x)
          same = same && c.frames.at(t + 1, 0, y, x) == c.frames.at(t, 0, y, x - v);
      CHECK(same);
    }
  }
}

TEST_CASE("translation differences are supported near the shape") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const VideoClip c = gen_clip(MotionFamily::translate_vertical, 0, seed, ClipSpec{});
    for (std::size_t t = 1; t < c.num_frames(); ++t) {
      const TensorF d = difference_map(c, t);
      std::size_t nonzero = 0;
      bool supported = true;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          if (d[y * 32 + x] == 0.0f) continue;
          ++nonzero;
          const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
          bool near = false;
          for (std::size_t u : {t - 1, t})
            near = near || std::hypot(px - c.poses[u].cx, py - c.poses[u].cy) <= c.extent + 1.0;
          supported = supported && near;
        }
      CHECK(supported);
      CHECK(nonzero > 0);
      // Edges only: far fewer changed pixels than the shape covers.
      CHECK(static_cast<double>(nonzero) < 4.0 * c.extent * c.extent);
    }
  }
}

TEST_CASE("motion classes are separable by a nearest-centroid rule") {
  const std::vector<MotionFamily> fams{MotionFamily::translate_horizontal, MotionFamily::rotate, MotionFamily::still};
  const Dataset d = build_dataset(fams, 40, 99, ClipSpec{});
  std::vector<std::vector<double>> centroid(3, std::vector<double>(3, 0.0));
  std::vector<std::size_t> count(3, 0);
  for (auto id : d.manifest.train) {
    const auto f = motion_features(d.clips[id]);
    for (std::size_t k = 0; k < 3; ++k) centroid[d.clips[id].action][k] += f[k];
    ++count[d.clips[id].action];
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
  std::size_t correct = 0;
  for (auto id : d.manifest.test) {
    const auto f = motion_features(d.clips[id]);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 3; ++c) {
      double dist = 0;
      for (std::size_t k = 0; k < 3; ++k) dist += (f[k] - centroid[c][k]) * (f[k] - centroid[c][k]);
      if (dist < best_d) best_d = dist, best = c;
    }
    correct += best == d.clips[id].action;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(d.manifest.test.size());
  CAPTURE(acc);
  CHECK(acc > 0.9);
}

TEST_CASE("dataset layout") {
  const Dataset d = build_dataset(default_classes(4), 50, 7, ClipSpec{});
  CHECK(d.clips.size() == 200);
  std::vector<std::size_t> hist(4, 0);
  for (const auto& c : d.clips) ++hist[c.action];
  CHECK(hist == std::vector<std::size_t>{50, 50, 50, 50});
  CHECK(d.manifest.train.size() == 160);
  CHECK(d.manifest.test.size() == 40);
  std::set<std::size_t> all(d.manifest.train.begin(), d.manifest.train.end());
  for (auto id : d.manifest.test) CHECK(all.insert(id).second);
  CHECK(all.size() == 200);
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(d.manifest.clips[i].id == i);
    CHECK(d.manifest.clips[i].seed == split_seed(7, i));
    CHECK(d.clips[i].action == i / 50);
  }
  CHECK(d.manifest.classes == std::vector<std::string>{"translate-horizontal", "rotate", "static", "small-jitter"});
  CHECK_THROWS_AS((void)default_classes(9), ValidationError);
  CHECK(family_from_name("parabolic-bounce") == MotionFamily::parabolic_bounce);
  CHECK_THROWS_AS((void)family_from_name("wobble"), ValidationError);
}

TEST_CASE("container round trip and byte determinism") {
  const std::string p1 = temp_path("a.smv"), p2 = temp_path("b.smv");
  const ClipSpec spec{6, 16, 3, 1.0};
  const auto m = gen_dataset(default_classes(3), 4, 11, spec, p1);
  gen_dataset(default_classes(3), 4, 11, spec, p2);
  CHECK(read_bytes(p1) == read_bytes(p2));
  CHECK(read_bytes(manifest_path(p1)) == read_bytes(manifest_path(p2)));

  const std::string bytes = read_bytes(p1);
  CHECK(bytes.substr(0, 4) == "SMV1");
  CHECK(bytes.size() == 4 + 7 * 4 + 12 * (2 + 8 + 6 * 3 * 16 * 16 * 4));
  CHECK(static_cast<unsigned char>(bytes[8]) == 12);  // num_clips, little-endian

  const Dataset d = load_dataset(p1);
  const Dataset ref = build_dataset(default_classes(3), 4, 11, spec);
  REQUIRE(d.clips.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(d.clips[i].frames == ref.clips[i].frames);
    CHECK(d.clips[i].seed == ref.clips[i].seed);
    CHECK(d.clips[i].action == ref.clips[i].action);
  }
  CHECK(d.manifest.train == m.train);

  const auto j = m.to_json();
  CHECK(j.size() == 3);
  CHECK(j.at("split").size() == 2);
  CHECK(j.at("clips")[0].size() == 3);

  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
  std::filesystem::remove(manifest_path(p1));
  std::filesystem::remove(manifest_path(p2));
}

TEST_CASE("generator and container errors") {
  CHECK_THROWS_AS((void)gen_clip(MotionFamily::still, 0, 1, ClipSpec{10, 32, 1, 3.0}), ValidationError);
  CHECK_THROWS_AS((void)gen_clip(MotionFamily::still, 0, 1, ClipSpec{1, 32, 1, 1.0}), ValidationError);
  CHECK_THROWS_AS((void)gen_clip(MotionFamily::still, 0, 1, ClipSpec{10, 8, 1, 1.0}), ValidationError);
  CHECK_THROWS_AS((ClipSpec{10, 36, 1, 1.0}.validate(4)), ValidationError);
  CHECK_THROWS_AS((void)load_dataset(temp_path("missing.smv")), IoError);

  const std::string bad = temp_path("bad.smv");
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE0000";
  }
  CHECK_THROWS_AS((void)read_smv(bad), IoError);
  {
    std::ofstream os(bad, std::ios::binary);
    os.write("SMV1\x01\x00\x00\x00\x05", 9);
  }
  CHECK_THROWS_AS((void)read_smv(bad), IoError);
  std::filesystem::remove(bad);
}
