#include "tsvan/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "binary_io.hpp"
#include "tsvan/error.hpp"
#include "tsvan/rng.hpp"

namespace tsvan {

namespace {

struct FamilyInfo {
  MotionFamily family;
  const char* name;
};

constexpr std::array<FamilyInfo, 8> kFamilies{{
    {MotionFamily::translate_horizontal, "translate-horizontal"},
    {MotionFamily::translate_vertical, "translate-vertical"},
    {MotionFamily::diagonal, "diagonal"},
    {MotionFamily::rotate, "rotate"},
    {MotionFamily::scale_oscillate, "scale-oscillate"},
    {MotionFamily::parabolic_bounce, "parabolic-bounce"},
    {MotionFamily::small_jitter, "small-jitter"},
    {MotionFamily::still, "static"},
}};

constexpr std::array<MotionFamily, 8> kDefaultOrder{
    MotionFamily::translate_horizontal, MotionFamily::rotate,          MotionFamily::still,
    MotionFamily::small_jitter,         MotionFamily::translate_vertical, MotionFamily::diagonal,
    MotionFamily::scale_oscillate,      MotionFamily::parabolic_bounce,
};

// Snaps to a dyadic grid so that integer translations of the shape render
// bit-identically shifted frames.
double quantize(double v, double step) { return std::round(v / step) * step; }

struct Geometry {
  ShapeKind kind;
  double half = 0;    // half-size s
  double aspect = 1;  // rectangle height / width
};

bool inside(const Geometry& g, double lx, double ly) {
  const double s = g.half;
  switch (g.kind) {
    case ShapeKind::rectangle:
      return std::abs(lx) <= s && std::abs(ly) <= g.aspect * s;
    case ShapeKind::disc:
      return lx * lx + ly * ly <= s * s;
    case ShapeKind::triangle:
      // Vertices (0, -s), (s, 0.75 s), (-s, 0.75 s).
      return ly <= 0.75 * s && 1.75 * std::abs(lx) <= ly + s;
    case ShapeKind::cross:
      return (std::abs(lx) <= s && std::abs(ly) <= 0.375 * s) || (std::abs(lx) <= 0.375 * s && std::abs(ly) <= s);
  }
  return false;
}

double bounding_radius(const Geometry& g) {
  switch (g.kind) {
    case ShapeKind::rectangle: return g.half * std::sqrt(1.0 + g.aspect * g.aspect);
    case ShapeKind::disc: return g.half;
    case ShapeKind::triangle: return 1.25 * g.half;
    case ShapeKind::cross: return g.half * std::sqrt(1.0 + 0.375 * 0.375);
  }
  return g.half;
}

double background_value(std::size_t id, std::size_t y, std::size_t H) {
  const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(H);
  switch (id) {
    case 0: return -0.75;
    case 1: return -0.25;
    case 2: return -0.9 + 0.6 * v;
    default: return -0.3 - 0.6 * v;
  }
}

// Start coordinate for a constant velocity v over `frames` frames within [lo, hi].
double start_for_velocity(SeededRng& rng, double v, std::size_t frames, double lo, double hi) {
  const double travel = std::abs(v) * static_cast<double>(frames - 1);
  if (travel >= hi - lo) return v > 0 ? lo : hi;
  const double a = v > 0 ? lo : lo + travel;
  const double b = v > 0 ? hi - travel : hi;
  return quantize(rng.uniform(a, b), 1.0 / 16);
}

// Picks +-2 or +-1 pixels per frame, falling back to 1 when 2 cannot fit.
double pick_velocity(SeededRng& rng, std::size_t frames, double lo, double hi) {
  const double sign = rng.below(2) ? 1.0 : -1.0;
  double mag = rng.below(2) ? 2.0 : 1.0;
  if (mag * static_cast<double>(frames - 1) > hi - lo) mag = 1.0;
  return sign * mag;
}

}  // namespace

std::string family_name(MotionFamily f) {
  for (const auto& info : kFamilies)
    if (info.family == f) return info.name;
  throw ValidationError("unknown motion family");
}

MotionFamily family_from_name(const std::string& name) {
  for (const auto& info : kFamilies)
    if (name == info.name) return info.family;
  throw ValidationError("unknown motion family '" + name + "'");
}

const std::vector<MotionFamily>& all_families() {
  static const std::vector<MotionFamily> v = [] {
    std::vector<MotionFamily> out;
    for (const auto& info : kFamilies) out.push_back(info.family);
    return out;
  }();
  return v;
}

std::vector<MotionFamily> default_classes(std::size_t k) {
  if (k < 1 || k > kDefaultOrder.size())
    throw ValidationError("class count must be 1.." + std::to_string(kDefaultOrder.size()) + ", got " +
                          std::to_string(k));
  return {kDefaultOrder.begin(), kDefaultOrder.begin() + static_cast<long>(k)};
}

void ClipSpec::validate(std::size_t scales) const {
  if (frames < 2) throw ValidationError("ClipSpec: need at least 2 frames");
  if (size < 16) throw ValidationError("ClipSpec: frame size must be >= 16");
  if (channels != 1 && channels != 3) throw ValidationError("ClipSpec: channels must be 1 or 3");
  if (scales < 1 || size % (std::size_t{1} << (scales - 1)) != 0)
    throw ValidationError("ClipSpec: frame size must be divisible by 2^(scales - 1)");
  if (!(shape_scale > 0.0)) throw ValidationError("ClipSpec: shape_scale must be positive");
}

TensorF VideoClip::frame(std::size_t t) const {
  if (t >= frames.dim(0)) throw ValidationError("frame index " + std::to_string(t) + " out of range");
  const std::size_t C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
  std::vector<float> buf(frames.raw() + t * C * H * W, frames.raw() + (t + 1) * C * H * W);
  return TensorF({C, H, W}, std::move(buf));
}

VideoClip gen_clip(MotionFamily family, std::size_t action, std::uint64_t seed, const ClipSpec& spec) {
  spec.validate();
  SeededRng rng(seed);
  const std::size_t T = spec.frames, S = spec.size, C = spec.channels;
  const double W = static_cast<double>(S);

  Geometry geo;
  if (family == MotionFamily::rotate) {
    // A rotating disc would look static.
    constexpr std::array<ShapeKind, 3> kinds{ShapeKind::rectangle, ShapeKind::triangle, ShapeKind::cross};
    geo.kind = kinds[rng.below(kinds.size())];
  } else {
    geo.kind = static_cast<ShapeKind>(rng.below(4));
  }
  geo.half = quantize(rng.uniform(W / 8.0, W / 5.0) * spec.shape_scale, 0.25);
  constexpr std::array<double, 3> aspects{0.5, 0.625, 0.75};
  geo.aspect = aspects[rng.below(aspects.size())];
  const double extent = bounding_radius(geo);
  const double max_scale = family == MotionFamily::scale_oscillate ? 1.35 : 1.0;
  if (2.0 * extent * max_scale > W - 2.0)
    throw ValidationError("gen_clip: shape of radius " + std::to_string(extent * max_scale) +
                          " is too large for a " + std::to_string(S) + "-pixel frame");

  const std::size_t background = rng.below(4);
  std::vector<double> fg(C);
  for (auto& v : fg) v = quantize(rng.uniform(0.4, 1.0), 1.0 / 64);
  const double angle0 = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const double lo = extent * max_scale + 0.5, hi = W - extent * max_scale - 0.5;
  std::vector<ShapePose> poses(T);
  for (auto& p : poses) p.angle = angle0;

  switch (family) {
    case MotionFamily::translate_horizontal: {
      const double v = pick_velocity(rng, T, lo, hi);
      const double x0 = start_for_velocity(rng, v, T, lo, hi);
      const double y0 = quantize(rng.uniform(lo, hi), 1.0 / 16);
      for (std::size_t t = 0; t < T; ++t) poses[t].cx = x0 + v * static_cast<double>(t), poses[t].cy = y0;
      break;
    }
    case MotionFamily::translate_vertical: {
      const double v = pick_velocity(rng, T, lo, hi);
      const double y0 = start_for_velocity(rng, v, T, lo, hi);
      const double x0 = quantize(rng.uniform(lo, hi), 1.0 / 16);
      for (std::size_t t = 0; t < T; ++t) poses[t].cx = x0, poses[t].cy = y0 + v * static_cast<double>(t);
      break;
    }
    case MotionFamily::diagonal: {
      const double vx = pick_velocity(rng, T, lo, hi), vy = pick_velocity(rng, T, lo, hi);
      const double x0 = start_for_velocity(rng, vx, T, lo, hi), y0 = start_for_velocity(rng, vy, T, lo, hi);
      for (std::size_t t = 0; t < T; ++t) {
        poses[t].cx = x0 + vx * static_cast<double>(t);
        poses[t].cy = y0 + vy * static_cast<double>(t);
      }
      break;
    }
    case MotionFamily::rotate: {
      const double omega = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.15, 0.35);
      const double x0 = quantize(rng.uniform(lo, hi), 1.0 / 16), y0 = quantize(rng.uniform(lo, hi), 1.0 / 16);
      for (std::size_t t = 0; t < T; ++t) {
        poses[t].cx = x0, poses[t].cy = y0;
        poses[t].angle = angle0 + omega * static_cast<double>(t);
      }
      break;
    }
    case MotionFamily::scale_oscillate: {
      const double amp = rng.uniform(0.25, 0.35), period = rng.uniform(4.0, 8.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double x0 = quantize(rng.uniform(lo, hi), 1.0 / 16), y0 = quantize(rng.uniform(lo, hi), 1.0 / 16);
      for (std::size_t t = 0; t < T; ++t) {
        poses[t].cx = x0, poses[t].cy = y0;
        poses[t].scale = 1.0 + amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
      }
      break;
    }
    case MotionFamily::parabolic_bounce: {
      const std::size_t period = 5 + rng.below(5);
      const std::size_t offset = rng.below(period);
      const double height = std::min(rng.uniform(W / 6.0, W / 3.5), hi - lo);
      constexpr std::array<double, 3> drifts{-0.5, 0.0, 0.5};
      const double vx = drifts[rng.below(drifts.size())];
      const double x0 = start_for_velocity(rng, vx == 0.0 ? 1e-9 : vx, T, lo, hi);
      for (std::size_t t = 0; t < T; ++t) {
        const double u = static_cast<double>((t + offset) % period) / static_cast<double>(period);
        poses[t].cx = x0 + vx * static_cast<double>(t);
        poses[t].cy = hi - 4.0 * height * u * (1.0 - u);
      }
      break;
    }
    case MotionFamily::small_jitter: {
      const double x0 = quantize(rng.uniform(lo + 1.0, hi - 1.0), 1.0 / 16);
      const double y0 = quantize(rng.uniform(lo + 1.0, hi - 1.0), 1.0 / 16);
      long px = 0, py = 0;
      for (std::size_t t = 0; t < T; ++t) {
        long dx, dy;
        do {
          dx = static_cast<long>(rng.below(3)) - 1;
          dy = static_cast<long>(rng.below(3)) - 1;
        } while (t > 0 && dx == px && dy == py);
        px = dx, py = dy;
        poses[t].cx = x0 + static_cast<double>(dx);
        poses[t].cy = y0 + static_cast<double>(dy);
      }
      break;
    }
    case MotionFamily::still: {
      const double x0 = quantize(rng.uniform(lo, hi), 1.0 / 16), y0 = quantize(rng.uniform(lo, hi), 1.0 / 16);
      for (auto& p : poses) p.cx = x0, p.cy = y0;
      break;
    }
  }

  VideoClip clip;
  clip.frames = TensorF({T, C, S, S});
  clip.action = action;
  clip.seed = seed;
  clip.family = family;
  clip.shape = geo.kind;
  clip.background = background;
  clip.extent = extent;
  clip.poses = poses;

  // Pixel values sit on a 2^-12 grid, so frame differences and their sums are exact in f32.
  constexpr double kValueStep = 1.0 / 4096;
  // 4 x 4 supersampling; sample offsets are multiples of 1/8.
  constexpr int kSub = 4;
  for (std::size_t t = 0; t < T; ++t) {
    const ShapePose& p = poses[t];
    const double ca = std::cos(p.angle), sa = std::sin(p.angle);
    const double reach = extent * p.scale + 1.0;
    for (std::size_t y = 0; y < S; ++y) {
      const double bg = background_value(background, y, S);
      for (std::size_t x = 0; x < S; ++x) {
        int hits = 0;
        if (std::abs(static_cast<double>(x) + 0.5 - p.cx) <= reach &&
            std::abs(static_cast<double>(y) + 0.5 - p.cy) <= reach) {
          for (int sy = 0; sy < kSub; ++sy)
            for (int sx = 0; sx < kSub; ++sx) {
              const double dx = static_cast<double>(x) + (sx + 0.5) / kSub - p.cx;
              const double dy = static_cast<double>(y) + (sy + 0.5) / kSub - p.cy;
              const double lx = (ca * dx + sa * dy) / p.scale;
              const double ly = (-sa * dx + ca * dy) / p.scale;
              hits += inside(geo, lx, ly) ? 1 : 0;
            }
        }
        const double cov = static_cast<double>(hits) / (kSub * kSub);
        for (std::size_t c = 0; c < C; ++c)
          clip.frames.at(t, c, y, x) = static_cast<float>(quantize(bg + (fg[c] - bg) * cov, kValueStep));
      }
    }
  }
  return clip;
}

TensorF difference_map(const VideoClip& clip, std::size_t t) {
  if (t < 1 || t >= clip.num_frames())
    throw ValidationError("difference_map: t = " + std::to_string(t) + " outside [1, " +
                          std::to_string(clip.num_frames()) + ")");
  return sub(clip.frame(t), clip.frame(t - 1));
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json clips_json = nlohmann::json::array();
  for (const auto& c : clips) clips_json.push_back({{"id", c.id}, {"action", c.action}, {"seed", c.seed}});
  return {{"classes", classes}, {"clips", clips_json}, {"split", {{"train", train}, {"test", test}}}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& c : j.at("clips"))
      m.clips.push_back({c.at("id").get<std::size_t>(), c.at("action").get<std::size_t>(),
                         c.at("seed").get<std::uint64_t>()});
    m.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    m.test = j.at("split").at("test").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
}

Dataset build_dataset(const std::vector<MotionFamily>& classes, std::size_t clips_per_class,
                      std::uint64_t master_seed, const ClipSpec& spec) {
  spec.validate();
  if (classes.empty()) throw ValidationError("build_dataset: no classes");
  if (clips_per_class < 1) throw ValidationError("build_dataset: clips_per_class must be >= 1");
  Dataset d;
  d.spec = spec;
  for (auto f : classes) d.manifest.classes.push_back(family_name(f));
  const std::size_t n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(clips_per_class)));
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (std::size_t j = 0; j < clips_per_class; ++j) {
      const std::size_t id = k * clips_per_class + j;
      const std::uint64_t seed = split_seed(master_seed, id);
      d.clips.push_back(gen_clip(classes[k], k, seed, spec));
      d.manifest.clips.push_back({id, k, seed});
      (j < n_train ? d.manifest.train : d.manifest.test).push_back(id);
    }
  return d;
}

std::string manifest_path(const std::string& data_path) { return data_path + ".json"; }

DatasetManifest gen_dataset(const std::vector<MotionFamily>& classes, std::size_t clips_per_class,
                            std::uint64_t master_seed, const ClipSpec& spec, const std::string& path) {
  Dataset d = build_dataset(classes, clips_per_class, master_seed, spec);
  write_smv(path, d.clips, spec);
  std::ofstream os(manifest_path(path), std::ios::binary);
  if (!os) throw IoError("cannot open '" + manifest_path(path) + "' for writing");
  os << d.manifest.to_json().dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + manifest_path(path) + "'");
  return d.manifest;
}

void write_smv(const std::string& path, const std::vector<VideoClip>& clips, const ClipSpec& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("SMV1", 4);
  for (std::uint32_t v : {1u, static_cast<std::uint32_t>(clips.size()), static_cast<std::uint32_t>(spec.frames),
                          static_cast<std::uint32_t>(spec.channels), static_cast<std::uint32_t>(spec.size),
                          static_cast<std::uint32_t>(spec.size), 0u})
    detail::put_le<std::uint32_t>(os, v);
  const Shape expect{spec.frames, spec.channels, spec.size, spec.size};
  for (const auto& c : clips) {
    if (c.frames.shape() != expect)
      throw ValidationError("write_smv: clip shape " + shape_str(c.frames.shape()) + " does not match " +
                            shape_str(expect));
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.action));
    detail::put_le<std::uint64_t>(os, c.seed);
    for (float v : c.frames.data()) detail::put_f32(os, v);
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

SmvContents read_smv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SMV1") throw IoError("'" + path + "' is not an SMV1 file");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != 1) throw IoError("unsupported SMV version " + std::to_string(version));
  const auto n = detail::get_le<std::uint32_t>(is, "num_clips");
  const auto T = detail::get_le<std::uint32_t>(is, "T");
  const auto C = detail::get_le<std::uint32_t>(is, "C");
  const auto H = detail::get_le<std::uint32_t>(is, "H");
  const auto W = detail::get_le<std::uint32_t>(is, "W");
  const auto dtype = detail::get_le<std::uint32_t>(is, "dtype");
  if (dtype != 0) throw IoError("unsupported SMV dtype " + std::to_string(dtype));
  if (H != W || T < 1 || C < 1 || H < 1) throw IoError("invalid SMV header in '" + path + "'");
  SmvContents out;
  out.spec.frames = T;
  out.spec.channels = C;
  out.spec.size = H;
  out.clips.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    VideoClip c;
    c.action = detail::get_le<std::uint16_t>(is, "action");
    c.seed = detail::get_le<std::uint64_t>(is, "seed");
    std::vector<float> buf(static_cast<std::size_t>(T) * C * H * W);
    for (auto& v : buf) v = detail::get_f32(is, "frame data");
    c.frames = TensorF({T, C, H, W}, std::move(buf));
    out.clips.push_back(std::move(c));
  }
  return out;
}

Dataset load_dataset(const std::string& path) {
  SmvContents smv = read_smv(path);
  std::ifstream is(manifest_path(path));
  if (!is) throw IoError("cannot open manifest '" + manifest_path(path) + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
  Dataset d;
  d.spec = smv.spec;
  d.manifest = DatasetManifest::from_json(j);
  d.clips = std::move(smv.clips);
  if (d.manifest.clips.size() != d.clips.size())
    throw IoError("manifest lists " + std::to_string(d.manifest.clips.size()) + " clips, container holds " +
                  std::to_string(d.clips.size()));
  for (auto id : d.manifest.train)
    if (id >= d.clips.size()) throw IoError("manifest split references unknown clip " + std::to_string(id));
  for (auto id : d.manifest.test)
    if (id >= d.clips.size()) throw IoError("manifest split references unknown clip " + std::to_string(id));
  return d;
}

}  // namespace tsvan
