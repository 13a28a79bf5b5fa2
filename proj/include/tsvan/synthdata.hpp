#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsvan/tensor.hpp"

namespace tsvan {

// Procedural shape-motion clips: one anti-aliased shape over a flat or
// vertical-gradient background, animated by a class-specific parametric motion.

enum class MotionFamily {
  translate_horizontal,
  translate_vertical,
  diagonal,
  rotate,
  scale_oscillate,
  parabolic_bounce,
  small_jitter,
  still,
};

enum class ShapeKind { rectangle, disc, triangle, cross };

std::string family_name(MotionFamily f);
MotionFamily family_from_name(const std::string& name);
const std::vector<MotionFamily>& all_families();
// First `k` families of the default class order: translate-horizontal, rotate,
// static, small-jitter, translate-vertical, diagonal, scale-oscillate,
// parabolic-bounce.
std::vector<MotionFamily> default_classes(std::size_t k);

struct ClipSpec {
  std::size_t frames = 10;
  std::size_t size = 32;  // H = W
  std::size_t channels = 1;
  double shape_scale = 1.0;

  // `scales` fusion scales require size divisible by 2^(scales - 1).
  void validate(std::size_t scales = 1) const;
};

// Placement of the shape in one frame, in pixel units (pixel x covers [x, x + 1)).
struct ShapePose {
  double cx = 0, cy = 0;
  double angle = 0;  // radians
  double scale = 1;
};

struct VideoClip {
  TensorF frames;  // (T, C, H, W), values in [-1, 1]
  std::size_t action = 0;
  std::uint64_t seed = 0;
  // Renderer metadata; absent for clips read back from a container.
  std::optional<MotionFamily> family;
  std::optional<ShapeKind> shape;
  std::size_t background = 0;
  double extent = 0;  // radius bounding the shape at scale 1
  std::vector<ShapePose> poses;

  std::size_t num_frames() const { return frames.dim(0); }
  TensorF frame(std::size_t t) const;  // (C, H, W)
};

// Fully determined by (family, seed, spec). `action` is the label stored on the clip.
VideoClip gen_clip(MotionFamily family, std::size_t action, std::uint64_t seed, const ClipSpec& spec);

// x_t - x_{t-1} as (C, H, W); requires 1 <= t < T.
TensorF difference_map(const VideoClip& clip, std::size_t t);

struct ClipEntry {
  std::size_t id = 0;
  std::size_t action = 0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<ClipEntry> clips;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct Dataset {
  ClipSpec spec;
  DatasetManifest manifest;
  std::vector<VideoClip> clips;  // indexed by clip id
};

// Clip id = class * clips_per_class + j; seed of clip id i is split_seed(master, i).
// The first round(0.8 * clips_per_class) clips of each class form the train split.
Dataset build_dataset(const std::vector<MotionFamily>& classes, std::size_t clips_per_class,
                      std::uint64_t master_seed, const ClipSpec& spec);

// Builds the dataset and writes the SMV1 container to `path` and the manifest to `path + ".json"`.
DatasetManifest gen_dataset(const std::vector<MotionFamily>& classes, std::size_t clips_per_class,
                            std::uint64_t master_seed, const ClipSpec& spec, const std::string& path);

// SMV1 container: "SMV1", u32 version=1, num_clips, T, C, H, W, dtype=0 (f32),
// then per clip u16 action, u64 seed and T*C*H*W f32 values; all little-endian.
void write_smv(const std::string& path, const std::vector<VideoClip>& clips, const ClipSpec& spec);
struct SmvContents {
  ClipSpec spec;
  std::vector<VideoClip> clips;
};
SmvContents read_smv(const std::string& path);

// Reads `path` and its manifest sidecar.
Dataset load_dataset(const std::string& path);

std::string manifest_path(const std::string& data_path);

}  // namespace tsvan
