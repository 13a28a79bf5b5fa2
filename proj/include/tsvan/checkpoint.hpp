#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tsvan/classifier.hpp"
#include "tsvan/model.hpp"

namespace tsvan {

// TSVC container: "TSVC", u32 version, u64 manifest length, a JSON manifest
// [{name, shape, offset}] with offsets in bytes from the end of the manifest,
// then the f32 little-endian tensors in manifest order. The configuration
// needed to rebuild the network is written beside it as `path + ".json"`.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, TensorF>> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Model parameters are stored as "content/<name>" and "motion/<name>".
void save_model(const Model<float>& model, const std::string& path);
Model<float> load_model(const std::string& path);

void save_classifier(const Classifier& clf, const std::string& path);
Classifier load_classifier(const std::string& path);

// Maps [-1, 1] to 0..255 with v = floor((x + 1) / 2 * 255 + 0.5), clamped.
std::uint8_t to_byte(float x);
// Writes a (C, H, W) frame as binary PGM (C = 1) or PPM (C = 3).
void write_frame_image(const std::string& path, const TensorF& frame);
// Writes every frame of a (T, C, H, W) clip as `<prefix>_<t>.pgm|ppm` with t
// zero-padded to 3 digits. Returns the paths written.
std::vector<std::string> export_clip_frames(const TensorF& clip, const std::string& prefix);

}  // namespace tsvan
