#include "tsvan/checkpoint.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "tsvan/error.hpp"

namespace tsvan {

namespace {

std::string sidecar(const std::string& path) { return path + ".json"; }

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in '" + path + "': " + e.what());
  }
}

// Copies every stored tensor into `params`, requiring identical names and shapes.
void restore(ParamSet<float>& params, const std::string& prefix,
             const std::vector<std::pair<std::string, TensorF>>& tensors, std::set<std::string>& used) {
  for (auto& p : params.params()) {
    const std::string key = prefix + p.name;
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == key; });
    if (it == tensors.end()) throw IoError("checkpoint is missing tensor '" + key + "'");
    if (it->second.shape() != p.value.shape())
      throw IoError("checkpoint tensor '" + key + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                    shape_str(p.value.shape()));
    p.value = it->second;
    used.insert(key);
  }
}

void check_all_used(const Checkpoint& ckpt, const std::set<std::string>& used) {
  for (const auto& [name, t] : ckpt.tensors)
    if (!used.count(name)) throw IoError("checkpoint has unexpected tensor '" + name + "'");
}

std::string expect_kind(const nlohmann::json& cfg, const std::string& kind) {
  const std::string got = cfg.is_object() ? cfg.value("kind", std::string()) : std::string();
  if (got != kind) throw IoError("checkpoint holds '" + got + "', expected '" + kind + "'");
  return got;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("TSVC", 4);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors)
    for (float v : t.data()) detail::put_f32(os, v);
  if (!os) throw IoError("failed writing '" + path + "'");
  os.close();
  write_json(sidecar(path), ckpt.config);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TSVC") throw IoError("'" + path + "' is not a TSVC checkpoint");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw IoError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  const auto len = detail::get_le<std::uint64_t>(is, "manifest length");
  if (len > (1ull << 30)) throw IoError("checkpoint manifest length " + std::to_string(len) + " is implausible");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("unexpected end of file reading manifest");
  Checkpoint ckpt;
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& e : nlohmann::json::parse(text)) {
      const Shape shape = e.at("shape").get<Shape>();
      if (e.at("offset").get<std::uint64_t>() != expected_offset)
        throw IoError("checkpoint tensor offsets are not contiguous");
      validate_shape(shape);
      std::vector<float> buf(shape_numel(shape));
      for (auto& v : buf) v = detail::get_f32(is, "tensor data");
      expected_offset += buf.size() * sizeof(float);
      ckpt.tensors.emplace_back(e.at("name").get<std::string>(), TensorF(shape, std::move(buf)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest in '" + path + "': " + e.what());
  } catch (const ValidationError& e) {
    throw IoError("malformed checkpoint manifest in '" + path + "': " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after checkpoint data in '" + path + "'");
  ckpt.config = read_json(sidecar(path));
  return ckpt;
}

void save_model(const Model<float>& model, const std::string& path) {
  Checkpoint ckpt;
  ckpt.config = {{"kind", "model"}, {"model", model.config.to_json()}};
  for (const auto& p : model.content.params()) ckpt.tensors.emplace_back("content/" + p.name, p.value);
  for (const auto& p : model.motion.params()) ckpt.tensors.emplace_back("motion/" + p.name, p.value);
  write_checkpoint(path, ckpt);
}

Model<float> load_model(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  expect_kind(ckpt.config, "model");
  Model<float> m = Model<float>::init(ModelConfig::from_json(ckpt.config.at("model")), 0);
  std::set<std::string> used;
  restore(m.content, "content/", ckpt.tensors, used);
  restore(m.motion, "motion/", ckpt.tensors, used);
  check_all_used(ckpt, used);
  return m;
}

void save_classifier(const Classifier& clf, const std::string& path) {
  Checkpoint ckpt;
  ckpt.config = {{"kind", "classifier"}, {"classifier", clf.config.to_json()}};
  for (const auto& p : clf.params.params()) ckpt.tensors.emplace_back(p.name, p.value);
  write_checkpoint(path, ckpt);
}

Classifier load_classifier(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  expect_kind(ckpt.config, "classifier");
  Classifier clf = Classifier::init(ClassifierConfig::from_json(ckpt.config.at("classifier")), 0);
  std::set<std::string> used;
  restore(clf.params, "", ckpt.tensors, used);
  check_all_used(ckpt, used);
  return clf;
}

std::uint8_t to_byte(float x) {
  const double v = std::floor((static_cast<double>(x) + 1.0) / 2.0 * 255.0 + 0.5);
  if (!(v > 0)) return 0;  // also maps NaN to 0
  return v >= 255 ? 255 : static_cast<std::uint8_t>(v);
}

void write_frame_image(const std::string& path, const TensorF& frame) {
  if (frame.rank() != 3 || (frame.dim(0) != 1 && frame.dim(0) != 3))
    throw ValidationError("frame export: expected a (1|3, H, W) frame, got " + shape_str(frame.shape()));
  const std::size_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << (C == 1 ? "P5" : "P6") << '\n' << W << ' ' << H << "\n255\n";
  std::string pixels(C * H * W, '\0');
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        pixels[(y * W + x) * C + c] = static_cast<char>(to_byte(frame[(c * H + y) * W + x]));
  os.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> export_clip_frames(const TensorF& clip, const std::string& prefix) {
  if (clip.rank() != 4) throw ValidationError("frame export: expected a (T, C, H, W) clip, got " + shape_str(clip.shape()));
  const std::size_t T = clip.dim(0), per = clip.size() / T;
  const char* ext = clip.dim(1) == 1 ? "pgm" : "ppm";
  std::vector<std::string> paths;
  for (std::size_t t = 0; t < T; ++t) {
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_%03zu.%s", t, ext);
    std::vector<float> buf(clip.raw() + t * per, clip.raw() + (t + 1) * per);
    write_frame_image(prefix + suffix, TensorF({clip.dim(1), clip.dim(2), clip.dim(3)}, std::move(buf)));
    paths.push_back(prefix + suffix);
  }
  return paths;
}

}  // namespace tsvan
