#include "tsvan/model.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "tsvan/error.hpp"

namespace tsvan {

void ModelConfig::validate() const {
  if (ngf < 1) throw ValidationError("model: ngf must be >= 1");
  if (content_dim < 1 || motion_dim < 1) throw ValidationError("model: latent dimensions must be >= 1");
  if (motion_dim % 16 != 0) throw ValidationError("model: motion_dim must be a multiple of 16");
  if (classes < 1) throw ValidationError("model: classes must be >= 1");
  if (channels < 1) throw ValidationError("model: channels must be >= 1");
  if (size < 8 || !std::has_single_bit(size)) throw ValidationError("model: size must be a power of two >= 8");
  if (scales < 1 || scales > stages())
    throw ValidationError("model: scales must be in [1, " + std::to_string(stages()) + "] for size " +
                          std::to_string(size));
  if (kernel < 3 || kernel % 2 == 0) throw ValidationError("model: kernel must be odd and >= 3");
}

std::size_t ModelConfig::stages() const {
  return static_cast<std::size_t>(std::countr_zero(size)) - 2;
}

std::size_t ModelConfig::stage_width(std::size_t stage) const {
  const std::size_t U = stages();
  const std::size_t e = U >= stage + 2 ? U - 2 - stage : 0;
  return ngf << e;
}

std::size_t ModelConfig::embedding_channels() const { return convlstm ? ngf : motion_dim / 16; }

FusionConfig ModelConfig::fusion() const {
  FusionConfig f;
  f.scales = scales;
  f.kernel = kernel;
  for (std::size_t u = first_tap(); u < stages(); ++u) {
    f.resolutions.push_back(std::size_t{8} << u);
    f.channels.push_back(stage_width(u));
  }
  return f;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"ngf", ngf},         {"content_dim", content_dim}, {"motion_dim", motion_dim},
          {"scales", scales},   {"kernel", kernel},           {"classes", classes},
          {"size", size},       {"channels", channels},       {"convlstm", convlstm}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.ngf = j.value("ngf", c.ngf);
    c.content_dim = j.value("content_dim", c.content_dim);
    c.motion_dim = j.value("motion_dim", c.motion_dim);
    c.scales = j.value("scales", c.scales);
    c.kernel = j.value("kernel", c.kernel);
    c.classes = j.value("classes", c.classes);
    c.size = j.value("size", c.size);
    c.channels = j.value("channels", c.channels);
    c.convlstm = j.value("convlstm", c.convlstm);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

Layer conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
           std::size_t pad, Activation act) {
  return {LayerKind::conv, name, {in, out, k, stride, pad}, act};
}

Layer deconv(const std::string& name, std::size_t in, std::size_t out, Activation act) {
  return {LayerKind::deconv, name, {in, out, 4, 2, 1}, act};
}

Layer dense(const std::string& name, std::size_t in, std::size_t out, Activation act) {
  return {LayerKind::linear, name, {in, out, 1, 1, 0}, act};
}

std::vector<Layer> encoder_convs(const std::string& prefix, const ModelConfig& c, std::size_t& out_channels) {
  std::vector<Layer> v;
  std::size_t in = c.channels + c.classes;
  for (std::size_t u = 0; u < c.stages(); ++u) {
    const std::size_t out = c.ngf << std::min<std::size_t>(u, 2);
    v.push_back(conv(prefix + ".conv" + std::to_string(u), in, out, 4, 2, 1, Activation::relu));
    in = out;
  }
  out_channels = in;
  return v;
}

std::vector<Layer> generator_stages(const std::string& prefix, const ModelConfig& c, std::size_t in) {
  std::vector<Layer> v;
  for (std::size_t u = 0; u < c.stages(); ++u) {
    const std::size_t w = c.stage_width(u);
    v.push_back(deconv(prefix + ".stage" + std::to_string(u) + ".up", in, w, Activation::relu));
    v.push_back(conv(prefix + ".stage" + std::to_string(u) + ".conv", w, w, 3, 1, 1, Activation::relu));
    in = w;
  }
  return v;
}

}  // namespace

Architecture make_architecture(const ModelConfig& c) {
  c.validate();
  Architecture a;
  std::size_t enc_out = 0;
  a.content_encoder = encoder_convs("E_c", c, enc_out);
  a.content_head = dense("E_c.fc", enc_out * 16, 2 * c.content_dim, Activation::none);
  a.motion_encoder = encoder_convs("E_m", c, enc_out);
  a.motion_head = dense("E_m.fc", enc_out * 16, 2 * c.motion_dim, Activation::none);
  a.content_fc = dense("G_c.fc", c.content_dim + c.classes, c.base_channels() * 16, Activation::relu);
  a.motion_fc = dense("G_m.fc", c.content_dim + c.classes, c.base_channels() * 16, Activation::relu);

  auto split = [&](const std::vector<Layer>& flat) {
    std::vector<std::vector<Layer>> stages;
    for (std::size_t u = 0; u < c.stages(); ++u) stages.push_back({flat[2 * u], flat[2 * u + 1]});
    return stages;
  };
  a.content_stages = split(generator_stages("G_c", c, c.base_channels()));
  a.motion_stages = split(generator_stages("G_m", c, c.base_channels() + c.embedding_channels()));
  for (std::size_t s = 0; s < c.scales; ++s) {
    const std::size_t w = c.stage_width(c.first_tap() + s);
    const std::string id = std::to_string(s);
    a.trunks.push_back(conv("G_m.subnet" + id + ".trunk", w, w, 3, 1, 1, Activation::relu));
    a.branch_v.push_back(conv("G_m.subnet" + id + ".w_v", w, c.kernel, 3, 1, 1, Activation::none));
    a.branch_h.push_back(conv("G_m.subnet" + id + ".w_h", w, c.kernel, 3, 1, 1, Activation::none));
    a.branch_m.push_back(conv("G_m.subnet" + id + ".mask", w, 1, 3, 1, 1, Activation::none));
  }
  a.output = conv("G_c.out", c.stage_width(c.stages() - 1), c.channels, 3, 1, 1, Activation::tanh);
  a.lstm = {c.motion_dim / 16, c.ngf, 3};
  return a;
}

template <typename T>
Model<T> Model<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  Model<T> m;
  m.config = cfg;
  m.arch = make_architecture(cfg);
  const Architecture& a = m.arch;
  SeededRng rng(seed);
  for (const auto& l : a.content_encoder) init_layer(m.content, l, rng);
  init_layer(m.content, a.content_head, rng);
  init_layer(m.content, a.content_fc, rng);
  for (const auto& st : a.content_stages)
    for (const auto& l : st) init_layer(m.content, l, rng);
  init_layer(m.content, a.output, rng);

  for (const auto& l : a.motion_encoder) init_layer(m.motion, l, rng);
  init_layer(m.motion, a.motion_head, rng);
  init_layer(m.motion, a.motion_fc, rng);
  for (const auto& st : a.motion_stages)
    for (const auto& l : st) init_layer(m.motion, l, rng);
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    init_layer(m.motion, a.trunks[s], rng);
    for (const Layer* l : {&a.branch_v[s], &a.branch_h[s]}) {
      init_layer(m.motion, *l, rng);
      auto& w = m.motion.get(l->weight_name()).value;
      w = scale(w, T(0.1));
      m.motion.get(l->bias_name()).value[cfg.kernel / 2] = T(1);
    }
    init_layer(m.motion, a.branch_m[s], rng);
  }
  if (cfg.convlstm) {
    const ConvLstmSpec& ls = a.lstm;
    const std::size_t area = ls.kernel * ls.kernel;
    m.motion.add("lstm.w", xavier_uniform<T>(rng, ls.weight_shape(), (ls.in_channels + ls.hidden_channels) * area,
                                             4 * ls.hidden_channels * area));
    m.motion.add("lstm.b", Tensor<T>(ls.bias_shape()));
  }
  return m;
}

template <typename T>
Noise<T> Noise<T>::draw(SeededRng& rng, std::size_t batch, const ModelConfig& cfg) {
  Noise<T> n;
  n.content = randn<T>(rng, {batch, cfg.content_dim});
  n.motion = randn<T>(rng, {batch, cfg.motion_dim});
  return n;
}

template <typename T>
Noise<T> Noise<T>::zeros(std::size_t batch, const ModelConfig& cfg) {
  return {Tensor<T>({batch, cfg.content_dim}), Tensor<T>({batch, cfg.motion_dim})};
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json j{{"iteration", iteration}, {"phase", phase == Phase::content ? "content" : "motion"},
                   {"total", total}, {"kl", kl}};
  if (phase == Phase::content) {
    j["recon"] = recon;
  } else {
    j["consistency"] = consistency;
    j["video_recon"] = video_recon;
    j["lambda5"] = lambda5;
  }
  return j;
}

namespace {

template <typename T>
Tensor<T> onehot_planes(const std::vector<std::size_t>& labels, std::size_t K, std::size_t H, std::size_t W) {
  Tensor<T> t({labels.size(), K, H, W});
  for (std::size_t n = 0; n < labels.size(); ++n)
    for (std::size_t i = 0; i < H * W; ++i) t[(n * K + labels[n]) * H * W + i] = T(1);
  return t;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t N = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor<T> out({N, p + q});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < p; ++i) out[n * (p + q) + i] = a[n * p + i];
    for (std::size_t i = 0; i < q; ++i) out[n * (p + q) + p + i] = b[n * q + i];
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  const std::size_t N = a.dim(0), w = a.dim(1);
  Tensor<T> out({N, count});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < count; ++i) out[n * count + i] = a[n * w + begin + i];
  return out;
}

template <typename T>
Tensor<T> onehot_rows(const std::vector<std::size_t>& labels, std::size_t K) {
  Tensor<T> t({labels.size(), K});
  for (std::size_t n = 0; n < labels.size(); ++n) t[n * K + labels[n]] = T(1);
  return t;
}

template <typename T>
struct EncoderTrace {
  StackTrace<T> convs;
  Shape conv_shape;
  LayerTrace<T> head;
};

template <typename T>
GaussianParams<T> encode(const std::vector<Layer>& convs, const Layer& head, const ParamSet<T>& ps, const Tensor<T>& x,
                         const std::vector<std::size_t>& labels, std::size_t K, EncoderTrace<T>* tr) {
  const Tensor<T> in = concat_channels(x, onehot_planes<T>(labels, K, x.dim(2), x.dim(3)));
  const Tensor<T> h = stack_forward(convs, ps, in, tr ? &tr->convs : nullptr);
  if (tr) tr->conv_shape = h.shape();
  const Tensor<T> out = layer_forward(head, ps, h.reshaped({h.dim(0), h.size() / h.dim(0)}), tr ? &tr->head : nullptr);
  const std::size_t d = out.dim(1) / 2;
  return {slice_cols(out, 0, d), slice_cols(out, d, d)};
}

template <typename T>
void encode_backward(const std::vector<Layer>& convs, const Layer& head, ParamSet<T>& ps, const EncoderTrace<T>& tr,
                     const Tensor<T>& dmean, const Tensor<T>& dlogvar) {
  const Tensor<T> dflat = layer_backward(head, ps, tr.head, concat_cols(dmean, dlogvar), true);
  stack_backward(convs, ps, tr.convs, dflat.reshaped(tr.conv_shape), true);
}

template <typename T>
Tensor<T> reparameterize(const GaussianParams<T>& q, const Tensor<T>& eta) {
  Tensor<T> z(q.mean.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mean[i] + std::exp(T(0.5) * q.logvar[i]) * eta[i];
  return z;
}

// Gradients of z = mean + exp(logvar / 2) eta plus the weighted KL term.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> reparameterize_backward(const GaussianParams<T>& q, const Tensor<T>& eta,
                                                        const Tensor<T>& dz, const KlResult<T>& kl, T kl_weight) {
  Tensor<T> dmean(q.mean.shape()), dlogvar(q.mean.shape());
  for (std::size_t i = 0; i < dz.size(); ++i) {
    const T sigma = std::exp(T(0.5) * q.logvar[i]);
    dmean[i] = dz[i] + kl_weight * kl.dmean[i];
    dlogvar[i] = dz[i] * eta[i] * T(0.5) * sigma + kl_weight * kl.dlogvar[i];
  }
  return {dmean, dlogvar};
}

template <typename T>
struct DecodeTrace {
  LayerTrace<T> fc;
  std::vector<StackTrace<T>> stages;
  ContentPyramid<T> pyramid, refined;
  std::vector<Tensor<T>> convolved;
  LayerTrace<T> output;
};

template <typename T>
Tensor<T> latent_base(const Layer& fc, const ParamSet<T>& ps, const ModelConfig& c, const Tensor<T>& z,
                      const std::vector<std::size_t>& labels, LayerTrace<T>* tr) {
  const Tensor<T> h = layer_forward(fc, ps, concat_cols(z, onehot_rows<T>(labels, c.classes)), tr);
  return h.reshaped({h.dim(0), c.base_channels(), 4, 4});
}

// Content stages [first, U) and the output head. Pyramid levels are fused
// when `fields` is given; levels below `first` are skipped.
template <typename T>
Tensor<T> content_stages(const Model<T>& m, Tensor<T> h, std::size_t first, const MotionFields<T>* fields,
                         DecodeTrace<T>* tr) {
  const ModelConfig& c = m.config;
  if (tr) {
    tr->stages.assign(c.stages(), {});
    tr->pyramid.assign(c.scales, {});
    tr->refined.assign(c.scales, {});
    tr->convolved.assign(c.scales, {});
  }
  for (std::size_t u = first; u < c.stages(); ++u) {
    h = stack_forward(m.arch.content_stages[u], m.content, h, tr ? &tr->stages[u] : nullptr);
    if (u < c.first_tap()) continue;
    const std::size_t s = u - c.first_tap();
    if (tr) tr->pyramid[s] = h;
    if (fields) {
      try {
        Tensor<T> conv = adaptive_conv(h, fields->kernels[s]);
        h = mask_blend(h, conv, fields->masks[s]);
        if (tr) tr->convolved[s] = std::move(conv);
      } catch (const ValidationError& e) {
        throw ValidationError("fusion at scale " + std::to_string(s) + ": " + e.what());
      }
    }
    if (tr) tr->refined[s] = h;
  }
  return layer_forward(m.arch.output, m.content, h, tr ? &tr->output : nullptr);
}

template <typename T>
struct FieldGrads {
  std::vector<Tensor<T>> dv, dh, dmask;
};

// Backward of content_stages. Content parameter gradients are accumulated
// only with `param_grads`. `extra` adds gradients on the refined levels.
// With `stop_at_first_tap` the result is the gradient of the first pyramid
// level; otherwise it is the gradient of the stage-0 input.
template <typename T>
Tensor<T> content_stages_backward(Model<T>& m, const DecodeTrace<T>& tr, const Tensor<T>& dy, bool param_grads,
                                  const MotionFields<T>* fields, FieldGrads<T>* dfields,
                                  const std::vector<Tensor<T>>* extra, bool stop_at_first_tap) {
  const ModelConfig& c = m.config;
  Tensor<T> dh = layer_backward(m.arch.output, m.content, tr.output, dy, param_grads);
  if (dfields) *dfields = {std::vector<Tensor<T>>(c.scales), std::vector<Tensor<T>>(c.scales),
                           std::vector<Tensor<T>>(c.scales)};
  for (std::size_t u = c.stages(); u-- > 0;) {
    if (u >= c.first_tap()) {
      const std::size_t s = u - c.first_tap();
      if (extra) dh = add(dh, (*extra)[s]);
      if (fields) {
        const auto bg = mask_blend_backward(tr.pyramid[s], tr.convolved[s], fields->masks[s], dh);
        const auto cg = adaptive_conv_backward(tr.pyramid[s], fields->kernels[s], bg.dconvolved);
        if (dfields) {
          dfields->dv[s] = cg.dvertical;
          dfields->dh[s] = cg.dhorizontal;
          dfields->dmask[s] = bg.dmask;
        }
        dh = add(bg.dcontent, cg.dcontent);
      }
      if (stop_at_first_tap && u == c.first_tap()) return dh;
    }
    dh = stack_backward(m.arch.content_stages[u], m.content, tr.stages[u], dh, param_grads);
  }
  return dh;
}

template <typename T>
struct MotionTrace {
  LayerTrace<T> fc;
  std::vector<StackTrace<T>> stages;
  std::vector<LayerTrace<T>> trunk, bv, bh, bm;
};

template <typename T>
MotionFields<T> motion_generate(const Model<T>& m, const Tensor<T>& z_c, const std::vector<std::size_t>& labels,
                                const Tensor<T>& e_m, MotionTrace<T>* tr) {
  const ModelConfig& c = m.config;
  const Architecture& a = m.arch;
  if (tr) {
    tr->stages.assign(c.stages(), {});
    tr->trunk.assign(c.scales, {});
    tr->bv.assign(c.scales, {});
    tr->bh.assign(c.scales, {});
    tr->bm.assign(c.scales, {});
  }
  Tensor<T> g = concat_channels(latent_base<T>(a.motion_fc, m.motion, c, z_c, labels, tr ? &tr->fc : nullptr), e_m);
  MotionFields<T> f;
  for (std::size_t u = 0; u < c.stages(); ++u) {
    g = stack_forward(a.motion_stages[u], m.motion, g, tr ? &tr->stages[u] : nullptr);
    if (u < c.first_tap()) continue;
    const std::size_t s = u - c.first_tap();
    const Tensor<T> t = layer_forward(a.trunks[s], m.motion, g, tr ? &tr->trunk[s] : nullptr);
    f.kernels.push_back({layer_forward(a.branch_v[s], m.motion, t, tr ? &tr->bv[s] : nullptr),
                         layer_forward(a.branch_h[s], m.motion, t, tr ? &tr->bh[s] : nullptr)});
    f.masks.push_back(mask_activation(layer_forward(a.branch_m[s], m.motion, t, tr ? &tr->bm[s] : nullptr)));
  }
  return f;
}

// Returns the gradient of e_m.
template <typename T>
Tensor<T> motion_generate_backward(Model<T>& m, const MotionTrace<T>& tr, const MotionFields<T>& f,
                                   const FieldGrads<T>& df) {
  const ModelConfig& c = m.config;
  const Architecture& a = m.arch;
  Tensor<T> dg;
  bool have = false;
  for (std::size_t u = c.stages(); u-- > 0;) {
    if (u >= c.first_tap()) {
      const std::size_t s = u - c.first_tap();
      Tensor<T> dt = layer_backward(a.branch_v[s], m.motion, tr.bv[s], df.dv[s], true);
      dt = add(dt, layer_backward(a.branch_h[s], m.motion, tr.bh[s], df.dh[s], true));
      dt = add(dt, layer_backward(a.branch_m[s], m.motion, tr.bm[s], mask_activation_backward(f.masks[s], df.dmask[s]),
                                  true));
      const Tensor<T> dtap = layer_backward(a.trunks[s], m.motion, tr.trunk[s], dt, true);
      dg = have ? add(dg, dtap) : dtap;
      have = true;
    }
    if (have) dg = stack_backward(a.motion_stages[u], m.motion, tr.stages[u], dg, true);
  }
  const std::size_t base = c.base_channels();
  const Tensor<T> dbase = slice_channels(dg, 0, base);
  layer_backward(a.motion_fc, m.motion, tr.fc, dbase.reshaped({dbase.dim(0), base * 16}), true);
  return slice_channels(dg, base, dg.dim(1) - base);
}

template <typename T>
Tensor<T> motion_input(const ModelConfig& c, const Tensor<T>& z_m) {
  return z_m.reshaped({z_m.dim(0), c.motion_dim / 16, 4, 4});
}

template <typename T>
Tensor<T> embed_motion(const Model<T>& m, const Tensor<T>& z_m, ConvLstmCache<T>* cache) {
  const ModelConfig& c = m.config;
  const Tensor<T> x = motion_input(c, z_m);
  if (!c.convlstm) return x;
  const Tensor<T> zero({z_m.dim(0), c.ngf, 4, 4});
  return convlstm_step(x, zero, zero, m.motion.value("lstm.w"), m.motion.value("lstm.b"), m.arch.lstm, cache).h;
}

template <typename T>
Tensor<T> embed_motion_backward(Model<T>& m, const ConvLstmCache<T>& cache, const Tensor<T>& de) {
  const ModelConfig& c = m.config;
  if (!c.convlstm) return de.reshaped({de.dim(0), c.motion_dim});
  const auto g = convlstm_backward(cache, m.motion.value("lstm.w"), de, Tensor<T>(de.shape()), m.arch.lstm);
  m.motion.accumulate("lstm.w", g.dw);
  m.motion.accumulate("lstm.b", g.db);
  return g.dx.reshaped({de.dim(0), c.motion_dim});
}

void check_finite(double v, const char* term, const LossBreakdown& b) {
  if (std::isfinite(v)) return;
  throw NumericError(std::string("non-finite loss term '") + term + "' at iteration " + std::to_string(b.iteration) +
                     ": " + b.to_json().dump());
}

template <typename T>
void check_inputs(const ModelConfig& c, const Tensor<T>& x, const std::vector<std::size_t>& labels, const char* what) {
  const Shape want{labels.size(), c.channels, c.size, c.size};
  if (x.shape() != want)
    throw ValidationError(std::string(what) + ": expected shape " + shape_str(want) + ", got " + shape_str(x.shape()));
  for (auto k : labels)
    if (k >= c.classes)
      throw ValidationError(std::string(what) + ": label " + std::to_string(k) + " out of range for " +
                            std::to_string(c.classes) + " classes");
}

}  // namespace

template <typename T>
ContentPyramid<T> target_pyramid(const Model<T>& model, const Tensor<T>& next, const std::vector<std::size_t>& labels) {
  const ModelConfig& c = model.config;
  const auto q = encode<T>(model.arch.content_encoder, model.arch.content_head, model.content, next, labels, c.classes,
                        nullptr);
  DecodeTrace<T> tr;
  content_stages<T>(model, latent_base<T>(model.arch.content_fc, model.content, c, q.mean, labels, nullptr), 0,
                 nullptr, &tr);
  return tr.pyramid;
}

template <typename T>
NextFrame<T> forward_next_frame(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& dx,
                                const std::vector<std::size_t>& labels, const Noise<T>& noise,
                                const ForwardOptions& opts) {
  const ModelConfig& c = model.config;
  const Architecture& a = model.arch;
  check_inputs(c, x, labels, "forward_next_frame: frame");
  check_inputs(c, dx, labels, "forward_next_frame: difference map");
  NextFrame<T> out;
  out.content_q = encode<T>(a.content_encoder, a.content_head, model.content, x, labels, c.classes,
                         nullptr);
  out.motion_q = encode<T>(a.motion_encoder, a.motion_head, model.motion, dx, labels, c.classes,
                        nullptr);
  const Tensor<T> z_c = opts.zero_noise ? out.content_q.mean : reparameterize(out.content_q, noise.content);
  const Tensor<T> z_m = opts.zero_noise ? out.motion_q.mean : reparameterize(out.motion_q, noise.motion);
  out.fields = motion_generate<T>(model, z_c, labels, embed_motion<T>(model, z_m, nullptr), nullptr);
  if (opts.masks_zero)
    for (auto& mk : out.fields.masks) mk = Tensor<T>(mk.shape());
  const Tensor<T> base = latent_base<T>(a.content_fc, model.content, c, z_c, labels, nullptr);
  DecodeTrace<T> tr;
  out.frame = content_stages<T>(model, base, 0, &out.fields, &tr);
  out.pyramid = tr.pyramid;
  out.refined = tr.refined;
  out.reconstruction = content_stages<T>(model, base, 0, nullptr, nullptr);
  return out;
}

template <typename T>
NextFrame<T> forward_next_frame(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& dx,
                                const std::vector<std::size_t>& labels, SeededRng& rng, const ForwardOptions& opts) {
  const Noise<T> noise = opts.zero_noise ? Noise<T>::zeros(labels.size(), model.config)
                                         : Noise<T>::draw(rng, labels.size(), model.config);
  return forward_next_frame(model, x, dx, labels, noise, opts);
}

template <typename T>
LossBreakdown compute_gradients(Model<T>& model, const Batch<T>& batch, Phase phase, const Noise<T>& noise,
                                const LossWeights& w, std::size_t iteration, std::size_t total_iterations) {
  const ModelConfig& c = model.config;
  const Architecture& a = model.arch;
  const auto& labels = batch.labels;
  check_inputs(c, batch.cur, labels, "batch current frame");
  LossBreakdown out;
  out.phase = phase;
  out.iteration = iteration;

  if (phase == Phase::content) {
    model.content.zero_grad();
    EncoderTrace<T> etr;
    const auto q = encode<T>(a.content_encoder, a.content_head, model.content, batch.cur, labels, c.classes, &etr);
    const Tensor<T> z = reparameterize(q, noise.content);
    LayerTrace<T> fc_tr;
    const Tensor<T> base = latent_base<T>(a.content_fc, model.content, c, z, labels, &fc_tr);
    DecodeTrace<T> tr;
    const Tensor<T> recon = content_stages<T>(model, base, 0, nullptr, &tr);
    const auto rl = l2_loss(recon, batch.cur);
    const auto kl = kl_to_standard_normal(q);
    out.recon = static_cast<double>(rl.value);
    out.kl = static_cast<double>(kl.value);
    out.total = total_content_loss(w, out.recon, out.kl);
    check_finite(out.recon, "recon", out);
    check_finite(out.kl, "kl", out);
    check_finite(out.total, "total", out);

    const Tensor<T> dbase = content_stages_backward<T>(model, tr, scale(rl.grad, T(w.l1)), true,
                                                    nullptr, nullptr, nullptr,
                                                    false);
    const Tensor<T> din = layer_backward(a.content_fc, model.content, fc_tr,
                                         dbase.reshaped({dbase.dim(0), c.base_channels() * 16}), true);
    const auto [dmean, dlogvar] = reparameterize_backward(q, noise.content, slice_cols(din, 0, c.content_dim), kl, T(w.l2));
    encode_backward(a.content_encoder, a.content_head, model.content, etr, dmean, dlogvar);
    return out;
  }

  check_inputs(c, batch.prev, labels, "batch previous frame");
  check_inputs(c, batch.next, labels, "batch next frame");
  model.motion.zero_grad();
  const auto qc = encode<T>(a.content_encoder, a.content_head, model.content, batch.cur, labels, c.classes,
                         nullptr);
  const Tensor<T> z_c = reparameterize(qc, noise.content);
  const Tensor<T> dx = sub(batch.cur, batch.prev);
  EncoderTrace<T> etr;
  const auto qm = encode<T>(a.motion_encoder, a.motion_head, model.motion, dx, labels, c.classes, &etr);
  const Tensor<T> z_m = reparameterize(qm, noise.motion);
  ConvLstmCache<T> cache;
  const Tensor<T> e_m = embed_motion<T>(model, z_m, &cache);
  MotionTrace<T> mtr;
  const MotionFields<T> fields = motion_generate<T>(model, z_c, labels, e_m, &mtr);
  DecodeTrace<T> tr;
  const Tensor<T> frame =
      content_stages(model, latent_base<T>(a.content_fc, model.content, c, z_c, labels, nullptr), 0, &fields, &tr);
  const auto cons = content_consistency_loss(tr.refined, target_pyramid(model, batch.next, labels));
  const auto vr = l2_loss(frame, batch.next);
  const auto kl = kl_to_standard_normal(qm);
  out.consistency = static_cast<double>(cons.value);
  out.video_recon = static_cast<double>(vr.value);
  out.kl = static_cast<double>(kl.value);
  out.lambda5 = w.lambda5(iteration, total_iterations);
  out.total = total_motion_loss(w, out.consistency, out.video_recon, out.kl, iteration, total_iterations);
  check_finite(out.consistency, "consistency", out);
  check_finite(out.video_recon, "video_recon", out);
  check_finite(out.kl, "kl", out);
  check_finite(out.total, "total", out);

  std::vector<Tensor<T>> extra;
  for (const auto& g : cons.grads) extra.push_back(scale(g, T(w.l3)));
  FieldGrads<T> df;
  content_stages_backward(model, tr, scale(vr.grad, T(w.l4)), false, &fields, &df, &extra, true);
  const Tensor<T> de = motion_generate_backward(model, mtr, fields, df);
  const Tensor<T> dz = embed_motion_backward(model, cache, de);
  const auto [dmean, dlogvar] = reparameterize_backward(qm, noise.motion, dz, kl, T(out.lambda5));
  encode_backward(a.motion_encoder, a.motion_head, model.motion, etr, dmean, dlogvar);
  return out;
}

TensorF rollout(const Model<float>& model, std::size_t label, SeededRng& rng, std::size_t frames, std::size_t heatup,
                bool masks_zero) {
  const ModelConfig& c = model.config;
  const Architecture& a = model.arch;
  if (label >= c.classes) throw ValidationError("rollout: label out of range");
  if (frames < 1) throw ValidationError("rollout: need at least one frame");
  const std::vector<std::size_t> labels{label};
  const TensorF z_c = randn<float>(rng, {1, c.content_dim});
  DecodeTrace<float> tr;
  std::vector<TensorF> out;
  out.push_back(content_stages<float>(model, latent_base<float>(a.content_fc, model.content, c, z_c, labels, nullptr), 0,
                               nullptr, &tr));
  TensorF carried = tr.pyramid[0];
  TensorF h({1, c.ngf, 4, 4}), cell({1, c.ngf, 4, 4});
  while (out.size() < frames + heatup) {
    const TensorF x = motion_input(c, randn<float>(rng, {1, c.motion_dim}));
    TensorF e_m = x;
    if (c.convlstm) {
      auto st = convlstm_step(x, h, cell, model.motion.value("lstm.w"), model.motion.value("lstm.b"), a.lstm);
      h = st.h;
      cell = st.c;
      e_m = st.h;
    }
    MotionFields<float> f = motion_generate<float>(model, z_c, labels, e_m, nullptr);
    if (masks_zero)
      for (auto& mk : f.masks) mk = TensorF(mk.shape());
    carried = mask_blend(carried, adaptive_conv(carried, f.kernels[0]), f.masks[0]);
    out.push_back(content_stages<float>(model, carried, c.first_tap() + 1, &f, nullptr));
  }
  TensorF clip({frames, c.channels, c.size, c.size});
  const std::size_t per = c.channels * c.size * c.size;
  for (std::size_t t = 0; t < frames; ++t) std::copy_n(out[heatup + t].raw(), per, clip.raw() + t * per);
  return clip;
}

#define TSVAN_INSTANTIATE(T)                                                                                       \
  template struct Model<T>;                                                                                        \
  template struct Noise<T>;                                                                                        \
  template NextFrame<T> forward_next_frame<T>(const Model<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                              const std::vector<std::size_t>&, SeededRng&, const ForwardOptions&); \
  template NextFrame<T> forward_next_frame<T>(const Model<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                              const std::vector<std::size_t>&, const Noise<T>&,                    \
                                              const ForwardOptions&);                                              \
  template LossBreakdown compute_gradients<T>(Model<T>&, const Batch<T>&, Phase, const Noise<T>&,                  \
                                              const LossWeights&, std::size_t, std::size_t);                       \
  template ContentPyramid<T> target_pyramid<T>(const Model<T>&, const Tensor<T>&, const std::vector<std::size_t>&);
TSVAN_INSTANTIATE(float)
TSVAN_INSTANTIATE(double)
#undef TSVAN_INSTANTIATE

}  // namespace tsvan
