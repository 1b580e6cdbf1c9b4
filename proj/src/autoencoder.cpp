#include "demea/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "demea/checkpoint.hpp"
#include "demea/parallel.hpp"

namespace demea {

using nlohmann::json;

std::string to_string(ConvType t) { return t == ConvType::Spiral ? "spiral" : "spectral"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Edl:
      return "EDL";
    case Variant::Gl:
      return "GL";
    case Variant::Lp:
      return "LP";
  }
  return "?";
}

ConvType parse_conv_type(const std::string& s) {
  if (s == "spiral") return ConvType::Spiral;
  if (s == "spectral") return ConvType::Spectral;
  throw Error("unknown conv_type '" + s + "' (expected spiral or spectral)");
}

Variant parse_variant(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "EDL") return Variant::Edl;
  if (u == "GL") return Variant::Gl;
  if (u == "LP") return Variant::Lp;
  throw Error("unknown training variant '" + s + "' (expected EDL, GL or LP)");
}

void ModelConfig::validate() const {
  if (latent_dim < 1) throw Error("latent_dim must be at least 1");
  for (auto w : encoder_widths)
    if (w < 1) throw Error("encoder widths must be positive");
  for (auto w : decoder_widths)
    if (w < 1) throw Error("decoder widths must be positive");
  if (chebyshev_order < 1 || refine_chebyshev_order < 1) throw Error("Chebyshev orders must be at least 1");
  if (graph_level != 0 && graph_level != 1 && graph_level != 2) throw Error("graph_level must be 1 or 2");
  if (batch_size < 1) throw Error("batch_size must be at least 1");
  if (checkpoint_every < 1) throw Error("checkpoint_every must be at least 1");
  if (!(adam.learning_rate > 0.0)) throw Error("learning rate must be positive");
}

ModelConfig config_from_json(const std::string& text) {
  ModelConfig c;
  json j;
  try {
    j = json::parse(text);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("conv_type")) c.conv_type = parse_conv_type(j.at("conv_type").get<std::string>());
    if (j.contains("training_variant")) c.variant = parse_variant(j.at("training_variant").get<std::string>());
    c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
    c.decoder_widths = j.value("decoder_widths", c.decoder_widths);
    c.spiral_length = j.value("spiral_length", c.spiral_length);
    c.chebyshev_order = j.value("chebyshev_order", c.chebyshev_order);
    c.refine_chebyshev_order = j.value("refine_chebyshev_order", c.refine_chebyshev_order);
    c.graph_level = j.value("graph_level", c.graph_level);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.reshuffle_each_epoch = j.value("reshuffle_each_epoch", c.reshuffle_each_epoch);
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
    c.seed = j.value("seed", c.seed);
    c.hierarchy = j.value("hierarchy", c.hierarchy);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  c.validate();
  return c;
}

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["latent_dim"] = c.latent_dim;
  j["conv_type"] = to_string(c.conv_type);
  j["training_variant"] = to_string(c.variant);
  j["encoder_widths"] = c.encoder_widths;
  j["decoder_widths"] = c.decoder_widths;
  j["spiral_length"] = c.spiral_length;
  j["chebyshev_order"] = c.chebyshev_order;
  j["refine_chebyshev_order"] = c.refine_chebyshev_order;
  j["graph_level"] = c.graph_level;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["max_steps"] = c.max_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["reshuffle_each_epoch"] = c.reshuffle_each_epoch;
  j["learning_rate"] = c.adam.learning_rate;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["seed"] = c.seed;
  j["hierarchy"] = c.hierarchy;
  return j.dump(2);
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(config) << '\n';
}

std::shared_ptr<const ModelTopology> make_topology(HierarchyArtifact artifact) {
  const int gl = artifact.hierarchy.graph_level;
  if (gl != 1 && gl != 2) throw Error("the model needs a hierarchy with a graph on level 1 or 2");
  if (static_cast<std::size_t>(gl) >= artifact.hierarchy.levels.size()) throw Error("graph level beyond hierarchy");
  auto topo = std::make_shared<ModelTopology>();
  const Mesh& mesh = artifact.hierarchy.levels.front().mesh;
  SkinningBinding binding = bind_skinning(mesh, artifact.graph, gl);
  topo->edl = EmbeddedDeformation(mesh.vertices(), artifact.graph, std::move(binding));
  topo->artifact = std::move(artifact);
  return topo;
}

std::vector<Vec3> reconstruct_from_translations(const ModelTopology& topo, std::span<const Vec3> translations) {
  const auto& g = topo.graph().node_positions;
  require_shape(translations.size() == g.size(), "reconstruct: one translation per graph node required");
  std::vector<Vec3> moved(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) moved[l] = g[l] + translations[l];
  const auto rotations = local_procrustes_rotations(topo.graph(), moved);
  return topo.edl.forward(rotations, translations);
}

// ---------------------------------------------------------------------------------------

template <typename Real>
struct Autoencoder<Real>::Trace {
  std::vector<Tensor<Real>> enc_support, enc_pre;
  std::vector<Real> enc_flat, enc_fc_pre;
  std::vector<Real> latent, dec_fc_pre;
  std::vector<Tensor<Real>> up_support, up_pre, refine_support, refine_pre;
  Tensor<Real> out_support;
};

template <typename Real>
Autoencoder<Real>::Autoencoder(std::shared_ptr<const ModelTopology> topology, ModelConfig config)
    : topo_(std::move(topology)), config_(std::move(config)) {
  config_.validate();
  const auto& levels = topo_->artifact.hierarchy.levels;
  const std::size_t n = levels.size();
  const int gl = topo_->graph_level();
  if (config_.graph_level != 0 && config_.graph_level != gl) {
    throw Error("config graph_level " + std::to_string(config_.graph_level) + " does not match hierarchy graph level " +
                std::to_string(gl));
  }
  if (n < 2) throw Error("the model needs at least two hierarchy levels");
  if (config_.encoder_widths.size() < n - 1) {
    throw Error("need " + std::to_string(n - 1) + " encoder widths for a " + std::to_string(n) + "-level hierarchy");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const SpiralSupport& s = topo_->artifact.spirals.at(k);
    spirals_.push_back(config_.spiral_length > 0 ? s.resized(config_.spiral_length) : s);
  }

  const bool spiral = config_.conv_type == ConvType::Spiral;
  auto add_conv = [&](const std::string& name, std::size_t level, std::size_t f_in, std::size_t f_out,
                      std::size_t order) {
    Conv c{level, f_in, f_out, order, 0, 0};
    const auto S = static_cast<std::uint32_t>(spirals_[level].length);
    if (spiral) {
      c.weight = params_.add(name + ".weight", {static_cast<std::uint32_t>(f_out), static_cast<std::uint32_t>(S * f_in)});
    } else {
      c.weight = params_.add(name + ".weight", {static_cast<std::uint32_t>(order), static_cast<std::uint32_t>(f_in),
                                                static_cast<std::uint32_t>(f_out)});
    }
    c.bias = params_.add(name + ".bias", {static_cast<std::uint32_t>(f_out)});
    return c;
  };

  const auto& ew = config_.encoder_widths;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    encoder_.push_back(add_conv("enc.conv" + std::to_string(k), k, k == 0 ? 3 : ew[k - 1], ew[k],
                                config_.chebyshev_order));
  }
  const std::size_t coarsest = n - 1;
  const std::size_t flat = levels[coarsest].vertex_count() * ew[n - 2];
  const auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  enc_fc_w_ = params_.add("enc.fc.weight", {u32(config_.latent_dim), u32(flat)});
  enc_fc_b_ = params_.add("enc.fc.bias", {u32(config_.latent_dim)});

  const std::size_t modules = upsampling_modules();
  std::vector<std::size_t> dw = config_.decoder_widths;
  if (dw.empty()) {
    for (std::size_t i = 0; i <= modules; ++i) dw.push_back(ew[coarsest - 1 - i]);
  }
  if (dw.size() != modules + 1) {
    throw Error("need " + std::to_string(modules + 1) + " decoder widths (one for the fully connected layer and one "
                "per upsampling module)");
  }
  coarse_channels_ = dw[0];
  dec_fc_w_ = params_.add("dec.fc.weight", {u32(levels[coarsest].vertex_count() * dw[0]), u32(config_.latent_dim)});
  dec_fc_b_ = params_.add("dec.fc.bias", {u32(levels[coarsest].vertex_count() * dw[0])});
  for (std::size_t j = 0; j < modules; ++j) {
    decoder_up_.push_back(
        add_conv("dec.up" + std::to_string(j), coarsest - 1 - j, dw[j], dw[j + 1], config_.chebyshev_order));
  }
  const auto g = static_cast<std::size_t>(gl);
  refine_.push_back(add_conv("dec.refine0", g, dw[modules], dw[modules], config_.chebyshev_order));
  refine_.push_back(add_conv("dec.refine1", g, dw[modules], dw[modules], config_.refine_chebyshev_order));
  out_ = add_conv("dec.out", g, dw[modules], output_channels(), config_.refine_chebyshev_order);
}

template <typename Real>
std::size_t Autoencoder<Real>::output_channels() const {
  return config_.variant == Variant::Edl ? 6 : 3;
}

template <typename Real>
std::size_t Autoencoder<Real>::upsampling_modules() const {
  return topo_->level_count() - 1 - static_cast<std::size_t>(topo_->graph_level());
}

template <typename Real>
void Autoencoder<Real>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<Real>& p = params_[i];
    std::fill(p.value.begin(), p.value.end(), Real(0));
    std::fill(p.grad.begin(), p.grad.end(), Real(0));
    std::fill(p.m.begin(), p.m.end(), Real(0));
    std::fill(p.v.begin(), p.v.end(), Real(0));
    if (p.shape.size() < 2 || p.name.starts_with("dec.out.")) continue;
    // Dense and spiral weights are out x in; Chebyshev coefficients are K x in x out.
    const bool dense = p.shape.size() == 2;
    const std::size_t fan_in = dense ? p.shape[1] : std::size_t{p.shape[0]} * p.shape[1];
    const std::size_t fan_out = dense ? p.shape[0] : p.shape[2];
    glorot_uniform<Real>(p.value, fan_in, fan_out, rng);
  }
  params_.set_step(0);
}

template <typename Real>
Tensor<Real> Autoencoder<Real>::conv_forward(const Conv& c, const Tensor<Real>& x, Tensor<Real>* support_cache) const {
  if (config_.conv_type == ConvType::Spiral) {
    return spiral_conv<Real>(spirals_[c.level], x, params_.value(c.weight), params_.value(c.bias), c.f_out,
                             support_cache);
  }
  return spectral_conv<Real>(topo_->artifact.laplacians[c.level], x, params_.value(c.weight), params_.value(c.bias),
                             c.order, c.f_out, support_cache);
}

template <typename Real>
void Autoencoder<Real>::conv_backward(const Conv& c, const Tensor<Real>& support_cache, const Tensor<Real>& grad_y,
                                      GradientBuffer<Real>* grad, Tensor<Real>* grad_x) const {
  std::vector<Real> scratch_w, scratch_b;
  std::span<Real> gw, gb;
  if (grad != nullptr) {
    gw = (*grad)[c.weight];
    gb = (*grad)[c.bias];
  } else {
    scratch_w.assign(params_[c.weight].size(), Real(0));
    scratch_b.assign(params_[c.bias].size(), Real(0));
    gw = scratch_w;
    gb = scratch_b;
  }
  if (config_.conv_type == ConvType::Spiral) {
    spiral_conv_backward<Real>(spirals_[c.level], support_cache, grad_y, params_.value(c.weight), gw, gb, grad_x);
  } else {
    spectral_conv_backward<Real>(topo_->artifact.laplacians[c.level], support_cache, grad_y, params_.value(c.weight),
                                 c.order, gw, gb, grad_x);
  }
}

template <typename Real>
std::vector<Real> Autoencoder<Real>::encode_traced(std::span<const Vec3> vertices, Trace* trace) const {
  const auto& levels = topo_->artifact.hierarchy.levels;
  require_shape(vertices.size() == levels.front().vertex_count(),
                "encode: expected " + std::to_string(levels.front().vertex_count()) + " vertices, got " +
                    std::to_string(vertices.size()));
  // The encoder sees per-vertex displacements from the template.
  Tensor<Real> x(vertices.size(), 3);
  const auto& tmpl = topo_->template_mesh().vertices();
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) x(i, a) = static_cast<Real>(vertices[i][a] - tmpl[i][a]);
  }
  for (std::size_t k = 0; k < encoder_.size(); ++k) {
    Tensor<Real> support;
    Tensor<Real> h = conv_forward(encoder_[k], x, trace ? &support : nullptr);
    if (trace) {
      trace->enc_support.push_back(std::move(support));
      trace->enc_pre.push_back(h);
    }
    elu_inplace<Real>(h.data);
    x = downsample(levels[k + 1], h);
  }
  std::vector<Real> pre = fully_connected<Real>(x.data, params_.value(enc_fc_w_), params_.value(enc_fc_b_));
  std::vector<Real> latent = pre;
  elu_inplace<Real>(latent);
  if (trace) {
    trace->enc_flat = std::move(x.data);
    trace->enc_fc_pre = std::move(pre);
  }
  return latent;
}

template <typename Real>
Tensor<Real> Autoencoder<Real>::decode_traced(std::span<const Real> latent, Trace* trace) const {
  require_shape(latent.size() == config_.latent_dim, "decode: latent dimension " + std::to_string(latent.size()) +
                                                         " does not match the configured " +
                                                         std::to_string(config_.latent_dim));
  const auto& levels = topo_->artifact.hierarchy.levels;
  const std::size_t coarsest = levels.size() - 1;
  std::vector<Real> pre = fully_connected<Real>(latent, params_.value(dec_fc_w_), params_.value(dec_fc_b_));
  Tensor<Real> h(levels[coarsest].vertex_count(), coarse_channels_);
  h.data = pre;
  elu_inplace<Real>(h.data);
  if (trace) {
    trace->latent.assign(latent.begin(), latent.end());
    trace->dec_fc_pre = std::move(pre);
  }
  for (const Conv& c : decoder_up_) {
    const Tensor<Real> u = upsample(levels[c.level + 1], h);
    Tensor<Real> support;
    h = conv_forward(c, u, trace ? &support : nullptr);
    if (trace) {
      trace->up_support.push_back(std::move(support));
      trace->up_pre.push_back(h);
    }
    elu_inplace<Real>(h.data);
  }
  for (const Conv& c : refine_) {
    Tensor<Real> support;
    Tensor<Real> next = conv_forward(c, h, trace ? &support : nullptr);
    if (trace) {
      trace->refine_support.push_back(std::move(support));
      trace->refine_pre.push_back(next);
    }
    elu_inplace<Real>(next.data);
    h = std::move(next);
  }
  return conv_forward(out_, h, trace ? &trace->out_support : nullptr);
}

template <typename Real>
std::vector<Real> Autoencoder<Real>::decoder_backward(const Trace& trace, const Tensor<Real>& grad_out,
                                                      GradientBuffer<Real>* grad) const {
  const auto& levels = topo_->artifact.hierarchy.levels;
  Tensor<Real> g;
  conv_backward(out_, trace.out_support, grad_out, grad, &g);
  for (std::size_t r = refine_.size(); r-- > 0;) {
    elu_backward<Real>(trace.refine_pre[r].data, g.data);
    Tensor<Real> gx;
    conv_backward(refine_[r], trace.refine_support[r], g, grad, &gx);
    g = std::move(gx);
  }
  for (std::size_t j = decoder_up_.size(); j-- > 0;) {
    elu_backward<Real>(trace.up_pre[j].data, g.data);
    Tensor<Real> gx;
    conv_backward(decoder_up_[j], trace.up_support[j], g, grad, &gx);
    g = upsample_backward(levels[decoder_up_[j].level + 1], gx);
  }
  elu_backward<Real>(trace.dec_fc_pre, g.data);
  std::vector<Real> grad_latent(config_.latent_dim, Real(0));
  std::vector<Real> sw, sb;
  std::span<Real> gw, gb;
  if (grad != nullptr) {
    gw = (*grad)[dec_fc_w_];
    gb = (*grad)[dec_fc_b_];
  } else {
    sw.assign(params_[dec_fc_w_].size(), Real(0));
    sb.assign(params_[dec_fc_b_].size(), Real(0));
    gw = sw;
    gb = sb;
  }
  fully_connected_backward<Real>(trace.latent, g.data, params_.value(dec_fc_w_), gw, gb, grad_latent);
  return grad_latent;
}

template <typename Real>
void Autoencoder<Real>::encoder_backward(const Trace& trace, std::span<const Real> grad_latent,
                                         GradientBuffer<Real>* grad) const {
  const auto& levels = topo_->artifact.hierarchy.levels;
  std::vector<Real> g(grad_latent.begin(), grad_latent.end());
  elu_backward<Real>(trace.enc_fc_pre, g);
  const std::size_t coarsest = levels.size() - 1;
  Tensor<Real> gx(levels[coarsest].vertex_count(), config_.encoder_widths[coarsest - 1]);
  fully_connected_backward<Real>(trace.enc_flat, g, params_.value(enc_fc_w_), (*grad)[enc_fc_w_],
                                 (*grad)[enc_fc_b_], gx.data);
  for (std::size_t k = encoder_.size(); k-- > 0;) {
    Tensor<Real> gh = downsample_backward(levels[k + 1], gx);
    elu_backward<Real>(trace.enc_pre[k].data, gh.data);
    Tensor<Real> next;
    conv_backward(encoder_[k], trace.enc_support[k], gh, grad, k > 0 ? &next : nullptr);
    gx = std::move(next);
  }
}

template <typename Real>
double Autoencoder<Real>::output_loss(const Tensor<Real>& out, std::span<const Vec3> target,
                                      Tensor<Real>* grad_out) const {
  const ModelTopology& topo = *topo_;
  const std::size_t L = topo.graph().node_count();
  require_shape(out.rows == L && out.cols == output_channels(), "decoder output has the wrong shape");
  if (grad_out) *grad_out = Tensor<Real>(out.rows, out.cols);
  auto column3 = [&](std::size_t offset) {
    std::vector<Vec3> v(L);
    for (std::size_t l = 0; l < L; ++l) {
      v[l] = Vec3(static_cast<double>(out(l, offset)), static_cast<double>(out(l, offset + 1)),
                  static_cast<double>(out(l, offset + 2)));
    }
    return v;
  };
  auto scatter = [&](std::span<const Vec3> g, std::size_t offset) {
    for (std::size_t l = 0; l < L; ++l) {
      for (int a = 0; a < 3; ++a) (*grad_out)(l, offset + a) = static_cast<Real>(g[l][a]);
    }
  };

  switch (config_.variant) {
    case Variant::Edl: {
      NodeTransforms t;
      t.euler_angles = column3(0);
      t.translations = column3(3);
      EdlCache cache;
      const auto v = topo.edl.forward(t, &cache);
      const LossResult loss = l1_vertex_loss(v, target);
      if (grad_out) {
        const EdlGradients g = topo.edl.backward(cache, loss.gradient);
        scatter(g.euler_angles, 0);
        scatter(g.translations, 3);
      }
      return loss.value;
    }
    case Variant::Gl: {
      auto positions = column3(0);
      for (std::size_t l = 0; l < L; ++l) positions[l] += topo.graph().node_positions[l];
      const LossResult loss = l1_graph_loss(positions, target, topo.graph().node_to_vertex);
      if (grad_out) scatter(loss.gradient, 0);
      return loss.value;
    }
    case Variant::Lp: {
      const auto t = column3(0);
      const auto v = reconstruct_from_translations(topo, t);
      const LossResult loss = l1_vertex_loss(v, target);
      // Rotations are treated as constants: only the translation path carries gradient.
      if (grad_out) scatter(topo.edl.translation_backward(loss.gradient), 0);
      return loss.value;
    }
  }
  return 0.0;
}

template <typename Real>
std::vector<Real> Autoencoder<Real>::encode(std::span<const Vec3> vertices) const {
  return encode_traced(vertices, nullptr);
}

template <typename Real>
Tensor<Real> Autoencoder<Real>::decode(std::span<const Real> latent) const {
  return decode_traced(latent, nullptr);
}

template <typename Real>
NodeTransforms Autoencoder<Real>::decode_transforms(std::span<const Real> latent) const {
  const Tensor<Real> out = decode(latent);
  const std::size_t L = out.rows;
  NodeTransforms t(L);
  const std::size_t toff = config_.variant == Variant::Edl ? 3 : 0;
  for (std::size_t l = 0; l < L; ++l) {
    for (int a = 0; a < 3; ++a) t.translations[l][a] = static_cast<double>(out(l, toff + a));
  }
  if (config_.variant == Variant::Edl) {
    for (std::size_t l = 0; l < L; ++l) {
      for (int a = 0; a < 3; ++a) t.euler_angles[l][a] = static_cast<double>(out(l, a));
    }
  } else {
    std::vector<Vec3> moved(L);
    for (std::size_t l = 0; l < L; ++l) moved[l] = topo_->graph().node_positions[l] + t.translations[l];
    const auto rotations = local_procrustes_rotations(topo_->graph(), moved);
    for (std::size_t l = 0; l < L; ++l) t.euler_angles[l] = rotation_to_euler(rotations[l]);
  }
  return t;
}

template <typename Real>
std::vector<Vec3> Autoencoder<Real>::reconstruct(std::span<const Real> latent) const {
  const Tensor<Real> out = decode(latent);
  const std::size_t L = out.rows;
  if (config_.variant == Variant::Edl) {
    NodeTransforms t(L);
    for (std::size_t l = 0; l < L; ++l) {
      for (int a = 0; a < 3; ++a) {
        t.euler_angles[l][a] = static_cast<double>(out(l, a));
        t.translations[l][a] = static_cast<double>(out(l, 3 + a));
      }
    }
    return topo_->edl.forward(t);
  }
  std::vector<Vec3> t(L);
  for (std::size_t l = 0; l < L; ++l) {
    t[l] = Vec3(static_cast<double>(out(l, 0)), static_cast<double>(out(l, 1)), static_cast<double>(out(l, 2)));
  }
  return reconstruct_from_translations(*topo_, t);
}

template <typename Real>
double Autoencoder<Real>::sample_loss(std::span<const Vec3> input, std::span<const Vec3> target) const {
  return output_loss(decode(encode(input)), target, nullptr);
}

template <typename Real>
double Autoencoder<Real>::sample_gradients(std::span<const Vec3> input, std::span<const Vec3> target,
                                           GradientBuffer<Real>& grad) const {
  Trace trace;
  const std::vector<Real> latent = encode_traced(input, &trace);
  const Tensor<Real> out = decode_traced(latent, &trace);
  Tensor<Real> grad_out;
  const double loss = output_loss(out, target, &grad_out);
  const std::vector<Real> grad_latent = decoder_backward(trace, grad_out, &grad);
  encoder_backward(trace, grad_latent, &grad);
  return loss;
}

template <typename Real>
double Autoencoder<Real>::latent_loss(std::span<const Real> latent, std::span<const Vec3> target,
                                      std::vector<Real>* grad_latent, GradientBuffer<Real>* grad) const {
  Trace trace;
  const Tensor<Real> out = decode_traced(latent, &trace);
  Tensor<Real> grad_out;
  const bool need_grad = grad_latent != nullptr || grad != nullptr;
  const double loss = output_loss(out, target, need_grad ? &grad_out : nullptr);
  if (need_grad) {
    auto gl = decoder_backward(trace, grad_out, grad);
    if (grad_latent) *grad_latent = std::move(gl);
  }
  return loss;
}

template <typename Real>
double Autoencoder<Real>::batch_gradients(std::span<const std::vector<Vec3>> inputs,
                                          std::span<const std::vector<Vec3>> targets,
                                          std::span<const std::size_t> batch) {
  require_shape(inputs.size() == targets.size(), "batch_gradients: inputs and targets differ in count");
  require_shape(!batch.empty(), "batch_gradients: empty batch");
  std::vector<GradientBuffer<Real>> buffers(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    buffers[i] = params_.make_gradient_buffer();
    const std::size_t s = batch[i];
    require_shape(s < inputs.size(), "batch_gradients: sample index out of range");
    losses[i] = sample_gradients(inputs[s], targets[s], buffers[i]);
  });
  params_.zero_grad();
  const Real scale = Real(1) / static_cast<Real>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    params_.accumulate(buffers[i], scale);
    loss += losses[i];
  }
  return loss / static_cast<double>(batch.size());
}

template <typename Real>
template <typename Other>
Autoencoder<Other> Autoencoder<Real>::cast() const {
  Autoencoder<Other> out(topo_, config_);
  out.params_ = params_.template cast<Other>();
  return out;
}

template class Autoencoder<float>;
template class Autoencoder<double>;
template Autoencoder<double> Autoencoder<float>::cast<double>() const;
template Autoencoder<float> Autoencoder<double>::cast<float>() const;

// ---------------------------------------------------------------------------------------

namespace {

bool all_finite(const ParameterStore<float>& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (float g : store[i].grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<LossRecord> train(Autoencoder<float>& model, std::span<const std::vector<Vec3>> dataset,
                              const TrainOptions& options) {
  const ModelConfig& cfg = model.config();
  const Mesh& tmpl = model.topology().template_mesh();
  if (dataset.empty()) throw Error("train: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].size() != tmpl.vertex_count()) {
      throw Error("train: sample " + std::to_string(i) + " has " + std::to_string(dataset[i].size()) +
                  " vertices, template has " + std::to_string(tmpl.vertex_count()));
    }
  }
  if (options.output_dir) std::filesystem::create_directories(*options.output_dir);

  // Batches are cut from a stream of passes over the shuffled dataset, so every batch holds
  // exactly batch_size samples even when the dataset size is not a multiple of it.
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0, epoch = 0;
  const std::size_t total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : (cfg.epochs * dataset.size() + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<LossRecord> history;
  auto& params = model.parameters();
  auto write_outputs = [&] {
    if (!options.output_dir) return;
    save_checkpoint(params, *options.output_dir / "ckpt_latest.bin");
    write_loss_csv(history, *options.output_dir / "loss.csv");
  };

  std::vector<std::size_t> batch(cfg.batch_size);
  for (std::size_t step = 0; step < total_steps; ++step) {
    const std::size_t batch_epoch = epoch;
    bool epoch_done = false;
    for (std::size_t& s : batch) {
      if (cursor == order.size()) {
        if (cfg.reshuffle_each_epoch) std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      s = order[cursor++];
      if (cursor == order.size()) {
        ++epoch;
        epoch_done = true;
      }
    }
    const double loss = model.batch_gradients(dataset, dataset, batch);
    if (!std::isfinite(loss) || !all_finite(params)) {
      std::ostringstream msg;
      msg << "non-finite training loss at step " << params.step() + 1 << " (epoch " << batch_epoch << ", loss "
          << loss << ", samples";
      for (std::size_t s : batch) msg << ' ' << s;
      msg << "); last finite loss " << (history.empty() ? std::string("none") : std::to_string(history.back().loss));
      write_outputs();
      throw TrainingError(msg.str());
    }
    adam_step(params, cfg.adam);
    history.push_back({params.step(), batch_epoch, loss});
    if (options.on_step) options.on_step(history.back());
    if (epoch_done && epoch % cfg.checkpoint_every == 0) write_outputs();
  }
  write_outputs();
  return history;
}

void write_loss_csv(std::span<const LossRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,loss\n";
  out.precision(9);
  for (const LossRecord& r : history) out << r.step << ',' << r.epoch << ',' << r.loss << '\n';
}

double mean_l1_error(const Autoencoder<float>& model, std::span<const std::vector<Vec3>> dataset) {
  std::vector<double> err(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    err[i] = l1_vertex_loss(model.autoencode(dataset[i]), dataset[i]).value;
  });
  return std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(dataset.size());
}

}  // namespace demea
