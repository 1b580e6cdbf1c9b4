#pragma once
// Mesh autoencoder: graph-convolutional encoder down the hierarchy to a latent code,
// decoder back up to the deformation graph, and the embedded deformation layer that
// turns decoded node features into mesh vertices.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "demea/edl.hpp"
#include "demea/error.hpp"
#include "demea/graph_conv.hpp"
#include "demea/hierarchy_io.hpp"
#include "demea/nn.hpp"

namespace demea {

enum class ConvType { Spiral, Spectral };
/// Edl: the decoder regresses Euler angles and translations.
/// Gl: the decoder regresses node positions, supervised directly on the graph.
/// Lp: the decoder regresses translations; rotations come from local Procrustes.
enum class Variant { Edl, Gl, Lp };

std::string to_string(ConvType t);
std::string to_string(Variant v);
ConvType parse_conv_type(const std::string& s);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  std::size_t latent_dim = 8;
  ConvType conv_type = ConvType::Spiral;
  Variant variant = Variant::Edl;
  std::vector<std::size_t> encoder_widths{16, 32, 64, 128};
  std::vector<std::size_t> decoder_widths;  // empty: mirror the encoder
  std::size_t spiral_length = 0;            // 0: per-level default stored with the hierarchy
  std::size_t chebyshev_order = 6;
  std::size_t refine_chebyshev_order = 2;  // last two decoder convolutions
  int graph_level = 0;                     // 0: take it from the hierarchy
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::size_t checkpoint_every = 1;  // epochs between checkpoints when writing to disk
  bool reshuffle_each_epoch = true;  // false: one seeded shuffle, then cycle through it
  AdamSettings adam;
  std::uint64_t seed = 1;
  std::string hierarchy;  // artifact directory, relative to the config file

  /// Fails on out-of-range values.
  void validate() const;
};

ModelConfig config_from_json(const std::string& text);
std::string config_to_json(const ModelConfig& config);
ModelConfig load_config(const std::filesystem::path& path);
void save_config(const ModelConfig& config, const std::filesystem::path& path);

/// Everything fixed by the template: hierarchy, supports and the skinning binding.
struct ModelTopology {
  HierarchyArtifact artifact;
  EmbeddedDeformation edl;

  const Mesh& template_mesh() const { return artifact.hierarchy.levels.front().mesh; }
  const DeformationGraph& graph() const { return artifact.graph; }
  int graph_level() const { return artifact.hierarchy.graph_level; }
  std::size_t level_count() const { return artifact.hierarchy.levels.size(); }
};

std::shared_ptr<const ModelTopology> make_topology(HierarchyArtifact artifact);

/// Rotations for position-valued decoder outputs: node i moves to g_i + t_i and rotates
/// with its graph 1-ring.
std::vector<Vec3> reconstruct_from_translations(const ModelTopology& topo, std::span<const Vec3> translations);

template <typename Real>
class Autoencoder {
 public:
  Autoencoder(std::shared_ptr<const ModelTopology> topology, ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ModelTopology& topology() const { return *topo_; }
  ParameterStore<Real>& parameters() { return params_; }
  const ParameterStore<Real>& parameters() const { return params_; }

  /// Glorot weights, zero biases, zero final convolution.
  void initialize(std::uint64_t seed);
  std::size_t output_channels() const;
  std::size_t upsampling_modules() const;

  /// Encodes the displacement of `vertices` from the template.
  std::vector<Real> encode(std::span<const Vec3> vertices) const;
  /// Raw decoder output on the graph level: L x output_channels().
  Tensor<Real> decode(std::span<const Real> latent) const;
  /// Decoded node transforms; GL and LP rotations come from local Procrustes.
  NodeTransforms decode_transforms(std::span<const Real> latent) const;
  std::vector<Vec3> reconstruct(std::span<const Real> latent) const;
  std::vector<Vec3> autoencode(std::span<const Vec3> vertices) const { return reconstruct(encode(vertices)); }

  /// Training loss of one sample (EDL/LP: vertex loss, GL: graph loss).
  double sample_loss(std::span<const Vec3> input, std::span<const Vec3> target) const;
  /// Loss of one sample and its parameter gradient, accumulated into `grad`.
  double sample_gradients(std::span<const Vec3> input, std::span<const Vec3> target, GradientBuffer<Real>& grad) const;
  /// Decoder-side loss for a given latent and its gradient with respect to the latent.
  double latent_loss(std::span<const Real> latent, std::span<const Vec3> target, std::vector<Real>* grad_latent,
                     GradientBuffer<Real>* grad) const;
  /// Mean of per-sample gradients over `batch`, written to the store's gradient slots.
  double batch_gradients(std::span<const std::vector<Vec3>> inputs, std::span<const std::vector<Vec3>> targets,
                         std::span<const std::size_t> batch);

  template <typename Other>
  Autoencoder<Other> cast() const;

 private:
  struct Conv {
    std::size_t level = 0, f_in = 0, f_out = 0, order = 0;
    std::size_t weight = 0, bias = 0;  // parameter indices
  };
  struct Trace;

  template <typename>
  friend class Autoencoder;

  Tensor<Real> conv_forward(const Conv& c, const Tensor<Real>& x, Tensor<Real>* support_cache) const;
  void conv_backward(const Conv& c, const Tensor<Real>& support_cache, const Tensor<Real>& grad_y,
                     GradientBuffer<Real>* grad, Tensor<Real>* grad_x) const;
  std::vector<Real> encode_traced(std::span<const Vec3> vertices, Trace* trace) const;
  Tensor<Real> decode_traced(std::span<const Real> latent, Trace* trace) const;
  void encoder_backward(const Trace& trace, std::span<const Real> grad_latent, GradientBuffer<Real>* grad) const;
  std::vector<Real> decoder_backward(const Trace& trace, const Tensor<Real>& grad_out, GradientBuffer<Real>* grad) const;
  /// Output-to-loss step shared by training and checks; fills d loss / d output.
  double output_loss(const Tensor<Real>& out, std::span<const Vec3> target, Tensor<Real>* grad_out) const;

  std::shared_ptr<const ModelTopology> topo_;
  ModelConfig config_;
  std::vector<SpiralSupport> spirals_;
  std::vector<Conv> encoder_, decoder_up_, refine_;
  Conv out_{};
  std::size_t enc_fc_w_ = 0, enc_fc_b_ = 0, dec_fc_w_ = 0, dec_fc_b_ = 0;
  std::size_t coarse_channels_ = 0;
  ParameterStore<Real> params_;
};

struct LossRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainOptions {
  std::optional<std::filesystem::path> output_dir;  // checkpoints and loss CSV
  std::function<void(const LossRecord&)> on_step;
};

/// Trains the model in place on autoencoding `dataset`. Shuffling uses config.seed.
/// Throws TrainingError on a non-finite loss.
std::vector<LossRecord> train(Autoencoder<float>& model, std::span<const std::vector<Vec3>> dataset,
                              const TrainOptions& options = {});

void write_loss_csv(std::span<const LossRecord> history, const std::filesystem::path& path);

/// Mean over samples of the per-vertex l1 reconstruction error.
double mean_l1_error(const Autoencoder<float>& model, std::span<const std::vector<Vec3>> dataset);

}  // namespace demea
