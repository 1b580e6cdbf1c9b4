#pragma once
// Embedded deformation layer: per-node rigid transforms blended with Gaussian skinning
// weights deform the canonical template. All arithmetic is double precision.

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "demea/hierarchy.hpp"
#include "demea/mesh.hpp"

namespace demea {

inline constexpr double kSigmaScale = 2.0 / 3.0;

/// Per-vertex nearest graph nodes and normalized Gaussian weights.
struct SkinningBinding {
  std::size_t neighbors_per_vertex = 0;  // |N_p|
  std::vector<Index> node_index;         // vertex-major, neighbors_per_vertex per vertex
  std::vector<double> weight;            // normalized, same layout
  double sigma = 0.0;

  std::size_t vertex_count() const {
    return neighbors_per_vertex == 0 ? 0 : node_index.size() / neighbors_per_vertex;
  }
};

/// 6 neighbors for a graph on hierarchy level 1, 12 for level 2.
std::size_t neighbor_count_for_level(int graph_level);

/// sigma = (2/3) * d_max / sqrt(L)
double skinning_sigma(double d_max, std::size_t node_count);

/// Binds every vertex to its `neighbors` closest nodes (ties by node index) with weights
/// exp(-|g_l - p|^2 / (2 sigma^2)), normalized to sum to 1.
SkinningBinding bind_skinning(std::span<const Vec3> vertices, const DeformationGraph& graph, std::size_t neighbors,
                              double sigma);
SkinningBinding bind_skinning(const Mesh& mesh, const DeformationGraph& graph, int graph_level);

struct NodeTransforms {
  std::vector<Vec3> euler_angles;  // radians, (alpha, beta, gamma) per node
  std::vector<Vec3> translations;

  NodeTransforms() = default;
  explicit NodeTransforms(std::size_t nodes)
      : euler_angles(nodes, Vec3::Zero()), translations(nodes, Vec3::Zero()) {}
  std::size_t node_count() const { return translations.size(); }
};

/// R = Rz(gamma) * Ry(beta) * Rx(alpha).
Mat3 euler_to_rotation(const Vec3& angles);
/// Angles with euler_to_rotation(rotation_to_euler(R)) == R; beta in [-pi/2, pi/2].
Vec3 rotation_to_euler(const Mat3& rotation);
/// Partial derivatives of euler_to_rotation with respect to alpha, beta, gamma.
std::array<Mat3, 3> euler_rotation_derivatives(const Vec3& angles);

struct EdlCache {
  bool valid = false;
  std::vector<Vec3> euler_angles;
};

struct EdlGradients {
  std::vector<Vec3> euler_angles;
  std::vector<Vec3> translations;
};

class EmbeddedDeformation {
 public:
  EmbeddedDeformation() = default;
  EmbeddedDeformation(std::vector<Vec3> canonical_vertices, const DeformationGraph& graph, SkinningBinding binding);

  std::size_t vertex_count() const { return canonical_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  const SkinningBinding& binding() const { return binding_; }
  const std::vector<Vec3>& canonical_vertices() const { return canonical_; }
  const std::vector<Vec3>& node_positions() const { return nodes_; }

  /// G(p) = sum_l w_l(p) (R_l (p - g_l) + g_l + t_l)
  std::vector<Vec3> forward(const NodeTransforms& transforms, EdlCache* cache = nullptr) const;
  std::vector<Vec3> forward(std::span<const Mat3> rotations, std::span<const Vec3> translations) const;

  /// Vector-Jacobian product for the cached forward call. Throws Error without a cache.
  EdlGradients backward(const EdlCache& cache, std::span<const Vec3> upstream) const;
  /// Translation-only adjoint (rotations held fixed): sum_p w_l(p) upstream_p.
  std::vector<Vec3> translation_backward(std::span<const Vec3> upstream) const;

 private:
  std::vector<Vec3> canonical_;
  std::vector<Vec3> nodes_;
  SkinningBinding binding_;
};

struct ProcrustesResult {
  Mat3 rotation = Mat3::Identity();
  bool degenerate = false;
};

/// Rotation minimizing sum |R a_i - b_i|^2 after centering both sets (SVD with sign
/// correction, never a reflection). Rank < 2 configurations return identity, flagged.
ProcrustesResult procrustes_rotation(std::span<const Vec3> canonical, std::span<const Vec3> deformed);

/// Per-node rotations from each node's 1-ring (the node and its graph neighbors) between
/// canonical node positions and `deformed_nodes`.
std::vector<Mat3> local_procrustes_rotations(const DeformationGraph& graph, std::span<const Vec3> deformed_nodes);

/// Little-endian f32 blob: u32 L, L x 3 angles, L x 3 translations.
void save_node_transforms(const NodeTransforms& t, const std::filesystem::path& path);
NodeTransforms load_node_transforms(const std::filesystem::path& path);

}  // namespace demea
