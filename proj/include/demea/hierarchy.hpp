#pragma once
// Multi-resolution mesh hierarchy and the embedded deformation graph.
//
// Level 0 is the input mesh. Every coarser level is a vertex subset of the level above
// it, obtained by endpoint-restricted quadric edge collapse. Vertices of the deformation
// graph are never collapsed at levels at least as fine as the graph level, so that one
// level coincides with the graph.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demea/mesh.hpp"
#include "demea/tensor.hpp"

namespace demea {

struct DeformationGraph {
  std::vector<Vec3> node_positions;   // g_l, equal to mesh.vertices()[node_to_vertex[l]]
  std::vector<Index> node_to_vertex;  // injective, ascending
  std::vector<Edge> edges;            // node-index pairs, first < second, sorted

  std::size_t node_count() const { return node_positions.size(); }
  std::vector<std::vector<Index>> adjacency() const;
};

/// Decimates `mesh` to `target_nodes` with quadric edge collapse (optimal placement),
/// then snaps every node to a distinct mesh vertex: nodes are visited in order and each
/// takes its closest vertex not yet taken. Nodes are finally renumbered by vertex index.
DeformationGraph extract_graph(const Mesh& mesh, std::size_t target_nodes);

/// Barycentric upsampling weights for one fine vertex: 1 to 3 entries over coarse vertices.
struct UpRow {
  std::uint32_t count = 0;
  std::array<Index, 3> index{};
  std::array<float, 3> weight{};
};

struct HierarchyLevel {
  Mesh mesh;
  /// For each vertex of this level, its index in the next finer level.
  std::vector<Index> select_indices;
  /// For each vertex of the next finer level, interpolation weights over this level.
  std::vector<UpRow> up_weights;
  /// Index of each vertex in the level-0 mesh.
  std::vector<Index> provenance;

  std::size_t vertex_count() const { return mesh.vertex_count(); }
  std::size_t finer_count() const { return up_weights.size(); }
};

struct MeshHierarchy {
  std::vector<HierarchyLevel> levels;  // finest first
  int graph_level = 0;                 // 1 or 2; 0 when built without a graph

  std::size_t level_count() const { return levels.size(); }
  std::vector<std::size_t> level_counts() const;
};

/// Builds levels with the given vertex counts (level_counts[0] must be the mesh size).
/// `graph` may be null; otherwise its node count must equal level_counts[1] or [2].
MeshHierarchy build_hierarchy(const Mesh& mesh, const DeformationGraph* graph,
                              std::span<const std::size_t> level_counts);

/// Closest point on triangle (a, b, c) to p as clamped, renormalized barycentric weights.
std::array<double, 3> closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Up-weights for every vertex of `fine` given the surviving subset `select` and the
/// coarse faces: survivors get weight 1 on themselves, others are projected onto the
/// closest coarse triangle.
std::vector<UpRow> compute_up_weights(const Mesh& fine, const Mesh& coarse, std::span<const Index> select);

/// Checks level invariants (subset, weight rows, counts); throws Error on violation.
void validate_hierarchy(const MeshHierarchy& h, const DeformationGraph* graph);

// Feature transfer between adjacent levels. `level` is the coarser of the two.

template <typename Real>
Tensor<Real> downsample(const HierarchyLevel& level, const Tensor<Real>& fine) {
  require_shape(fine.rows == level.finer_count(), "downsample: row count does not match the finer level");
  Tensor<Real> out(level.select_indices.size(), fine.cols);
  for (std::size_t j = 0; j < level.select_indices.size(); ++j) {
    const auto src = fine.row(level.select_indices[j]);
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

/// Adjoint of downsample: scatters coarse gradients back to the selected fine rows.
template <typename Real>
Tensor<Real> downsample_backward(const HierarchyLevel& level, const Tensor<Real>& grad_coarse) {
  require_shape(grad_coarse.rows == level.select_indices.size(), "downsample_backward: shape mismatch");
  Tensor<Real> out(level.finer_count(), grad_coarse.cols);
  for (std::size_t j = 0; j < level.select_indices.size(); ++j) {
    auto dst = out.row(level.select_indices[j]);
    const auto src = grad_coarse.row(j);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
  }
  return out;
}

template <typename Real>
Tensor<Real> upsample(const HierarchyLevel& level, const Tensor<Real>& coarse) {
  require_shape(coarse.rows == level.vertex_count(), "upsample: row count does not match the coarser level");
  Tensor<Real> out(level.finer_count(), coarse.cols);
  for (std::size_t i = 0; i < level.up_weights.size(); ++i) {
    const UpRow& r = level.up_weights[i];
    auto dst = out.row(i);
    for (std::uint32_t k = 0; k < r.count; ++k) {
      const auto src = coarse.row(r.index[k]);
      const Real w = static_cast<Real>(r.weight[k]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

/// Adjoint of upsample (transposed sparse interpolation matrix).
template <typename Real>
Tensor<Real> upsample_backward(const HierarchyLevel& level, const Tensor<Real>& grad_fine) {
  require_shape(grad_fine.rows == level.finer_count(), "upsample_backward: shape mismatch");
  Tensor<Real> out(level.vertex_count(), grad_fine.cols);
  for (std::size_t i = 0; i < level.up_weights.size(); ++i) {
    const UpRow& r = level.up_weights[i];
    const auto src = grad_fine.row(i);
    for (std::uint32_t k = 0; k < r.count; ++k) {
      auto dst = out.row(r.index[k]);
      const Real w = static_cast<Real>(r.weight[k]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

}  // namespace demea
