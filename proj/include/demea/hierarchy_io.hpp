#pragma once
// On-disk hierarchy artifact: manifest.json, one OBJ per level, one up-weight blob per
// level, and the per-level convolution supports.
//
//   manifest.json         level counts, graph level, node_to_vertex, graph edges,
//                         per-level file names and select indices
//   level_<k>.obj         level mesh
//   up_weights_<k>.bin    u32 rows, per row: u32 count, count x (u32 index, f32 weight)
//   spirals_<k>.bin       u32 nodes, u32 length, nodes x length i64 (-1 = padding)
//   laplacian_<k>.bin     u32 n, u32 nnz, nnz x (u32 row, u32 col, f64 value) of L~
//
// All binary data is little-endian.

#include <filesystem>
#include <vector>

#include "demea/graph_conv.hpp"
#include "demea/hierarchy.hpp"

namespace demea {

struct HierarchyArtifact {
  MeshHierarchy hierarchy;
  DeformationGraph graph;
  std::vector<SpiralSupport> spirals;       // one per level
  std::vector<SpectralOperator> laplacians;  // one per level
};

/// Supports for every level. spiral_length 0 picks the per-level default.
HierarchyArtifact make_artifact(MeshHierarchy hierarchy, DeformationGraph graph, std::size_t spiral_length = 0);

void save_artifact(const HierarchyArtifact& artifact, const std::filesystem::path& dir);
/// Loads and validates an artifact. Works for hand-built hierarchies as well.
HierarchyArtifact load_artifact(const std::filesystem::path& dir);

void write_up_weights(const std::vector<UpRow>& rows, const std::filesystem::path& path);
std::vector<UpRow> read_up_weights(const std::filesystem::path& path);
void write_spirals(const SpiralSupport& s, const std::filesystem::path& path);
SpiralSupport read_spirals(const std::filesystem::path& path);
void write_laplacian(const SpectralOperator& op, const std::filesystem::path& path);
SpectralOperator read_laplacian(const std::filesystem::path& path);

}  // namespace demea
