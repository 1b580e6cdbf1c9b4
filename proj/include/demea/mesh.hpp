#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace demea {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index = std::uint32_t;
using Face = std::array<Index, 3>;
/// Undirected edge stored with first < second.
using Edge = std::pair<Index, Index>;

/// Triangle mesh with fixed topology. Immutable once constructed.
class Mesh {
 public:
  Mesh() = default;
  /// Validates that every face index is in range and that faces are non-degenerate.
  Mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  std::size_t vertex_count() const { return vertices_.size(); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  /// Union of face edges, sorted lexicographically, no duplicates.
  const std::vector<Edge>& edges() const { return edges_; }
  /// Sorted neighbor lists derived from `edges()`.
  std::vector<std::vector<Index>> adjacency() const;

  /// Same topology, new positions (count must match).
  Mesh with_vertices(std::vector<Vec3> vertices) const;

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.vertices_ == b.vertices_ && a.faces_ == b.faces_;
  }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
};

std::vector<Edge> edges_of(std::span<const Face> faces);

/// Wavefront OBJ. Vertex order follows the file; normals and texture coordinates are ignored.
Mesh load_mesh(const std::filesystem::path& path);
Mesh parse_obj(std::istream& in);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);
void write_obj(const Mesh& mesh, std::ostream& out);

struct BoundingMetrics {
  double d_max = 0.0;          // largest pairwise vertex distance
  double bbox_diagonal = 0.0;  // axis-aligned bounding box diagonal
};

BoundingMetrics compute_metrics(std::span<const Vec3> vertices);
inline BoundingMetrics compute_metrics(const Mesh& mesh) { return compute_metrics(mesh.vertices()); }

}  // namespace demea
