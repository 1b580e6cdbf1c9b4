#pragma once
// Quadric-error-metric edge collapse (Garland-Heckbert) with the constraints the mesh
// hierarchy needs: endpoint-restricted placement so a coarse level is a vertex subset of
// the fine level, and protected vertices whose removal costs "infinity".

#include <cstddef>
#include <vector>

#include "demea/mesh.hpp"

namespace demea {

enum class Placement {
  Endpoint,  // the surviving vertex keeps its position; coarse vertices are a subset
  Optimal,   // the surviving vertex moves to the quadric minimizer
};

struct SimplifyOptions {
  std::size_t target_vertices = 0;
  Placement placement = Placement::Endpoint;
  /// Per-vertex flag; empty means nothing is protected. Endpoint placement only.
  std::vector<bool> protect;
  /// Boundary edges get a perpendicular constraint plane of weight factor * mean face area.
  double boundary_weight_factor = 1000.0;
};

struct SimplifyResult {
  std::vector<Index> kept;       // ascending indices (into the input mesh) of survivors
  std::vector<Vec3> positions;   // survivor positions, parallel to `kept`
  std::vector<Face> faces;       // triangles over survivor-local indices
};

/// Collapses edges in order of increasing cost until `target_vertices` remain.
/// Collapse order is (fold-over tier, quadric cost, min endpoint, max endpoint).
/// Throws InfeasibleError when only protected or isolated vertices are left to remove.
SimplifyResult simplify(const Mesh& mesh, const SimplifyOptions& options);

}  // namespace demea
