#pragma once
// Procedural templates and deformations for tests and demos. Deformed shapes are pushed
// through the embedded deformation layer itself, so every sample is reachable by the
// decoder's output space.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "demea/edl.hpp"
#include "demea/mesh.hpp"

namespace demea {

/// Closed box surface sampled on an nx x ny x nz lattice, centered at the origin,
/// faces wound outward. Vertex count: nx*ny*nz - (nx-2)(ny-2)(nz-2).
Mesh make_bar(std::size_t nx, std::size_t ny, std::size_t nz, const Vec3& size);

/// Subdivided icosahedron on a sphere: 12, 42, 162, 642, ... vertices.
Mesh make_icosphere(std::size_t subdivisions, double radius = 1.0);

/// Latitude/longitude sphere with two poles: 2 + (rings - 1) * segments vertices.
Mesh make_uv_sphere(std::size_t rings, std::size_t segments, double radius = 1.0);

/// Random flat patch: a jittered grid of (nx x ny) vertices, triangulated.
Mesh make_grid_patch(std::size_t nx, std::size_t ny, double jitter, std::mt19937_64& rng);

struct DeformationOptions {
  double max_bend = 0.6;   // total bend angle along the x extent (radians)
  double max_twist = 0.6;  // total twist angle along the x extent (radians)
  double noise_angle = 0.05;
  double noise_translation = 0.02;  // relative to the x extent
  // Replace the sampled rotations by local Procrustes fits to the moved nodes, so the
  // sample is also exactly reachable from node positions alone.
  bool rotations_from_positions = false;
};

/// Bend about z and twist about x along the template's x axis, plus a smooth random field.
NodeTransforms random_bend_twist(const DeformationGraph& graph, const DeformationOptions& options,
                                 std::mt19937_64& rng);

/// `count` deformed copies of the EDL template.
std::vector<std::vector<Vec3>> synthesize_dataset(const EmbeddedDeformation& edl, const DeformationGraph& graph,
                                                  std::size_t count, const DeformationOptions& options,
                                                  std::uint64_t seed);

/// Per-node transforms that move every point p to R p + t.
NodeTransforms rigid_node_transforms(const DeformationGraph& graph, const Mat3& rotation, const Vec3& translation);

}  // namespace demea
