#include "demea/edl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "demea/binary_io.hpp"
#include "demea/error.hpp"

namespace demea {

std::size_t neighbor_count_for_level(int graph_level) {
  switch (graph_level) {
    case 1:
      return 6;
    case 2:
      return 12;
    default:
      throw Error("graph level must be 1 or 2, got " + std::to_string(graph_level));
  }
}

double skinning_sigma(double d_max, std::size_t node_count) {
  return kSigmaScale * d_max / std::sqrt(static_cast<double>(node_count));
}

SkinningBinding bind_skinning(std::span<const Vec3> vertices, const DeformationGraph& graph, std::size_t neighbors,
                              double sigma) {
  const std::size_t L = graph.node_count();
  if (neighbors == 0 || L < neighbors) {
    throw Error("bind_skinning: need at least " + std::to_string(neighbors) + " graph nodes, have " +
                std::to_string(L));
  }
  if (!(sigma > 0.0)) throw Error("bind_skinning: sigma must be positive");
  SkinningBinding b;
  b.neighbors_per_vertex = neighbors;
  b.sigma = sigma;
  b.node_index.resize(vertices.size() * neighbors);
  b.weight.resize(vertices.size() * neighbors);
  std::vector<std::pair<double, Index>> dist(L);
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    for (std::size_t l = 0; l < L; ++l) {
      dist[l] = {(graph.node_positions[l] - vertices[v]).squaredNorm(), static_cast<Index>(l)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbors), dist.end());
    // Shifting every exponent by the nearest distance leaves normalized weights unchanged
    // and keeps the largest raw weight at exactly 1 (no underflow to 0/0).
    const double nearest = dist[0].first;
    double sum = 0.0;
    for (std::size_t k = 0; k < neighbors; ++k) {
      const double w = std::exp(-(dist[k].first - nearest) / (2.0 * sigma * sigma));
      b.node_index[v * neighbors + k] = dist[k].second;
      b.weight[v * neighbors + k] = w;
      sum += w;
    }
    for (std::size_t k = 0; k < neighbors; ++k) b.weight[v * neighbors + k] /= sum;
  }
  return b;
}

SkinningBinding bind_skinning(const Mesh& mesh, const DeformationGraph& graph, int graph_level) {
  const double sigma = skinning_sigma(compute_metrics(mesh).d_max, graph.node_count());
  return bind_skinning(mesh.vertices(), graph, neighbor_count_for_level(graph_level), sigma);
}

namespace {

struct AxisRotations {
  Mat3 x, y, z, dx, dy, dz;
};

AxisRotations axis_rotations(const Vec3& angles) {
  const double ca = std::cos(angles.x()), sa = std::sin(angles.x());
  const double cb = std::cos(angles.y()), sb = std::sin(angles.y());
  const double cg = std::cos(angles.z()), sg = std::sin(angles.z());
  AxisRotations r;
  r.x << 1, 0, 0, 0, ca, -sa, 0, sa, ca;
  r.y << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  r.z << cg, -sg, 0, sg, cg, 0, 0, 0, 1;
  r.dx << 0, 0, 0, 0, -sa, -ca, 0, ca, -sa;
  r.dy << -sb, 0, cb, 0, 0, 0, -cb, 0, -sb;
  r.dz << -sg, -cg, 0, cg, -sg, 0, 0, 0, 0;
  return r;
}

}  // namespace

Mat3 euler_to_rotation(const Vec3& angles) {
  const AxisRotations r = axis_rotations(angles);
  return r.z * r.y * r.x;
}

Vec3 rotation_to_euler(const Mat3& r) {
  // R = Rz Ry Rx has r(2,0) = -sin(beta), r(2,1) = cos(beta) sin(alpha), r(1,0) = sin(gamma) cos(beta).
  const double beta = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
    return {std::atan2(r(2, 1), r(2, 2)), beta, std::atan2(r(1, 0), r(0, 0))};
  }
  // Gimbal lock: only alpha -/+ gamma is determined; put it all in alpha.
  return {std::atan2(-r(1, 2), r(1, 1)), beta, 0.0};
}

std::array<Mat3, 3> euler_rotation_derivatives(const Vec3& angles) {
  const AxisRotations r = axis_rotations(angles);
  return {r.z * r.y * r.dx, r.z * r.dy * r.x, r.dz * r.y * r.x};
}

EmbeddedDeformation::EmbeddedDeformation(std::vector<Vec3> canonical_vertices, const DeformationGraph& graph,
                                         SkinningBinding binding)
    : canonical_(std::move(canonical_vertices)), nodes_(graph.node_positions), binding_(std::move(binding)) {
  if (binding_.vertex_count() != canonical_.size()) {
    throw ShapeError("EmbeddedDeformation: binding covers " + std::to_string(binding_.vertex_count()) +
                     " vertices, mesh has " + std::to_string(canonical_.size()));
  }
  for (Index l : binding_.node_index) {
    if (l >= nodes_.size()) throw ShapeError("EmbeddedDeformation: binding refers to a missing node");
  }
}

std::vector<Vec3> EmbeddedDeformation::forward(std::span<const Mat3> rotations,
                                               std::span<const Vec3> translations) const {
  require_shape(rotations.size() == nodes_.size() && translations.size() == nodes_.size(),
                "edl_forward: expected " + std::to_string(nodes_.size()) + " node transforms");
  const std::size_t K = binding_.neighbors_per_vertex;
  std::vector<Vec3> out(canonical_.size());
  for (std::size_t v = 0; v < canonical_.size(); ++v) {
    const Vec3& p = canonical_[v];
    Vec3 acc = Vec3::Zero();
    for (std::size_t k = 0; k < K; ++k) {
      const Index l = binding_.node_index[v * K + k];
      const double w = binding_.weight[v * K + k];
      acc += w * (rotations[l] * (p - nodes_[l]) + nodes_[l] + translations[l]);
    }
    out[v] = acc;
  }
  return out;
}

std::vector<Vec3> EmbeddedDeformation::forward(const NodeTransforms& transforms, EdlCache* cache) const {
  require_shape(transforms.euler_angles.size() == nodes_.size() && transforms.translations.size() == nodes_.size(),
                "edl_forward: expected " + std::to_string(nodes_.size()) + " node transforms");
  std::vector<Mat3> rotations(nodes_.size());
  for (std::size_t l = 0; l < nodes_.size(); ++l) rotations[l] = euler_to_rotation(transforms.euler_angles[l]);
  if (cache != nullptr) {
    cache->valid = true;
    cache->euler_angles = transforms.euler_angles;
  }
  return forward(rotations, transforms.translations);
}

std::vector<Vec3> EmbeddedDeformation::translation_backward(std::span<const Vec3> upstream) const {
  require_shape(upstream.size() == canonical_.size(), "edl_backward: upstream gradient has wrong vertex count");
  const std::size_t K = binding_.neighbors_per_vertex;
  std::vector<Vec3> grad(nodes_.size(), Vec3::Zero());
  for (std::size_t v = 0; v < canonical_.size(); ++v) {
    for (std::size_t k = 0; k < K; ++k) {
      grad[binding_.node_index[v * K + k]] += binding_.weight[v * K + k] * upstream[v];
    }
  }
  return grad;
}

EdlGradients EmbeddedDeformation::backward(const EdlCache& cache, std::span<const Vec3> upstream) const {
  if (!cache.valid) throw Error("edl_backward: no forward cache");
  require_shape(upstream.size() == canonical_.size(), "edl_backward: upstream gradient has wrong vertex count");
  const std::size_t K = binding_.neighbors_per_vertex;
  EdlGradients g;
  g.translations.assign(nodes_.size(), Vec3::Zero());
  g.euler_angles.assign(nodes_.size(), Vec3::Zero());
  // Per node: M_l = sum_p w_l(p) upstream_p (p - g_l)^T, so dL/dtheta = <dR/dtheta, M_l>.
  std::vector<Mat3> moment(nodes_.size(), Mat3::Zero());
  for (std::size_t v = 0; v < canonical_.size(); ++v) {
    const Vec3& p = canonical_[v];
    for (std::size_t k = 0; k < K; ++k) {
      const Index l = binding_.node_index[v * K + k];
      const Vec3 wg = binding_.weight[v * K + k] * upstream[v];
      g.translations[l] += wg;
      moment[l].noalias() += wg * (p - nodes_[l]).transpose();
    }
  }
  for (std::size_t l = 0; l < nodes_.size(); ++l) {
    const auto d = euler_rotation_derivatives(cache.euler_angles[l]);
    for (int a = 0; a < 3; ++a) g.euler_angles[l][a] = d[a].cwiseProduct(moment[l]).sum();
  }
  return g;
}

ProcrustesResult procrustes_rotation(std::span<const Vec3> canonical, std::span<const Vec3> deformed) {
  require_shape(canonical.size() == deformed.size(), "procrustes_rotation: point counts differ");
  ProcrustesResult out;
  if (canonical.size() < 2) {
    out.degenerate = true;
    return out;
  }
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    ca += canonical[i];
    cb += deformed[i];
  }
  ca /= static_cast<double>(canonical.size());
  cb /= static_cast<double>(deformed.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < canonical.size(); ++i) h += (canonical[i] - ca) * (deformed[i] - cb).transpose();

  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0]) {
    out.degenerate = true;
    return out;
  }
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  out.rotation = v * d * u.transpose();
  return out;
}

std::vector<Mat3> local_procrustes_rotations(const DeformationGraph& graph, std::span<const Vec3> deformed_nodes) {
  require_shape(deformed_nodes.size() == graph.node_count(), "local_procrustes_rotations: node count mismatch");
  const auto adj = graph.adjacency();
  std::vector<Mat3> out(graph.node_count());
  std::vector<Vec3> a, b;
  for (std::size_t l = 0; l < graph.node_count(); ++l) {
    a.assign(1, graph.node_positions[l]);
    b.assign(1, deformed_nodes[l]);
    for (Index j : adj[l]) {
      a.push_back(graph.node_positions[j]);
      b.push_back(deformed_nodes[j]);
    }
    out[l] = procrustes_rotation(a, b).rotation;
  }
  return out;
}

void save_node_transforms(const NodeTransforms& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  binary::write_u32(out, static_cast<std::uint32_t>(t.node_count()));
  for (const Vec3& a : t.euler_angles) {
    for (int k = 0; k < 3; ++k) binary::write_f32(out, static_cast<float>(a[k]));
  }
  for (const Vec3& tr : t.translations) {
    for (int k = 0; k < 3; ++k) binary::write_f32(out, static_cast<float>(tr[k]));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

NodeTransforms load_node_transforms(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::uint32_t n = binary::read_u32(in);
  NodeTransforms t(n);
  for (auto& a : t.euler_angles) {
    for (int k = 0; k < 3; ++k) a[k] = binary::read_f32(in);
  }
  for (auto& tr : t.translations) {
    for (int k = 0; k < 3; ++k) tr[k] = binary::read_f32(in);
  }
  return t;
}

}  // namespace demea
