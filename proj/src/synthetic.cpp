#include "demea/synthetic.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "demea/error.hpp"

namespace demea {

Mesh make_bar(std::size_t nx, std::size_t ny, std::size_t nz, const Vec3& size) {
  if (nx < 2 || ny < 2 || nz < 2) throw Error("make_bar: need at least 2 samples per axis");
  const std::array<std::size_t, 3> n{nx, ny, nz};
  auto on_surface = [&](std::size_t i, std::size_t j, std::size_t k) {
    return i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
  };
  std::vector<Vec3> vertices;
  std::vector<std::int64_t> id(nx * ny * nz, -1);
  auto lin = [&](std::size_t i, std::size_t j, std::size_t k) { return (i * ny + j) * nz + k; };
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t k = 0; k < nz; ++k) {
        if (!on_surface(i, j, k)) continue;
        id[lin(i, j, k)] = static_cast<std::int64_t>(vertices.size());
        const Vec3 t(static_cast<double>(i) / static_cast<double>(nx - 1),
                     static_cast<double>(j) / static_cast<double>(ny - 1),
                     static_cast<double>(k) / static_cast<double>(nz - 1));
        vertices.push_back((t - Vec3::Constant(0.5)).cwiseProduct(size));
      }
    }
  }
  std::vector<Face> faces;
  for (int a = 0; a < 3; ++a) {
    const int u = (a + 1) % 3, v = (a + 2) % 3;
    for (std::size_t side : {std::size_t{0}, n[a] - 1}) {
      for (std::size_t p = 0; p + 1 < n[u]; ++p) {
        for (std::size_t q = 0; q + 1 < n[v]; ++q) {
          auto vid = [&](std::size_t du, std::size_t dv) {
            std::array<std::size_t, 3> c{};
            c[a] = side;
            c[u] = p + du;
            c[v] = q + dv;
            return static_cast<Index>(id[lin(c[0], c[1], c[2])]);
          };
          const Index c00 = vid(0, 0), c10 = vid(1, 0), c11 = vid(1, 1), c01 = vid(0, 1);
          if (side != 0) {
            faces.push_back({c00, c10, c11});
            faces.push_back({c00, c11, c01});
          } else {
            faces.push_back({c00, c11, c10});
            faces.push_back({c00, c01, c11});
          }
        }
      }
    }
  }
  return Mesh(std::move(vertices), std::move(faces));
}

Mesh make_icosphere(std::size_t subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (std::size_t s = 0; s < subdivisions; ++s) {
    std::map<Edge, Index> midpoint;
    auto mid = [&](Index a, Index b) {
      const Edge e{std::min(a, b), std::max(a, b)};
      auto it = midpoint.find(e);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const auto idx = static_cast<Index>(v.size() - 1);
      midpoint.emplace(e, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& tri : f) {
      const Index ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return Mesh(std::move(v), std::move(f));
}

Mesh make_uv_sphere(std::size_t rings, std::size_t segments, double radius) {
  if (rings < 2 || segments < 3) throw Error("make_uv_sphere: need rings >= 2 and segments >= 3");
  std::vector<Vec3> v;
  v.emplace_back(0, 0, radius);
  for (std::size_t r = 1; r < rings; ++r) {
    const double theta = std::numbers::pi * static_cast<double>(r) / static_cast<double>(rings);
    for (std::size_t s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(segments);
      v.emplace_back(radius * std::sin(theta) * std::cos(phi), radius * std::sin(theta) * std::sin(phi),
                     radius * std::cos(theta));
    }
  }
  v.emplace_back(0, 0, -radius);
  const auto south = static_cast<Index>(v.size() - 1);
  auto ring = [&](std::size_t r, std::size_t s) { return static_cast<Index>(1 + (r - 1) * segments + s % segments); };
  std::vector<Face> f;
  for (std::size_t s = 0; s < segments; ++s) f.push_back({0, ring(1, s), ring(1, s + 1)});
  for (std::size_t r = 1; r + 1 < rings; ++r) {
    for (std::size_t s = 0; s < segments; ++s) {
      f.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      f.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
  }
  for (std::size_t s = 0; s < segments; ++s) f.push_back({south, ring(rings - 1, s + 1), ring(rings - 1, s)});
  return Mesh(std::move(v), std::move(f));
}

Mesh make_grid_patch(std::size_t nx, std::size_t ny, double jitter, std::mt19937_64& rng) {
  if (nx < 2 || ny < 2) throw Error("make_grid_patch: need at least 2 x 2 vertices");
  std::uniform_real_distribution<double> u(-jitter, jitter);
  std::vector<Vec3> v;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      v.emplace_back(static_cast<double>(i) + u(rng), static_cast<double>(j) + u(rng), u(rng));
    }
  }
  std::vector<Face> f;
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const auto a = static_cast<Index>(j * nx + i), b = a + 1, c = static_cast<Index>(a + nx), d = c + 1;
      f.push_back({a, b, d});
      f.push_back({a, d, c});
    }
  }
  return Mesh(std::move(v), std::move(f));
}

NodeTransforms random_bend_twist(const DeformationGraph& graph, const DeformationOptions& o, std::mt19937_64& rng) {
  const std::size_t L = graph.node_count();
  if (L == 0) throw Error("random_bend_twist: empty graph");
  Vec3 lo = graph.node_positions.front(), hi = lo;
  for (const Vec3& g : graph.node_positions) {
    lo = lo.cwiseMin(g);
    hi = hi.cwiseMax(g);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double length = std::max(hi.x() - lo.x(), 1e-9);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), phase(0.0, 2.0 * std::numbers::pi);
  const double kappa = o.max_bend * unit(rng) / length;
  const double tau = o.max_twist * unit(rng) / length;
  Vec3 angle_amp, angle_phase, trans_amp, trans_phase;
  for (int a = 0; a < 3; ++a) {
    angle_amp[a] = o.noise_angle * unit(rng);
    angle_phase[a] = phase(rng);
    trans_amp[a] = o.noise_translation * length * unit(rng);
    trans_phase[a] = phase(rng);
  }

  NodeTransforms t(L);
  for (std::size_t l = 0; l < L; ++l) {
    const Vec3& g = graph.node_positions[l];
    const double s = g.x() - center.x();
    const Vec3 offset(0.0, g.y() - center.y(), g.z() - center.z());
    Vec3 centerline(s, 0.0, 0.0);
    if (std::abs(kappa) > 1e-12) {
      centerline = Vec3(std::sin(kappa * s) / kappa, (1.0 - std::cos(kappa * s)) / kappa, 0.0);
    }
    const Vec3 angles(tau * s, 0.0, kappa * s);
    const Vec3 moved = center + centerline + euler_to_rotation(angles) * offset;
    const double w = 2.0 * std::numbers::pi * s / length;
    Vec3 noise_angles, noise_shift;
    for (int a = 0; a < 3; ++a) {
      noise_angles[a] = angle_amp[a] * std::sin(w + angle_phase[a]);
      noise_shift[a] = trans_amp[a] * std::sin(w + trans_phase[a]);
    }
    t.euler_angles[l] = angles + noise_angles;
    t.translations[l] = moved - g + noise_shift;
  }
  if (o.rotations_from_positions) {
    std::vector<Vec3> moved(L);
    for (std::size_t l = 0; l < L; ++l) moved[l] = graph.node_positions[l] + t.translations[l];
    const auto rotations = local_procrustes_rotations(graph, moved);
    for (std::size_t l = 0; l < L; ++l) t.euler_angles[l] = rotation_to_euler(rotations[l]);
  }
  return t;
}

std::vector<std::vector<Vec3>> synthesize_dataset(const EmbeddedDeformation& edl, const DeformationGraph& graph,
                                                  std::size_t count, const DeformationOptions& options,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Vec3>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(edl.forward(random_bend_twist(graph, options, rng)));
  return out;
}

NodeTransforms rigid_node_transforms(const DeformationGraph& graph, const Mat3& rotation, const Vec3& translation) {
  NodeTransforms t(graph.node_count());
  // R (p - g) + g + t_l = R p + t  requires  t_l = R g + t - g.
  for (std::size_t l = 0; l < graph.node_count(); ++l) {
    const Vec3& g = graph.node_positions[l];
    t.translations[l] = rotation * g + translation - g;
  }
  const Vec3 angles = rotation_to_euler(rotation);
  std::fill(t.euler_angles.begin(), t.euler_angles.end(), angles);
  return t;
}

}  // namespace demea
