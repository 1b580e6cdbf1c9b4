#include "demea/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "demea/error.hpp"
#include "demea/qem.hpp"

namespace demea {

std::vector<std::vector<Index>> DeformationGraph::adjacency() const {
  std::vector<std::vector<Index>> adj(node_count());
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

std::vector<std::size_t> MeshHierarchy::level_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& level : levels) counts.push_back(level.vertex_count());
  return counts;
}

DeformationGraph extract_graph(const Mesh& mesh, std::size_t target_nodes) {
  const std::size_t n = mesh.vertex_count();
  if (target_nodes < 4 || target_nodes >= n) {
    throw InfeasibleError("extract_graph: target_nodes must be in [4, " + std::to_string(n) + "), got " +
                          std::to_string(target_nodes));
  }
  SimplifyOptions opts;
  opts.target_vertices = target_nodes;
  opts.placement = Placement::Optimal;
  const SimplifyResult simplified = simplify(mesh, opts);

  // Greedy snapping: each node in turn takes its closest untaken vertex.
  std::vector<bool> taken(n, false);
  std::vector<Index> assigned(simplified.positions.size());
  for (std::size_t l = 0; l < simplified.positions.size(); ++l) {
    double best = std::numeric_limits<double>::infinity();
    Index best_v = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (taken[v]) continue;
      const double d = (mesh.vertices()[v] - simplified.positions[l]).squaredNorm();
      if (d < best) {
        best = d;
        best_v = static_cast<Index>(v);
      }
    }
    taken[best_v] = true;
    assigned[l] = best_v;
  }

  std::vector<Index> order(assigned.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return assigned[a] < assigned[b]; });
  std::vector<Index> renumber(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) renumber[order[k]] = static_cast<Index>(k);

  DeformationGraph g;
  for (Index old : order) {
    g.node_to_vertex.push_back(assigned[old]);
    g.node_positions.push_back(mesh.vertices()[assigned[old]]);
  }
  for (const auto& [a, b] : edges_of(simplified.faces)) {
    const Index ra = renumber[a], rb = renumber[b];
    g.edges.emplace_back(std::min(ra, rb), std::max(ra, rb));
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

namespace {

std::array<double, 3> closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return {1.0 - t, t, 0.0};
}

}  // namespace

std::array<double, 3> closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  std::array<double, 3> w{};
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  const double vc = d1 * d4 - d3 * d2;
  const double vb = d5 * d2 - d1 * d6;
  const double va = d3 * d6 - d5 * d4;

  if (d1 <= 0.0 && d2 <= 0.0) {
    w = {1.0, 0.0, 0.0};
  } else if (d3 >= 0.0 && d4 <= d3) {
    w = {0.0, 1.0, 0.0};
  } else if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    w = {1.0 - v, v, 0.0};
  } else if (d6 >= 0.0 && d5 <= d6) {
    w = {0.0, 0.0, 1.0};
  } else if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double t = d2 / (d2 - d6);
    w = {1.0 - t, 0.0, t};
  } else if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    w = {0.0, 1.0 - t, t};
  } else if (va + vb + vc > 0.0) {
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, t = vc * denom;
    w = {1.0 - v - t, v, t};
  } else {
    // Degenerate triangle: closest of the three edges.
    const std::array<double, 3> eab = closest_on_segment(p, a, b);
    const std::array<double, 3> ebc = closest_on_segment(p, b, c);
    const std::array<double, 3> eca = closest_on_segment(p, c, a);
    const std::array<std::array<double, 3>, 3> cand = {
        std::array<double, 3>{eab[0], eab[1], 0.0}, std::array<double, 3>{0.0, ebc[0], ebc[1]},
        std::array<double, 3>{eca[1], 0.0, eca[0]}};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cw : cand) {
      const double d = (cw[0] * a + cw[1] * b + cw[2] * c - p).squaredNorm();
      if (d < best) {
        best = d;
        w = cw;
      }
    }
  }
  double sum = 0.0;
  for (double& x : w) {
    if (!(x > 0.0)) x = 0.0;
    sum += x;
  }
  if (sum <= 0.0) return {1.0, 0.0, 0.0};
  for (double& x : w) x /= sum;
  return w;
}

std::vector<UpRow> compute_up_weights(const Mesh& fine, const Mesh& coarse, std::span<const Index> select) {
  constexpr Index kNone = std::numeric_limits<Index>::max();
  std::vector<Index> coarse_of(fine.vertex_count(), kNone);
  for (std::size_t j = 0; j < select.size(); ++j) coarse_of[select[j]] = static_cast<Index>(j);

  std::vector<UpRow> rows(fine.vertex_count());
  const auto& cv = coarse.vertices();
  for (std::size_t i = 0; i < fine.vertex_count(); ++i) {
    UpRow& row = rows[i];
    if (coarse_of[i] != kNone) {
      row.count = 1;
      row.index[0] = coarse_of[i];
      row.weight[0] = 1.0f;
      continue;
    }
    const Vec3& p = fine.vertices()[i];
    if (coarse.faces().empty()) {
      // No triangles to project onto: nearest coarse vertex.
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < cv.size(); ++j) {
        const double d = (cv[j] - p).squaredNorm();
        if (d < best) {
          best = d;
          row.index[0] = static_cast<Index>(j);
        }
      }
      row.count = 1;
      row.weight[0] = 1.0f;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    std::array<double, 3> best_w{};
    Face best_face{};
    for (const Face& f : coarse.faces()) {
      const auto w = closest_point_barycentric(p, cv[f[0]], cv[f[1]], cv[f[2]]);
      const double d = (w[0] * cv[f[0]] + w[1] * cv[f[1]] + w[2] * cv[f[2]] - p).squaredNorm();
      if (d < best) {
        best = d;
        best_w = w;
        best_face = f;
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (best_w[k] > 0.0) {
        row.index[row.count] = best_face[k];
        row.weight[row.count] = static_cast<float>(best_w[k]);
        ++row.count;
      }
    }
    if (row.count == 1) row.weight[0] = 1.0f;
  }
  return rows;
}

MeshHierarchy build_hierarchy(const Mesh& mesh, const DeformationGraph* graph,
                              std::span<const std::size_t> level_counts) {
  if (level_counts.empty()) throw InfeasibleError("build_hierarchy: no level counts given");
  if (level_counts[0] != mesh.vertex_count()) {
    throw InfeasibleError("build_hierarchy: first level count " + std::to_string(level_counts[0]) +
                          " must equal the mesh vertex count " + std::to_string(mesh.vertex_count()));
  }
  for (std::size_t k = 1; k < level_counts.size(); ++k) {
    if (level_counts[k] >= level_counts[k - 1] || level_counts[k] == 0) {
      throw InfeasibleError("build_hierarchy: level counts must be positive and strictly decreasing");
    }
  }

  MeshHierarchy h;
  std::vector<bool> is_graph_vertex(mesh.vertex_count(), false);
  if (graph != nullptr && level_counts.size() > 1) {
    const std::size_t L = graph->node_count();
    if (L == level_counts[1]) {
      h.graph_level = 1;
    } else if (level_counts.size() > 2 && L == level_counts[2]) {
      h.graph_level = 2;
    } else {
      throw InfeasibleError("build_hierarchy: graph has " + std::to_string(L) +
                            " nodes, which matches neither level 1 nor level 2");
    }
    if (!std::is_sorted(graph->node_to_vertex.begin(), graph->node_to_vertex.end())) {
      throw Error("build_hierarchy: graph node_to_vertex must be ascending");
    }
    for (Index v : graph->node_to_vertex) {
      if (v >= mesh.vertex_count()) throw Error("build_hierarchy: graph node refers to a missing vertex");
      if (is_graph_vertex[v]) throw Error("build_hierarchy: graph node_to_vertex is not injective");
      is_graph_vertex[v] = true;
    }
  }

  HierarchyLevel base;
  base.mesh = mesh;
  base.select_indices.resize(mesh.vertex_count());
  std::iota(base.select_indices.begin(), base.select_indices.end(), Index{0});
  base.provenance = base.select_indices;
  base.up_weights.resize(mesh.vertex_count());
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    base.up_weights[i].count = 1;
    base.up_weights[i].index[0] = static_cast<Index>(i);
    base.up_weights[i].weight[0] = 1.0f;
  }
  h.levels.push_back(std::move(base));

  for (std::size_t k = 1; k < level_counts.size(); ++k) {
    const HierarchyLevel& prev = h.levels.back();
    SimplifyOptions opts;
    opts.target_vertices = level_counts[k];
    opts.placement = Placement::Endpoint;
    if (static_cast<int>(k) <= h.graph_level) {
      opts.protect.resize(prev.vertex_count());
      std::size_t protected_count = 0;
      for (std::size_t i = 0; i < prev.vertex_count(); ++i) {
        opts.protect[i] = is_graph_vertex[prev.provenance[i]];
        protected_count += opts.protect[i] ? 1 : 0;
      }
      if (protected_count > level_counts[k]) {
        throw InfeasibleError("build_hierarchy: level " + std::to_string(k) + " target " +
                              std::to_string(level_counts[k]) + " is below the " + std::to_string(protected_count) +
                              " protected graph vertices");
      }
    }
    SimplifyResult r = simplify(prev.mesh, opts);
    HierarchyLevel level;
    level.mesh = Mesh(std::move(r.positions), std::move(r.faces));
    level.select_indices = std::move(r.kept);
    level.up_weights = compute_up_weights(prev.mesh, level.mesh, level.select_indices);
    for (Index s : level.select_indices) level.provenance.push_back(prev.provenance[s]);
    h.levels.push_back(std::move(level));
  }
  validate_hierarchy(h, graph);
  return h;
}

void validate_hierarchy(const MeshHierarchy& h, const DeformationGraph* graph) {
  if (h.levels.empty()) throw Error("hierarchy has no levels");
  for (std::size_t k = 0; k < h.levels.size(); ++k) {
    const HierarchyLevel& level = h.levels[k];
    const std::size_t finer = k == 0 ? level.vertex_count() : h.levels[k - 1].vertex_count();
    const std::string tag = "hierarchy level " + std::to_string(k) + ": ";
    if (level.select_indices.size() != level.vertex_count()) throw Error(tag + "select_indices size mismatch");
    if (level.up_weights.size() != finer) throw Error(tag + "up_weights size mismatch");
    if (level.provenance.size() != level.vertex_count()) throw Error(tag + "provenance size mismatch");
    if (k > 0 && level.vertex_count() >= finer) throw Error(tag + "vertex count must decrease");
    std::vector<bool> seen(finer, false);
    for (std::size_t j = 0; j < level.select_indices.size(); ++j) {
      const Index s = level.select_indices[j];
      if (s >= finer || seen[s]) throw Error(tag + "select_indices is not an injective map into the finer level");
      seen[s] = true;
      if (k > 0) {
        const HierarchyLevel& prev = h.levels[k - 1];
        if (prev.mesh.vertices()[s] != level.mesh.vertices()[j]) throw Error(tag + "coarse vertex moved");
        if (prev.provenance[s] != level.provenance[j]) throw Error(tag + "provenance mismatch");
      }
    }
    for (std::size_t i = 0; i < level.up_weights.size(); ++i) {
      const UpRow& row = level.up_weights[i];
      if (row.count < 1 || row.count > 3) throw Error(tag + "up_weights row must have 1 to 3 entries");
      double sum = 0.0;
      for (std::uint32_t e = 0; e < row.count; ++e) {
        if (row.index[e] >= level.vertex_count() || !(row.weight[e] >= 0.0f)) {
          throw Error(tag + "invalid up_weights entry");
        }
        sum += row.weight[e];
      }
      if (std::abs(sum - 1.0) > 1e-6) throw Error(tag + "up_weights row does not sum to 1");
      if (seen[i] && !(row.count == 1 && row.weight[0] == 1.0f)) {
        throw Error(tag + "surviving vertex must carry a single unit weight");
      }
    }
  }
  if (graph != nullptr && h.graph_level > 0) {
    if (h.graph_level >= static_cast<int>(h.levels.size())) throw Error("graph level out of range");
    if (h.levels[h.graph_level].provenance != graph->node_to_vertex) {
      throw Error("graph level vertices differ from the deformation graph nodes");
    }
  }
}

}  // namespace demea
