#include "demea/qem.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>

#include <Eigen/Dense>

#include "demea/error.hpp"

namespace demea {
namespace {

using Quadric = Eigen::Matrix4d;

// Strictly greater than any finite collapse cost.
constexpr double kInfiniteCost = std::numeric_limits<double>::max();

double evaluate(const Quadric& q, const Vec3& p) {
  const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  // Clamp tiny negative values from cancellation; costs are sums of squares.
  return std::max(0.0, h.dot(q * h));
}

Quadric plane_quadric(const Vec3& normal, const Vec3& point, double weight) {
  const Eigen::Vector4d plane(normal.x(), normal.y(), normal.z(), -normal.dot(point));
  return weight * (plane * plane.transpose());
}

struct Key {
  int tier = 0;  // 0 regular, 1 causes a fold-over, 2 removes a protected vertex
  double cost = 0.0;
  Index a = 0;
  Index b = 0;
  auto operator<=>(const Key&) const = default;
};

struct Choice {
  int tier = 0;
  double cost = 0.0;
  Index keep = 0;
  Index remove = 0;
  Vec3 position;
};

class Simplifier {
 public:
  Simplifier(const Mesh& mesh, const SimplifyOptions& options)
      : options_(options),
        pos_(mesh.vertices()),
        faces_(mesh.faces()),
        face_alive_(mesh.faces().size(), true),
        vertex_alive_(mesh.vertex_count(), true),
        incident_(mesh.vertex_count()),
        quadric_(mesh.vertex_count(), Quadric::Zero()) {
    if (!options_.protect.empty() && options_.protect.size() != mesh.vertex_count()) {
      throw ShapeError("simplify: protect mask has wrong length");
    }
    if (options_.placement == Placement::Optimal && !options_.protect.empty()) {
      throw Error("simplify: protected vertices require endpoint placement");
    }
    init_quadrics(mesh);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (Index v : faces_[f]) incident_[v].push_back(static_cast<Index>(f));
    }
    for (const Edge& e : mesh.edges()) update_edge(e.first, e.second);
    alive_count_ = mesh.vertex_count();
  }

  SimplifyResult run() {
    while (alive_count_ > options_.target_vertices) {
      if (queue_.empty()) {
        throw InfeasibleError("simplify: no collapsible edges left with " + std::to_string(alive_count_) +
                              " vertices (target " + std::to_string(options_.target_vertices) + ")");
      }
      const Key key = *queue_.begin();
      if (key.tier >= 2) {
        throw InfeasibleError("simplify: reaching " + std::to_string(options_.target_vertices) +
                              " vertices would remove a protected vertex");
      }
      const Choice choice = choose(key.a, key.b);
      collapse(choice);
    }
    return collect();
  }

 private:
  bool is_protected(Index v) const { return !options_.protect.empty() && options_.protect[v]; }

  void init_quadrics(const Mesh& mesh) {
    double area_sum = 0.0;
    std::map<Edge, int> edge_use;
    std::map<Edge, std::size_t> edge_face;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Face& face = faces_[f];
      const Vec3 cross = (pos_[face[1]] - pos_[face[0]]).cross(pos_[face[2]] - pos_[face[0]]);
      const double area = 0.5 * cross.norm();
      area_sum += area;
      if (area > 0.0) {
        const Quadric q = plane_quadric(cross.normalized(), pos_[face[0]], area);
        for (Index v : face) quadric_[v] += q;
      }
      for (int k = 0; k < 3; ++k) {
        const Edge e{std::min(face[k], face[(k + 1) % 3]), std::max(face[k], face[(k + 1) % 3])};
        ++edge_use[e];
        edge_face[e] = f;
      }
    }
    if (faces_.empty()) return;
    const double boundary_weight = options_.boundary_weight_factor * area_sum / static_cast<double>(faces_.size());
    for (const auto& [edge, uses] : edge_use) {
      if (uses != 1) continue;
      const Face& face = faces_[edge_face.at(edge)];
      const Vec3 normal = (pos_[face[1]] - pos_[face[0]]).cross(pos_[face[2]] - pos_[face[0]]);
      const Vec3 dir = pos_[edge.second] - pos_[edge.first];
      const Vec3 perp = dir.cross(normal);
      if (perp.norm() == 0.0) continue;
      const Quadric q = plane_quadric(perp.normalized(), pos_[edge.first], boundary_weight);
      quadric_[edge.first] += q;
      quadric_[edge.second] += q;
    }
    (void)mesh;
  }

  std::vector<Index> neighbors(Index v) const {
    std::vector<Index> out;
    for (Index f : incident_[v]) {
      for (Index u : faces_[f]) {
        if (u != v) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool edge_exists(Index a, Index b) const {
    if (!vertex_alive_[a] || !vertex_alive_[b]) return false;
    for (Index f : incident_[a]) {
      const Face& face = faces_[f];
      if (face[0] == b || face[1] == b || face[2] == b) return true;
    }
    return false;
  }

  // True if moving `moved` to `target` flips or degenerates a face incident to `moved`
  // that survives the collapse (faces containing `other` vanish).
  bool folds_over(Index moved, Index other, const Vec3& target) const {
    for (Index f : incident_[moved]) {
      const Face& face = faces_[f];
      if (face[0] == other || face[1] == other || face[2] == other) continue;
      Vec3 p[3], q[3];
      for (int k = 0; k < 3; ++k) {
        p[k] = pos_[face[k]];
        q[k] = face[k] == moved ? target : p[k];
      }
      const Vec3 before = (p[1] - p[0]).cross(p[2] - p[0]);
      const Vec3 after = (q[1] - q[0]).cross(q[2] - q[0]);
      if (before.norm() == 0.0) continue;
      if (before.dot(after) <= 0.0) return true;
    }
    return false;
  }

  Choice endpoint_option(Index keep, Index remove, const Quadric& q) const {
    Choice c;
    c.keep = keep;
    c.remove = remove;
    c.position = pos_[keep];
    if (is_protected(remove)) {
      c.tier = 2;
      c.cost = kInfiniteCost;
      return c;
    }
    c.cost = evaluate(q, c.position);
    c.tier = folds_over(remove, keep, c.position) ? 1 : 0;
    return c;
  }

  Choice choose(Index a, Index b) const {
    const Quadric q = quadric_[a] + quadric_[b];
    if (options_.placement == Placement::Endpoint) {
      const Choice keep_a = endpoint_option(a, b, q);
      const Choice keep_b = endpoint_option(b, a, q);
      // Prefer keeping the smaller index on exact ties.
      const bool b_better = std::tie(keep_b.tier, keep_b.cost) < std::tie(keep_a.tier, keep_a.cost);
      return b_better ? keep_b : keep_a;
    }
    Choice c;
    c.keep = std::min(a, b);
    c.remove = std::max(a, b);
    Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
    const Vec3 rhs = -q.topRightCorner<3, 1>();
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    bool solved = false;
    if (lu.isInvertible() && lu.rcond() > 1e-10) {
      c.position = lu.solve(rhs);
      solved = c.position.allFinite();
    }
    if (!solved) {
      const Vec3 candidates[3] = {pos_[a], pos_[b], 0.5 * (pos_[a] + pos_[b])};
      double best = kInfiniteCost;
      for (const Vec3& p : candidates) {
        const double e = evaluate(q, p);
        if (e < best) {
          best = e;
          c.position = p;
        }
      }
    }
    c.cost = evaluate(q, c.position);
    c.tier = (folds_over(a, b, c.position) || folds_over(b, a, c.position)) ? 1 : 0;
    return c;
  }

  void update_edge(Index u, Index w) {
    const Index a = std::min(u, w), b = std::max(u, w);
    const Edge e{a, b};
    if (auto it = current_.find(e); it != current_.end()) {
      queue_.erase(it->second);
      current_.erase(it);
    }
    if (!edge_exists(a, b)) return;
    const Choice c = choose(a, b);
    const Key key{c.tier, c.cost, a, b};
    queue_.insert(key);
    current_.emplace(e, key);
  }

  void collapse(const Choice& c) {
    const Index keep = c.keep, remove = c.remove;
    const std::vector<Index> old_neighbors = neighbors(remove);

    quadric_[keep] += quadric_[remove];
    pos_[keep] = c.position;

    const std::vector<Index> faces_of_remove = std::move(incident_[remove]);
    incident_[remove].clear();
    for (Index f : faces_of_remove) {
      if (!face_alive_[f]) continue;
      Face& face = faces_[f];
      const bool has_keep = face[0] == keep || face[1] == keep || face[2] == keep;
      if (has_keep) {
        kill_face(f);
        continue;
      }
      for (Index& v : face) {
        if (v == remove) v = keep;
      }
      if (duplicates_existing(f, keep)) {
        kill_face(f);
        continue;
      }
      incident_[keep].push_back(f);
    }
    vertex_alive_[remove] = false;
    --alive_count_;

    for (Index u : old_neighbors) {
      if (auto it = current_.find(Edge{std::min(u, remove), std::max(u, remove)}); it != current_.end()) {
        queue_.erase(it->second);
        current_.erase(it);
      }
    }
    // Costs depend on the endpoint quadrics and on the faces around each endpoint.
    std::vector<Index> ring = neighbors(keep);
    ring.push_back(keep);
    for (Index u : ring) {
      for (Index w : neighbors(u)) update_edge(u, w);
    }
    for (Index u : old_neighbors) {
      if (vertex_alive_[u]) {
        for (Index w : neighbors(u)) update_edge(u, w);
      }
    }
  }

  bool duplicates_existing(Index f, Index keep) const {
    Face sorted = faces_[f];
    std::sort(sorted.begin(), sorted.end());
    for (Index g : incident_[keep]) {
      if (g == f || !face_alive_[g]) continue;
      Face other = faces_[g];
      std::sort(other.begin(), other.end());
      if (other == sorted) return true;
    }
    return false;
  }

  void kill_face(Index f) {
    face_alive_[f] = false;
    for (Index v : faces_[f]) {
      auto& list = incident_[v];
      list.erase(std::remove(list.begin(), list.end(), f), list.end());
    }
  }

  SimplifyResult collect() const {
    SimplifyResult out;
    std::vector<Index> remap(pos_.size(), std::numeric_limits<Index>::max());
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (!vertex_alive_[v]) continue;
      remap[v] = static_cast<Index>(out.kept.size());
      out.kept.push_back(static_cast<Index>(v));
      out.positions.push_back(pos_[v]);
    }
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const Face& face = faces_[f];
      out.faces.push_back({remap[face[0]], remap[face[1]], remap[face[2]]});
    }
    return out;
  }

  const SimplifyOptions& options_;
  std::vector<Vec3> pos_;
  std::vector<Face> faces_;
  std::vector<bool> face_alive_;
  std::vector<bool> vertex_alive_;
  std::vector<std::vector<Index>> incident_;
  std::vector<Quadric> quadric_;
  std::set<Key> queue_;
  std::map<Edge, Key> current_;
  std::size_t alive_count_ = 0;
};

}  // namespace

SimplifyResult simplify(const Mesh& mesh, const SimplifyOptions& options) {
  if (options.target_vertices == 0 || options.target_vertices > mesh.vertex_count()) {
    throw InfeasibleError("simplify: target " + std::to_string(options.target_vertices) + " out of range for " +
                          std::to_string(mesh.vertex_count()) + " vertices");
  }
  Simplifier s(mesh, options);
  return s.run();
}

}  // namespace demea
