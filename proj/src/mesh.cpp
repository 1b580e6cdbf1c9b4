#include "demea/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "demea/error.hpp"

namespace demea {

std::vector<Edge> edges_of(std::span<const Face> faces) {
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      Index a = f[k], b = f[(k + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const auto n = vertices_.size();
  for (std::size_t i = 0; i < faces_.size(); ++i) {
    const Face& f = faces_[i];
    for (Index idx : f) {
      if (idx >= n) {
        throw Error("face " + std::to_string(i) + " references vertex " + std::to_string(idx) +
                    " but mesh has " + std::to_string(n) + " vertices");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw Error("face " + std::to_string(i) + " is degenerate (repeated vertex index)");
    }
  }
  edges_ = edges_of(faces_);
}

std::vector<std::vector<Index>> Mesh::adjacency() const {
  std::vector<std::vector<Index>> adj(vertices_.size());
  for (const auto& [a, b] : edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

Mesh Mesh::with_vertices(std::vector<Vec3> vertices) const {
  if (vertices.size() != vertices_.size()) {
    throw ShapeError("with_vertices: expected " + std::to_string(vertices_.size()) + " vertices, got " +
                     std::to_string(vertices.size()));
  }
  Mesh out = *this;
  out.vertices_ = std::move(vertices);
  return out;
}

namespace {

// Parses the vertex index of an OBJ face token ("7", "7/2", "7//3", "-1").
long parse_face_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(head, &used);
  } catch (const std::exception&) {
    throw ParseError("invalid face index '" + token + "'", line);
  }
  if (used != head.size() || value == 0) throw ParseError("invalid face index '" + token + "'", line);
  // Negative indices are relative to the vertices read so far.
  return value > 0 ? value - 1 : static_cast<long>(vertex_count) + value;
}

}  // namespace

Mesh parse_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<std::size_t> face_lines;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError("vertex needs three coordinates", line);
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (tokens.size() != 3) {
        throw ParseError("only triangle faces are supported (got " + std::to_string(tokens.size()) + " vertices)",
                         line);
      }
      Face f{};
      for (int k = 0; k < 3; ++k) {
        const long idx = parse_face_index(tokens[k], vertices.size(), line);
        if (idx < 0) throw ParseError("face index out of range '" + tokens[k] + "'", line);
        f[k] = static_cast<Index>(idx);
      }
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) throw ParseError("degenerate face", line);
      faces.push_back(f);
      face_lines.push_back(line);
    }
    // vn, vt, o, g, s, usemtl, mtllib and unknown records are ignored.
  }
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (Index idx : faces[i]) {
      if (idx >= vertices.size()) {
        throw ParseError("face index " + std::to_string(idx + 1) + " out of range (" +
                             std::to_string(vertices.size()) + " vertices)",
                         face_lines[i]);
      }
    }
  }
  return Mesh(std::move(vertices), std::move(faces));
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path.string());
  try {
    return parse_obj(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_obj(const Mesh& mesh, std::ostream& out) {
  char buf[128];
  for (const Vec3& v : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const Face& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  write_obj(mesh, out);
  if (!out) throw IoError("write failed: " + path.string());
}

BoundingMetrics compute_metrics(std::span<const Vec3> vertices) {
  if (vertices.size() < 2) throw Error("compute_metrics needs at least 2 vertices");
  Vec3 lo = vertices[0], hi = vertices[0];
  double best = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    lo = lo.cwiseMin(vertices[i]);
    hi = hi.cwiseMax(vertices[i]);
    for (std::size_t j = i + 1; j < vertices.size(); ++j) {
      best = std::max(best, (vertices[i] - vertices[j]).squaredNorm());
    }
  }
  return {std::sqrt(best), (hi - lo).norm()};
}

}  // namespace demea
