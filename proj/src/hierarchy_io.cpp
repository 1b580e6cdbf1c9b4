#include "demea/hierarchy_io.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "demea/binary_io.hpp"
#include "demea/error.hpp"

namespace demea {

namespace fs = std::filesystem;
using nlohmann::json;

HierarchyArtifact make_artifact(MeshHierarchy hierarchy, DeformationGraph graph, std::size_t spiral_length) {
  HierarchyArtifact a;
  for (const auto& level : hierarchy.levels) {
    const std::size_t S = spiral_length > 0 ? spiral_length : default_spiral_length(level.mesh);
    a.spirals.push_back(build_spirals(level.mesh, S));
    a.laplacians.push_back(build_spectral(level.mesh));
  }
  a.hierarchy = std::move(hierarchy);
  a.graph = std::move(graph);
  return a;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::string level_file(const char* stem, std::size_t k, const char* ext) {
  return std::string(stem) + "_" + std::to_string(k) + ext;
}

}  // namespace

void write_up_weights(const std::vector<UpRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  binary::write_u32(out, static_cast<std::uint32_t>(rows.size()));
  for (const UpRow& r : rows) {
    binary::write_u32(out, r.count);
    for (std::uint32_t k = 0; k < r.count; ++k) {
      binary::write_u32(out, r.index[k]);
      binary::write_f32(out, r.weight[k]);
    }
  }
}

std::vector<UpRow> read_up_weights(const fs::path& path) {
  auto in = open_in(path);
  std::vector<UpRow> rows(binary::read_u32(in));
  for (UpRow& r : rows) {
    r.count = binary::read_u32(in);
    if (r.count < 1 || r.count > 3) throw IoError(path.string() + ": up-weight row must have 1 to 3 entries");
    for (std::uint32_t k = 0; k < r.count; ++k) {
      r.index[k] = binary::read_u32(in);
      r.weight[k] = binary::read_f32(in);
    }
  }
  return rows;
}

void write_spirals(const SpiralSupport& s, const fs::path& path) {
  auto out = open_out(path);
  binary::write_u32(out, static_cast<std::uint32_t>(s.node_count()));
  binary::write_u32(out, static_cast<std::uint32_t>(s.length));
  for (std::int64_t v : s.indices) binary::write_i64(out, v);
}

SpiralSupport read_spirals(const fs::path& path) {
  auto in = open_in(path);
  const std::uint32_t n = binary::read_u32(in);
  SpiralSupport s;
  s.length = binary::read_u32(in);
  s.indices.resize(static_cast<std::size_t>(n) * s.length);
  for (auto& v : s.indices) {
    v = binary::read_i64(in);
    if (v < -1 || v >= static_cast<std::int64_t>(n)) throw IoError(path.string() + ": spiral index out of range");
  }
  return s;
}

void write_laplacian(const SpectralOperator& op, const fs::path& path) {
  auto out = open_out(path);
  binary::write_u32(out, static_cast<std::uint32_t>(op.n));
  binary::write_u32(out, static_cast<std::uint32_t>(op.value.size()));
  for (std::size_t i = 0; i < op.n; ++i) {
    for (std::size_t p = op.row_ptr[i]; p < op.row_ptr[i + 1]; ++p) {
      binary::write_u32(out, static_cast<std::uint32_t>(i));
      binary::write_u32(out, op.col[p]);
      binary::write_f64(out, op.value[p]);
    }
  }
}

SpectralOperator read_laplacian(const fs::path& path) {
  auto in = open_in(path);
  SpectralOperator op;
  op.n = binary::read_u32(in);
  const std::uint32_t nnz = binary::read_u32(in);
  op.row_ptr.assign(op.n + 1, 0);
  std::size_t last_row = 0;
  for (std::uint32_t e = 0; e < nnz; ++e) {
    const std::uint32_t r = binary::read_u32(in);
    const std::uint32_t c = binary::read_u32(in);
    const double v = binary::read_f64(in);
    if (r >= op.n || c >= op.n || r < last_row) throw IoError(path.string() + ": malformed COO triplets");
    last_row = r;
    ++op.row_ptr[r + 1];
    op.col.push_back(c);
    op.value.push_back(v);
  }
  for (std::size_t i = 0; i < op.n; ++i) {
    if (op.row_ptr[i + 1] == 0) op.isolated.push_back(static_cast<Index>(i));
    op.row_ptr[i + 1] += op.row_ptr[i];
  }
  return op;
}

void save_artifact(const HierarchyArtifact& a, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& h = a.hierarchy;
  json manifest;
  manifest["format"] = "demea-hierarchy";
  manifest["version"] = 1;
  manifest["level_counts"] = h.level_counts();
  manifest["graph_level"] = h.graph_level;
  manifest["node_to_vertex"] = a.graph.node_to_vertex;
  json edges = json::array();
  for (const auto& [u, v] : a.graph.edges) edges.push_back({u, v});
  manifest["graph_edges"] = edges;
  json levels = json::array();
  for (std::size_t k = 0; k < h.levels.size(); ++k) {
    const auto& level = h.levels[k];
    json entry;
    entry["mesh"] = level_file("level", k, ".obj");
    entry["up_weights"] = level_file("up_weights", k, ".bin");
    entry["spirals"] = level_file("spirals", k, ".bin");
    entry["laplacian"] = level_file("laplacian", k, ".bin");
    entry["spiral_length"] = a.spirals.at(k).length;
    entry["select_indices"] = level.select_indices;
    entry["provenance"] = level.provenance;
    levels.push_back(entry);
    save_mesh(level.mesh, dir / level_file("level", k, ".obj"));
    write_up_weights(level.up_weights, dir / level_file("up_weights", k, ".bin"));
    write_spirals(a.spirals.at(k), dir / level_file("spirals", k, ".bin"));
    write_laplacian(a.laplacians.at(k), dir / level_file("laplacian", k, ".bin"));
  }
  manifest["levels"] = levels;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

HierarchyArtifact load_artifact(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()), 0);
  }
  HierarchyArtifact a;
  try {
    a.hierarchy.graph_level = manifest.at("graph_level").get<int>();
    for (const auto& entry : manifest.at("levels")) {
      HierarchyLevel level;
      level.mesh = load_mesh(dir / entry.at("mesh").get<std::string>());
      level.select_indices = entry.at("select_indices").get<std::vector<Index>>();
      if (entry.contains("provenance")) {
        level.provenance = entry.at("provenance").get<std::vector<Index>>();
      } else if (a.hierarchy.levels.empty()) {
        level.provenance = level.select_indices;
      } else {
        for (Index s : level.select_indices) level.provenance.push_back(a.hierarchy.levels.back().provenance.at(s));
      }
      level.up_weights = read_up_weights(dir / entry.at("up_weights").get<std::string>());
      SpiralSupport spirals;
      if (entry.contains("spirals")) {
        spirals = read_spirals(dir / entry.at("spirals").get<std::string>());
      } else {
        spirals = build_spirals(level.mesh, default_spiral_length(level.mesh));
      }
      const auto adj = level.mesh.adjacency();
      for (std::size_t v = 0; v < adj.size(); ++v) {
        if (adj[v].empty()) spirals.isolated.push_back(static_cast<Index>(v));
      }
      a.laplacians.push_back(entry.contains("laplacian")
                                 ? read_laplacian(dir / entry.at("laplacian").get<std::string>())
                                 : build_spectral(level.mesh));
      a.spirals.push_back(std::move(spirals));
      a.hierarchy.levels.push_back(std::move(level));
    }
    a.graph.node_to_vertex = manifest.at("node_to_vertex").get<std::vector<Index>>();
    for (const auto& e : manifest.at("graph_edges")) {
      const Index u = e.at(0).get<Index>(), v = e.at(1).get<Index>();
      a.graph.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()), 0);
  }
  if (a.hierarchy.levels.empty()) throw Error("hierarchy manifest has no levels");
  const Mesh& mesh = a.hierarchy.levels.front().mesh;
  for (Index v : a.graph.node_to_vertex) {
    if (v >= mesh.vertex_count()) throw Error("graph node refers to a missing mesh vertex");
    a.graph.node_positions.push_back(mesh.vertices()[v]);
  }
  for (const auto& [u, v] : a.graph.edges) {
    if (v >= a.graph.node_count() || u == v) throw Error("graph edge refers to a missing node");
  }
  const auto counts = manifest.value("level_counts", a.hierarchy.level_counts());
  if (counts != a.hierarchy.level_counts()) throw Error("manifest level_counts disagree with level meshes");
  for (std::size_t k = 0; k < a.spirals.size(); ++k) {
    if (a.spirals[k].node_count() != a.hierarchy.levels[k].vertex_count() ||
        a.laplacians[k].n != a.hierarchy.levels[k].vertex_count()) {
      throw Error("support size does not match level " + std::to_string(k));
    }
  }
  validate_hierarchy(a.hierarchy, a.hierarchy.graph_level > 0 ? &a.graph : nullptr);
  return a;
}

}  // namespace demea
