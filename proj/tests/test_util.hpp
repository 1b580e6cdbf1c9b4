#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "demea/hierarchy_io.hpp"
#include "demea/synthetic.hpp"

namespace demea::testkit {

// Icosphere(2) with a 42-node graph and levels 162 / 42 / 12. Built once per process.
inline const HierarchyArtifact& small_artifact() {
  static const HierarchyArtifact a = [] {
    const Mesh m = make_icosphere(2);
    DeformationGraph g = extract_graph(m, 42);
    const std::vector<std::size_t> counts{162, 42, 12};
    MeshHierarchy h = build_hierarchy(m, &g, counts);
    return make_artifact(std::move(h), std::move(g));
  }();
  return a;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("demea_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> v(n);
  for (auto& p : v) p = Vec3(u(rng), u(rng), u(rng));
  return v;
}

}  // namespace demea::testkit
