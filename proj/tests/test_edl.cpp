#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "demea/edl.hpp"
#include "demea/synthetic.hpp"
#include "test_util.hpp"

using namespace demea;

namespace {

struct Rig {
  Mesh mesh;
  DeformationGraph graph;
  EmbeddedDeformation edl;
};

Rig make_rig(const Mesh& mesh, std::size_t nodes, int graph_level) {
  Rig r{mesh, extract_graph(mesh, nodes), {}};
  r.edl = EmbeddedDeformation(mesh.vertices(), r.graph, bind_skinning(mesh, r.graph, graph_level));
  return r;
}

const std::vector<Rig>& rigs() {
  static const std::vector<Rig> all{make_rig(make_icosphere(2), 42, 1), make_rig(make_bar(25, 6, 6, Vec3(4, 1, 1)), 34, 2)};
  return all;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

double max_deviation(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

}  // namespace

TEST(Edl, ZeroTransformsAreIdentity) {
  for (const Rig& r : rigs()) {
    const auto out = r.edl.forward(NodeTransforms(r.graph.node_count()));
    EXPECT_LT(max_deviation(out, r.mesh.vertices()), 1e-12);
  }
}

TEST(Edl, RigidTransformsAreEquivariant) {
  std::mt19937_64 rng(2);
  for (const Rig& r : rigs()) {
    for (int trial = 0; trial < 5; ++trial) {
      const Mat3 rot = random_rotation(rng);
      const Vec3 t = testkit::random_points(1, 100 + trial, 3.0)[0];
      const auto out = r.edl.forward(rigid_node_transforms(r.graph, rot, t));
      std::vector<Vec3> want;
      for (const Vec3& p : r.mesh.vertices()) want.push_back(rot * p + t);
      EXPECT_LT(max_deviation(out, want), 1e-9);
    }
  }
}

TEST(Edl, WeightsFormPartitionOfUnity) {
  for (const Rig& r : rigs()) {
    const SkinningBinding& b = r.edl.binding();
    ASSERT_EQ(b.vertex_count(), r.mesh.vertex_count());
    for (std::size_t v = 0; v < b.vertex_count(); ++v) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.neighbors_per_vertex; ++k) {
        const double w = b.weight[v * b.neighbors_per_vertex + k];
        EXPECT_GE(w, 0.0);
        s += w;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Edl, NeighborCountsAndSigma) {
  EXPECT_EQ(neighbor_count_for_level(1), 6u);
  EXPECT_EQ(neighbor_count_for_level(2), 12u);
  EXPECT_DOUBLE_EQ(skinning_sigma(3.0, 4), 1.0);
  EXPECT_DOUBLE_EQ(skinning_sigma(1.5, 9), 1.0 / 3.0);
  for (const Rig& r : rigs()) {
    const double want = (2.0 / 3.0) * compute_metrics(r.mesh).d_max / std::sqrt(static_cast<double>(r.graph.node_count()));
    EXPECT_DOUBLE_EQ(r.edl.binding().sigma, want);
  }
  EXPECT_EQ(rigs()[0].edl.binding().neighbors_per_vertex, 6u);
  EXPECT_EQ(rigs()[1].edl.binding().neighbors_per_vertex, 12u);
}

TEST(Edl, NearestNodesAreBound) {
  const Rig r = make_rig(make_icosphere(2), 42, 1);
  const SkinningBinding& b = r.edl.binding();
  // A graph node's own vertex is bound to that node first, with the largest weight.
  for (std::size_t l = 0; l < r.graph.node_count(); ++l) {
    const std::size_t v = r.graph.node_to_vertex[l];
    EXPECT_EQ(b.node_index[v * b.neighbors_per_vertex], l);
  }
}

TEST(Edl, EulerRoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.4, 1.4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(u(rng) * 2, u(rng), u(rng) * 2);
    const Mat3 r = euler_to_rotation(a);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LT((euler_to_rotation(rotation_to_euler(r)) - r).norm(), 1e-12);
  }
  // R = Rz * Ry * Rx
  const Vec3 a(0.3, -0.2, 0.7);
  const Mat3 want = (Eigen::AngleAxisd(a.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
                     Eigen::AngleAxisd(a.x(), Vec3::UnitX()))
                        .toRotationMatrix();
  EXPECT_LT((euler_to_rotation(a) - want).norm(), 1e-15);
  // Gimbal lock still round-trips the matrix.
  const Mat3 lock = euler_to_rotation(Vec3(0.4, std::numbers::pi / 2, -0.3));
  EXPECT_LT((euler_to_rotation(rotation_to_euler(lock)) - lock).norm(), 1e-12);
}

TEST(Procrustes, RecoversKnownRotation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = testkit::random_points(7, 1000 + trial);
    const Mat3 rot = random_rotation(rng);
    const Vec3 t(1, -2, 3);
    std::vector<Vec3> b;
    for (const Vec3& p : a) b.push_back(rot * p + t);
    const ProcrustesResult r = procrustes_rotation(a, b);
    EXPECT_FALSE(r.degenerate);
    EXPECT_LT((r.rotation - rot).norm(), 1e-9);
  }
}

TEST(Procrustes, NeverReturnsReflection) {
  const auto a = testkit::random_points(8, 77);
  std::vector<Vec3> mirrored;
  for (const Vec3& p : a) mirrored.emplace_back(-p.x(), p.y(), p.z());
  const ProcrustesResult r = procrustes_rotation(a, mirrored);
  EXPECT_NEAR(r.rotation.determinant(), 1.0, 1e-12);
  EXPECT_LT((r.rotation * r.rotation.transpose() - Mat3::Identity()).norm(), 1e-12);
}

TEST(Procrustes, CollinearInputIsFlagged) {
  const std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  const std::vector<Vec3> b{Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0)};
  const ProcrustesResult r = procrustes_rotation(a, b);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.rotation, Mat3::Identity());
}

TEST(Procrustes, LocalRotationsOfRigidlyMovedGraph) {
  const Rig r = make_rig(make_icosphere(2), 42, 1);
  std::mt19937_64 rng(8);
  const Mat3 rot = random_rotation(rng);
  std::vector<Vec3> moved;
  for (const Vec3& g : r.graph.node_positions) moved.push_back(rot * g + Vec3(0.5, 0, -1));
  for (const Mat3& m : local_procrustes_rotations(r.graph, moved)) EXPECT_LT((m - rot).norm(), 1e-9);
}

TEST(Edl, TransformsFileRoundTrip) {
  NodeTransforms t(3);
  t.euler_angles[1] = Vec3(0.25, -0.5, 1.0);
  t.translations[2] = Vec3(1, 2, 3);
  const auto d = testkit::scratch_dir("transforms");
  save_node_transforms(t, d / "t.bin");
  const NodeTransforms back = load_node_transforms(d / "t.bin");
  EXPECT_EQ(back.euler_angles, t.euler_angles);
  EXPECT_EQ(back.translations, t.translations);
}
