// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances and budgets are fixed here and printed next to the measured values.

#include <Eigen/Dense>
#include <algorithm>
#include <Eigen/Geometry>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "demea/autoencoder.hpp"
#include "demea/checkpoint.hpp"
#include "demea/gradcheck.hpp"
#include "demea/hierarchy_io.hpp"
#include "demea/latent_ops.hpp"
#include "demea/synthetic.hpp"

using namespace demea;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kGradSeeds = 20;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kIdentityTol = 1e-12;
constexpr double kRigidTol = 1e-9;
constexpr double kUnityTol = 1e-9;
constexpr double kChebyshevTol = 1e-10;
constexpr double kUpRowTol = 1e-6;
constexpr double kProcrustesTol = 1e-9;
constexpr double kOverfitEdl = 1e-3;    // times bbox diagonal
constexpr double kOverfitOther = 5e-3;  // GL and LP, times bbox diagonal
constexpr std::size_t kOverfitSteps = 2000;
constexpr double kOverfitBudgetSeconds = 600.0;
constexpr double kVariantTol = 1e-6;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_deviation(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

struct Case {
  std::string name;
  Mesh mesh;
  std::vector<std::size_t> counts;
  std::size_t graph_nodes;
};

struct Built {
  std::string name;
  HierarchyArtifact artifact;
  EmbeddedDeformation edl;
};

Built build(const Case& c) {
  DeformationGraph g = extract_graph(c.mesh, c.graph_nodes);
  MeshHierarchy h = build_hierarchy(c.mesh, &g, c.counts);
  HierarchyArtifact a = make_artifact(std::move(h), std::move(g));
  EmbeddedDeformation edl(c.mesh.vertices(), a.graph, bind_skinning(c.mesh, a.graph, a.hierarchy.graph_level));
  return {c.name, std::move(a), std::move(edl)};
}

std::vector<Case> test_meshes() {
  std::mt19937_64 rng(21);
  return {
      {"icosphere", make_icosphere(2), {162, 42, 12}, 42},
      {"bar", make_bar(25, 6, 6, Vec3(4, 1, 1)), {532, 133, 34, 9}, 34},
      {"patch", make_grid_patch(12, 12, 0.15, rng), {144, 36, 9}, 36},
  };
}

// ---------------------------------------------------------------------------------------

void gradient_fidelity() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string worst;
  double worst_ratio = 0.0;
  for (GradScope s : {GradScope::Edl, GradScope::Spiral, GradScope::Spectral, GradScope::Fc, GradScope::Elu,
                      GradScope::Loss, GradScope::End2End}) {
    for (int seed = 1; seed <= kGradSeeds; ++seed) {
      const GradcheckReport r = run_gradcheck(s, static_cast<std::uint64_t>(seed));
      ok = ok && r.passed();
      if (r.max_rel_error / r.tolerance >= worst_ratio) {
        worst_ratio = r.max_rel_error / r.tolerance;
        worst = fmt("%s seed %d rel %.2e (tol %.0e)", to_string(s).c_str(), seed, r.max_rel_error, r.tolerance);
      }
    }
  }
  const double secs = seconds_since(t0);
  report(ok && secs < kGradBudgetSeconds, "gradient fidelity",
         fmt("7 scopes x %d seeds, worst %s, %.1fs (budget %.0fs)", kGradSeeds, worst.c_str(), secs, kGradBudgetSeconds));
}

void edl_identity(const std::vector<Built>& built) {
  double worst = 0.0;
  for (const Built& b : built) {
    worst = std::max(worst, max_deviation(b.edl.forward(NodeTransforms(b.artifact.graph.node_count())),
                                          b.edl.canonical_vertices()));
  }
  report(worst < kIdentityTol, "EDL identity", fmt("max deviation %.2e over %zu meshes (tol %.0e)", worst, built.size(), kIdentityTol));
}

void edl_rigid(const std::vector<Built>& built) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  for (const Built& b : built) {
    for (int trial = 0; trial < 10; ++trial) {
      const Mat3 r = random_rotation(rng);
      const Vec3 t(u(rng), u(rng), u(rng));
      std::vector<Vec3> want;
      for (const Vec3& p : b.edl.canonical_vertices()) want.push_back(r * p + t);
      worst = std::max(worst, max_deviation(b.edl.forward(rigid_node_transforms(b.artifact.graph, r, t)), want));
    }
  }
  report(worst < kRigidTol, "EDL rigid equivariance", fmt("max deviation %.2e (tol %.0e)", worst, kRigidTol));
}

void partition_of_unity(const std::vector<Built>& built) {
  double worst = 0.0;
  bool sigma_ok = true;
  for (const Built& b : built) {
    const SkinningBinding& s = b.edl.binding();
    for (std::size_t v = 0; v < s.vertex_count(); ++v) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s.neighbors_per_vertex; ++k) sum += s.weight[v * s.neighbors_per_vertex + k];
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    const double want = (2.0 / 3.0) * compute_metrics(b.edl.canonical_vertices()).d_max /
                        std::sqrt(static_cast<double>(b.artifact.graph.node_count()));
    sigma_ok = sigma_ok && s.sigma == want;
  }
  // Constructed cases: d_max 3 with 4 nodes gives 1; unit cube corners with 3 nodes give 2/3.
  sigma_ok = sigma_ok && skinning_sigma(3.0, 4) == 1.0;
  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  DeformationGraph g;
  g.node_positions = {cube[0], cube[3], cube[7]};
  g.node_to_vertex = {0, 3, 7};
  const SkinningBinding cb = bind_skinning(cube, g, 3, skinning_sigma(compute_metrics(cube).d_max, 3));
  sigma_ok = sigma_ok && std::abs(cb.sigma - 2.0 / 3.0) < 1e-15;
  report(worst < kUnityTol && sigma_ok, "partition of unity / sigma",
         fmt("max |sum w - 1| %.2e (tol %.0e), sigma formula %s", worst, kUnityTol, sigma_ok ? "exact" : "MISMATCH"));
}

Eigen::MatrixXd dense_scaled_laplacian(const Mesh& m) {
  const std::size_t n = m.vertex_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : m.edges()) a(e.first, e.second) = a(e.second, e.first) = 1.0;
  const Eigen::VectorXd d = a.rowwise().sum();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);  // L - I has a zero diagonal
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) l(i, j) = -1.0 / std::sqrt(d(i) * d(j));
    }
  }
  return l;
}

void chebyshev_oracle() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<Mesh> graphs{make_icosphere(1), make_grid_patch(7, 7, 0.1, rng), make_grid_patch(5, 10, 0.2, rng)};
  double worst = 0.0;
  for (const Mesh& m : graphs) {
    const std::size_t n = m.vertex_count(), fin = 3, fout = 4;
    const SpectralOperator op = build_spectral(m);
    const Eigen::MatrixXd l = dense_scaled_laplacian(m);
    for (std::size_t order = 1; order <= 6; ++order) {
      Tensor<double> x(n, fin);
      for (auto& v : x.data) v = u(rng);
      std::vector<double> theta(order * fin * fout), bias(fout);
      for (auto& v : theta) v = u(rng);
      for (auto& v : bias) v = u(rng);
      const Tensor<double> y = spectral_conv<double>(op, x, theta, bias, order, fout);

      Eigen::MatrixXd xm(n, fin);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < fin; ++c) xm(i, c) = x(i, c);
      // Dense T_k(L~) by the explicit matrix recurrence.
      std::vector<Eigen::MatrixXd> t{Eigen::MatrixXd::Identity(n, n), l};
      while (t.size() < order) t.push_back(2.0 * l * t.back() - t[t.size() - 2]);
      Eigen::MatrixXd want = Eigen::MatrixXd::Zero(n, fout);
      for (std::size_t k = 0; k < order; ++k) {
        Eigen::MatrixXd th(fin, fout);
        for (std::size_t i = 0; i < fin; ++i)
          for (std::size_t o = 0; o < fout; ++o) th(i, o) = theta[(k * fin + i) * fout + o];
        want += t[k] * xm * th;
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < fout; ++o) worst = std::max(worst, std::abs(y(i, o) - want(i, o) - bias[o]));
    }
  }
  report(worst < kChebyshevTol, "Chebyshev oracle", fmt("K=1..6 on graphs of 42-50 nodes, max abs diff %.2e (tol %.0e)", worst, kChebyshevTol));
}

std::string artifact_bytes(const HierarchyArtifact& a, const fs::path& dir) {
  fs::remove_all(dir);
  save_artifact(a, dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    all += f.filename().string() + '\0' + ss.str();
  }
  return all;
}

void hierarchy_invariants(const std::vector<Case>& cases, const std::vector<Built>& built) {
  bool subset = true, survive = true, determinism = true;
  double row_err = 0.0, down_up = 0.0;
  const fs::path tmp = fs::temp_directory_path() / "demea_acceptance";
  for (std::size_t c = 0; c < built.size(); ++c) {
    const MeshHierarchy& h = built[c].artifact.hierarchy;
    const DeformationGraph& g = built[c].artifact.graph;
    for (std::size_t k = 1; k < h.levels.size(); ++k) {
      const auto& coarse = h.levels[k];
      const auto& fine = h.levels[k - 1];
      for (std::size_t j = 0; j < coarse.vertex_count(); ++j) {
        subset = subset && coarse.mesh.vertices()[j] == fine.mesh.vertices()[coarse.select_indices[j]] &&
                 coarse.provenance[j] == fine.provenance[coarse.select_indices[j]];
      }
      for (const UpRow& r : coarse.up_weights) {
        double s = 0.0;
        for (std::uint32_t i = 0; i < r.count; ++i) s += r.weight[i];
        row_err = std::max(row_err, std::abs(s - 1.0));
      }
      Tensor<double> x(coarse.vertex_count(), 3);
      for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = std::sin(0.7 * static_cast<double>(i));
      const Tensor<double> back = downsample(coarse, upsample(coarse, x));
      for (std::size_t i = 0; i < x.size(); ++i) down_up = std::max(down_up, std::abs(back.data[i] - x.data[i]));
    }
    for (int k = 0; k <= h.graph_level; ++k) {
      const auto& prov = h.levels[k].provenance;
      for (Index v : g.node_to_vertex) survive = survive && std::find(prov.begin(), prov.end(), v) != prov.end();
    }
    // Rebuild from scratch and compare the saved artifacts byte for byte.
    const Built again = build(cases[c]);
    determinism = determinism && artifact_bytes(built[c].artifact, tmp / "a") == artifact_bytes(again.artifact, tmp / "b");
  }
  fs::remove_all(tmp);
  const bool ok = subset && survive && determinism && row_err < kUpRowTol && down_up < kUpRowTol;
  report(ok, "hierarchy invariants",
         fmt("subset %s, graph nodes survive %s, max |row sum - 1| %.1e, max |down(up(x)) - x| %.1e (tol %.0e), rebuild %s",
             subset ? "yes" : "NO", survive ? "yes" : "NO", row_err, down_up, kUpRowTol,
             determinism ? "byte-identical" : "DIFFERS"));
}

void procrustes_recovery(const std::vector<Built>& built) {
  std::mt19937_64 rng(17);
  double worst = 0.0, worst_det = 0.0;
  std::size_t rings = 0;
  for (const Built& b : built) {
    const DeformationGraph& g = b.artifact.graph;
    const auto adj = g.adjacency();
    for (std::size_t l = 0; l < g.node_count(); ++l) {
      std::vector<Vec3> a{g.node_positions[l]};
      for (Index j : adj[l]) a.push_back(g.node_positions[j]);
      const Mat3 r = random_rotation(rng);
      std::vector<Vec3> moved, mirrored;
      for (const Vec3& p : a) {
        moved.push_back(r * p + Vec3(1, 2, 3));
        mirrored.emplace_back(-p.x(), p.y(), p.z());
      }
      const ProcrustesResult res = procrustes_rotation(a, moved);
      if (!res.degenerate) {
        worst = std::max(worst, (res.rotation - r).norm());
        ++rings;
      }
      worst_det = std::max(worst_det, std::abs(res.rotation.determinant() - 1.0));
      worst_det = std::max(worst_det, std::abs(procrustes_rotation(a, mirrored).rotation.determinant() - 1.0));
    }
  }
  report(worst < kProcrustesTol && worst_det < 1e-12 && rings > 0, "Procrustes recovery",
         fmt("%zu 1-rings, max |R - R*| %.2e (tol %.0e), max |det - 1| %.1e incl. mirrored inputs", rings, worst,
             kProcrustesTol, worst_det));
}

// The overfit template: a 4 x 1 x 1 bar with 532 vertices, 4 levels, graph on level 2.
struct OverfitSetup {
  std::shared_ptr<const ModelTopology> topo;
  std::vector<std::vector<Vec3>> data;
  double diagonal = 0.0;
};

OverfitSetup overfit_setup() {
  const Mesh bar = make_bar(25, 6, 6, Vec3(4, 1, 1));
  DeformationGraph g = extract_graph(bar, 34);
  const std::vector<std::size_t> counts{532, 133, 34, 9};
  OverfitSetup s;
  MeshHierarchy h = build_hierarchy(bar, &g, counts);
  s.topo = make_topology(make_artifact(std::move(h), std::move(g)));
  DeformationOptions o;
  o.rotations_from_positions = true;
  s.data = synthesize_dataset(s.topo->edl, s.topo->graph(), 10, o, 7);
  s.diagonal = compute_metrics(bar).bbox_diagonal;
  return s;
}

ModelConfig overfit_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.latent_dim = 8;
  c.encoder_widths = {16, 32, 64};
  c.spiral_length = 12;
  c.batch_size = 8;
  c.adam = AdamSettings{};
  c.max_steps = kOverfitSteps;
  c.reshuffle_each_epoch = false;
  c.seed = 1;
  return c;
}

void overfit(const OverfitSetup& s) {
  std::printf("      overfit template: %zu vertices, levels 532/133/34/9, %zu samples, diagonal %.4f\n",
              s.topo->template_mesh().vertex_count(), s.data.size(), s.diagonal);
  bool ok = true;
  double total = 0.0;
  std::string detail;
  for (Variant v : {Variant::Edl, Variant::Gl, Variant::Lp}) {
    const auto t0 = Clock::now();
    Autoencoder<float> m(s.topo, overfit_config(v));
    m.initialize(1);
    const auto history = train(m, s.data);
    const double secs = seconds_since(t0);
    total += secs;
    const double rel = mean_l1_error(m, s.data) / s.diagonal;
    const double tol = v == Variant::Edl ? kOverfitEdl : kOverfitOther;
    ok = ok && rel < tol && history.size() == kOverfitSteps;
    detail += fmt("%s %.2e (tol %.0e, %.0fs)  ", to_string(v).c_str(), rel, tol, secs);
    std::printf("      %s: %zu steps, mean l1 error %.3e x diagonal, %.1fs\n", to_string(v).c_str(), history.size(), rel, secs);
    std::fflush(stdout);
  }
  ok = ok && total < kOverfitBudgetSeconds;
  report(ok, "overfit training", detail + fmt("total %.0fs (budget %.0fs)", total, kOverfitBudgetSeconds));
}

void variant_consistency(const std::vector<Built>& built) {
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (const Built& b : built) {
    auto topo = make_topology(b.artifact);
    for (int trial = 0; trial < 5; ++trial) {
      const Mat3 r = random_rotation(rng);
      const Vec3 t(0.5 * trial, -1.0, 2.0);
      std::vector<Vec3> target;
      for (const Vec3& p : topo->template_mesh().vertices()) target.push_back(r * p + t);
      // GL inference: node positions read off the target, rotations by local Procrustes.
      std::vector<Vec3> translations;
      for (std::size_t l = 0; l < topo->graph().node_count(); ++l) {
        translations.push_back(target[topo->graph().node_to_vertex[l]] - topo->graph().node_positions[l]);
      }
      worst = std::max(worst, max_deviation(reconstruct_from_translations(*topo, translations), target));
    }
  }
  report(worst < kVariantTol, "variant consistency", fmt("GL inference on rigid targets, max deviation %.2e (tol %.0e)", worst, kVariantTol));
}

void latent_algebra() {
  std::mt19937_64 rng(29);
  std::normal_distribution<float> n;
  auto code = [&] {
    LatentCode c(8);
    for (auto& x : c) x = n(rng);
    return c;
  };
  const LatentCode s = code(), t = code();
  const bool endpoints = interpolate(s, t, 0.0) == s && interpolate(s, t, 1.0) == t;

  LatentSequence seq;
  for (int i = 0; i < 10; ++i) seq.push_back(code());
  const LatentCode target0 = code();
  const LatentSequence moved = transfer(seq, target0);
  double offset_dev = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t k = 0; k < 8; ++k) {
      const float d = moved[i][k] - seq[i][k], d0 = target0[k] - seq[0][k];
      // One f32 rounding in each of the two differences.
      const float ulp = std::max({std::abs(moved[i][k]), std::abs(seq[i][k]), std::abs(target0[k]), std::abs(seq[0][k])}) *
                        std::numeric_limits<float>::epsilon();
      offset_dev = std::max(offset_dev, static_cast<double>(std::abs(d - d0) / ulp));
    }
  }
  const bool constant = offset_dev <= 2.0 && moved[0] == target0;
  const bool smoothing = smooth(seq, 1.0) == seq;
  report(endpoints && constant && smoothing, "latent algebra",
         fmt("interpolation endpoints %s, transfer offset within %.1f ulp, smooth(alpha=1) %s",
             endpoints ? "exact" : "INEXACT", offset_dev, smoothing ? "identity" : "CHANGED"));
}

void checkpoint_round_trip(const OverfitSetup& s) {
  ModelConfig c = overfit_config(Variant::Edl);
  c.max_steps = 5;
  Autoencoder<float> m(s.topo, c);
  m.initialize(3);
  train(m, s.data);
  const fs::path dir = fs::temp_directory_path() / "demea_acceptance_ckpt";
  fs::create_directories(dir);
  save_checkpoint(m.parameters(), dir / "c.bin");
  Autoencoder<float> back(s.topo, c);
  back.initialize(99);
  load_checkpoint(back.parameters(), dir / "c.bin");
  fs::remove_all(dir);
  bool identical = back.parameters().step() == m.parameters().step();
  for (const auto& x : s.data) {
    const auto a = m.autoencode(x), b = back.autoencode(x);
    for (std::size_t i = 0; i < a.size(); ++i) identical = identical && a[i] == b[i];
  }
  report(identical, "checkpoint round trip", identical ? "reconstructions bit-identical" : "reconstructions DIFFER");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<Case> cases = test_meshes();
  std::vector<Built> built;
  for (const Case& c : cases) built.push_back(build(c));

  gradient_fidelity();
  edl_identity(built);
  edl_rigid(built);
  partition_of_unity(built);
  chebyshev_oracle();
  hierarchy_invariants(cases, built);
  procrustes_recovery(built);
  const OverfitSetup setup = overfit_setup();
  overfit(setup);
  variant_consistency(built);
  latent_algebra();
  checkpoint_round_trip(setup);

  std::printf("%d failure(s), %.0fs total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
