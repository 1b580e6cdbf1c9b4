#include <gtest/gtest.h>

#include <json.hpp>

#include "cli.hpp"
#include "demea/autoencoder.hpp"
#include "demea/checkpoint.hpp"
#include "test_util.hpp"

using namespace demea;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  ::testing::internal::CaptureStdout();
  const int rc = cli::run(args);
  std::fflush(stdout);
  const std::string text = ::testing::internal::GetCapturedStdout();
  if (out) *out = text;
  return rc;
}

std::string p(const fs::path& path) { return path.string(); }

// A run directory holding a hierarchy copy, config.json and a checkpoint, as train writes it.
struct TrainedRun {
  fs::path dir;
  fs::path ckpt;
  std::unique_ptr<Autoencoder<float>> model;
};

TrainedRun make_run(const std::string& name, bool perturb) {
  TrainedRun r;
  r.dir = testkit::scratch_dir(name);
  save_artifact(testkit::small_artifact(), r.dir / "hierarchy");
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.encoder_widths = {4, 8};
  cfg.hierarchy = "hierarchy";
  save_config(cfg, r.dir / "config.json");
  r.model = std::make_unique<Autoencoder<float>>(make_topology(testkit::small_artifact()), cfg);
  r.model->initialize(7);
  if (perturb) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-0.05f, 0.05f);
    for (auto& x : r.model->parameters()[r.model->parameters().find("dec.out.weight")].value) x = u(rng);
  }
  r.ckpt = r.dir / "ckpt.bin";
  save_checkpoint(r.model->parameters(), r.ckpt);
  return r;
}

std::vector<fs::path> write_poses(const fs::path& dir, std::size_t n) {
  const auto topo = make_topology(testkit::small_artifact());
  DeformationOptions o;
  o.max_bend = 0.5;
  const auto data = synthesize_dataset(topo->edl, topo->graph(), n, o, 11);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < n; ++i) {
    files.push_back(dir / ("pose_" + std::to_string(i) + ".obj"));
    save_mesh(topo->template_mesh().with_vertices(data[i]), files.back());
  }
  return files;
}

double max_deviation(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

}  // namespace

TEST(Cli, BuildHierarchyPrintsCountsAndIsReproducible) {
  const fs::path d = testkit::scratch_dir("cli_bh");
  save_mesh(make_icosphere(2), d / "ico.obj");
  std::string out;
  ASSERT_EQ(run_cli({"build-hierarchy", p(d / "ico.obj"), "--graph-nodes", "42", "--levels", "162,42,12", "--out",
                     p(d / "a")},
                    &out),
            0);
  EXPECT_NE(out.find("162"), std::string::npos);
  EXPECT_NE(out.find("42"), std::string::npos);
  EXPECT_NE(out.find("(graph)"), std::string::npos);
  ASSERT_EQ(run_cli({"build-hierarchy", p(d / "ico.obj"), "--graph-nodes", "42", "--levels", "162,42,12", "--out",
                     p(d / "b")}),
            0);
  for (const auto& e : fs::directory_iterator(d / "a")) {
    EXPECT_EQ(testkit::slurp(e.path()), testkit::slurp(d / "b" / e.path().filename())) << e.path().filename();
  }
  EXPECT_EQ(load_artifact(d / "a").hierarchy.level_counts(), (std::vector<std::size_t>{162, 42, 12}));
}

TEST(Cli, UsageAndInputErrorsExitWithTwo) {
  const fs::path d = testkit::scratch_dir("cli_err");
  save_mesh(make_icosphere(2), d / "ico.obj");
  EXPECT_EQ(run_cli({"build-hierarchy", p(d / "ico.obj"), "--graph-nodes", "42", "--levels", "162,80,90", "--out",
                     p(d / "x")}),
            2);
  EXPECT_EQ(run_cli({"build-hierarchy", p(d / "missing.obj"), "--graph-nodes", "42", "--levels", "162,42", "--out",
                     p(d / "x")}),
            2);
  EXPECT_EQ(run_cli({"build-hierarchy", p(d / "ico.obj")}), 2);
  EXPECT_EQ(run_cli({"no-such-command"}), 2);
  EXPECT_EQ(run_cli({}), 2);

  const TrainedRun r = make_run("cli_err_run", false);
  EXPECT_EQ(run_cli({"train", "--config", p(r.dir / "config.json"), "--data", p(d / "nodata"), "--out", p(d / "o")}),
            2);
  EXPECT_EQ(run_cli({"roundtrip", "--ckpt", p(d / "none.bin"), p(d / "ico.obj"), "--out", p(d / "r.obj")}), 2);
}

TEST(Cli, TrainWritesRunDirectory) {
  const fs::path d = testkit::scratch_dir("cli_train");
  save_artifact(testkit::small_artifact(), d / "hier");
  write_poses(d / "data", 4);
  {
    std::ofstream cfg(d / "cfg.json");
    cfg << R"({"latent_dim": 4, "encoder_widths": [4, 8], "batch_size": 2, "max_steps": 3, "hierarchy": "hier"})";
  }
  std::string out;
  ASSERT_EQ(run_cli({"train", "--config", p(d / "cfg.json"), "--data", p(d / "data"), "--out", p(d / "run"),
                     "--variant", "GL", "--seed", "9"},
                    &out),
            0);
  EXPECT_NE(out.find("final loss"), std::string::npos);
  for (const char* f : {"config.json", "ckpt_latest.bin", "loss.csv", "run_manifest.json", "hierarchy/manifest.json"}) {
    EXPECT_TRUE(fs::exists(d / "run" / f)) << f;
  }
  const ModelConfig saved = load_config(d / "run" / "config.json");
  EXPECT_EQ(saved.variant, Variant::Gl);
  EXPECT_EQ(saved.seed, 9u);
  const auto manifest = nlohmann::json::parse(testkit::slurp(d / "run" / "run_manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["seed"], 9);
  EXPECT_EQ(manifest["arguments"].size(), 11u);

  // The run directory is self-contained: roundtrip works from it directly.
  EXPECT_EQ(run_cli({"roundtrip", "--ckpt", p(d / "run" / "ckpt_latest.bin"), p(d / "data" / "pose_0.obj"), "--out",
                     p(d / "rt.obj")}),
            0);
}

TEST(Cli, RoundtripOfTemplateThroughZeroInitModelIsExact) {
  const TrainedRun r = make_run("cli_rt_zero", false);
  save_mesh(testkit::small_artifact().hierarchy.levels[0].mesh, r.dir / "tmpl.obj");
  std::string out;
  ASSERT_EQ(run_cli({"roundtrip", "--ckpt", p(r.ckpt), p(r.dir / "tmpl.obj"), "--out", p(r.dir / "recon.obj")}, &out), 0);
  const std::string key = "mean per-vertex error ";
  const auto pos = out.find(key);
  ASSERT_NE(pos, std::string::npos) << out;
  EXPECT_LT(std::stod(out.substr(pos + key.size())), 1e-12);
}

TEST(Cli, RoundtripErrorMatchesIndependentRecomputation) {
  const TrainedRun r = make_run("cli_rt", true);
  const auto poses = write_poses(r.dir / "poses", 1);
  std::string out;
  ASSERT_EQ(run_cli({"roundtrip", "--ckpt", p(r.ckpt), p(poses[0]), "--out", p(r.dir / "recon.obj")}, &out), 0);
  const std::string key = "mean per-vertex error ";
  const auto pos = out.find(key);
  ASSERT_NE(pos, std::string::npos);
  const double reported = std::stod(out.substr(pos + key.size()));

  const Mesh a = load_mesh(poses[0]), b = load_mesh(r.dir / "recon.obj");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.vertex_count(); ++i) {
    const Vec3 d = a.vertices()[i] - b.vertices()[i];
    sum += std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
  }
  EXPECT_GT(reported, 0.0);
  EXPECT_NEAR(reported, sum / static_cast<double>(a.vertex_count()), 1e-8);
  EXPECT_TRUE(fs::exists(r.dir / "recon.errors.csv"));
}

TEST(Cli, LatentInterpolateEndpointsMatchReconstructions) {
  const TrainedRun r = make_run("cli_interp", true);
  const auto poses = write_poses(r.dir / "poses", 2);
  ASSERT_EQ(run_cli({"latent", "interpolate", "--ckpt", p(r.ckpt), "--source", p(poses[0]), "--target", p(poses[1]),
                     "--alphas", "0,0.2,0.4,0.6,0.8,1", "--out", p(r.dir / "interp")}),
            0);
  std::size_t objs = 0;
  for (const auto& e : fs::directory_iterator(r.dir / "interp")) objs += e.path().extension() == ".obj";
  EXPECT_EQ(objs, 6u);
  const auto first = load_mesh(r.dir / "interp" / "frame_0000.obj").vertices();
  const auto last = load_mesh(r.dir / "interp" / "frame_0005.obj").vertices();
  EXPECT_LT(max_deviation(first, r.model->autoencode(load_mesh(poses[0]).vertices())), 1e-12);
  EXPECT_LT(max_deviation(last, r.model->autoencode(load_mesh(poses[1]).vertices())), 1e-12);
}

TEST(Cli, LatentSmoothWithAlphaOneEqualsPlainDecoding) {
  const TrainedRun r = make_run("cli_smooth", true);
  const auto poses = write_poses(r.dir / "poses", 3);
  std::vector<std::string> smooth{"latent", "smooth", "--ckpt", p(r.ckpt), "--alpha", "1", "--out", p(r.dir / "s")};
  std::vector<std::string> encode{"latent", "encode", "--ckpt", p(r.ckpt), "--out", p(r.dir / "e")};
  for (const auto& f : poses) {
    smooth.push_back(p(f));
    encode.push_back(p(f));
  }
  ASSERT_EQ(run_cli(smooth), 0);
  ASSERT_EQ(run_cli(encode), 0);
  ASSERT_EQ(run_cli({"latent", "decode", "--ckpt", p(r.ckpt), "--codes", p(r.dir / "e" / "latents.csv"), "--out",
                     p(r.dir / "d")}),
            0);
  for (const char* f : {"frame_0000.obj", "frame_0001.obj", "frame_0002.obj"}) {
    EXPECT_EQ(testkit::slurp(r.dir / "s" / f), testkit::slurp(r.dir / "d" / f)) << f;
  }
}

TEST(Cli, LatentTransferFirstFrameIsTargetDecoding) {
  const TrainedRun r = make_run("cli_transfer", true);
  const auto poses = write_poses(r.dir / "poses", 4);
  ASSERT_EQ(run_cli({"latent", "transfer", "--ckpt", p(r.ckpt), "--target-pose0", p(poses[3]), p(poses[0]),
                     p(poses[1]), p(poses[2]), "--out", p(r.dir / "t")}),
            0);
  const auto first = load_mesh(r.dir / "t" / "frame_0000.obj").vertices();
  EXPECT_LT(max_deviation(first, r.model->autoencode(load_mesh(poses[3]).vertices())), 1e-12);
  EXPECT_TRUE(fs::exists(r.dir / "t" / "frame_0002.obj"));
}

TEST(Cli, GradcheckExitCodes) {
  std::string out;
  EXPECT_EQ(run_cli({"gradcheck", "--scope", "edl", "--seed", "3"}, &out), 0);
  EXPECT_NE(out.find("PASS"), std::string::npos);
  EXPECT_EQ(run_cli({"gradcheck", "--scope", "end2end", "--seed", "1"}), 0);
  EXPECT_EQ(run_cli({"gradcheck", "--scope", "edl", "--corrupt-backward"}, &out), 1);
  EXPECT_NE(out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run_cli({"gradcheck", "--scope", "nope"}), 2);
}
