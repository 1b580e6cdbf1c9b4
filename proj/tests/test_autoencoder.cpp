#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "demea/autoencoder.hpp"
#include "demea/gradcheck.hpp"
#include "demea/synthetic.hpp"
#include "test_util.hpp"

using namespace demea;

namespace {

std::shared_ptr<const ModelTopology> small_topology() {
  static const auto topo = make_topology(testkit::small_artifact());
  return topo;
}

ModelConfig small_config(Variant v, ConvType c = ConvType::Spiral) {
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.encoder_widths = {4, 8};
  cfg.variant = v;
  cfg.conv_type = c;
  cfg.chebyshev_order = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  return cfg;
}

std::vector<std::vector<Vec3>> small_dataset(std::size_t n, std::uint64_t seed = 3) {
  const auto topo = small_topology();
  DeformationOptions o;
  o.max_bend = 0.4;
  o.max_twist = 0.4;
  return synthesize_dataset(topo->edl, topo->graph(), n, o, seed);
}

double max_deviation(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_) {
      ::setenv(name_, old_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(Autoencoder, ZeroInitDecodesTemplate) {
  const auto data = small_dataset(2);
  const auto& tmpl = small_topology()->template_mesh().vertices();
  for (Variant v : {Variant::Edl, Variant::Gl, Variant::Lp}) {
    for (ConvType c : {ConvType::Spiral, ConvType::Spectral}) {
      Autoencoder<float> m(small_topology(), small_config(v, c));
      m.initialize(1);
      EXPECT_LT(max_deviation(m.autoencode(data[0]), tmpl), 1e-9) << to_string(v) << " " << to_string(c);
    }
  }
}

TEST(Autoencoder, LayoutFollowsHierarchy) {
  Autoencoder<float> edl(small_topology(), small_config(Variant::Edl));
  Autoencoder<float> gl(small_topology(), small_config(Variant::Gl));
  EXPECT_EQ(edl.output_channels(), 6u);
  EXPECT_EQ(gl.output_channels(), 3u);
  // Three levels with the graph on level 1: one upsampling module from level 2.
  EXPECT_EQ(edl.upsampling_modules(), 1u);
  edl.initialize(1);
  const auto z = edl.encode(small_topology()->template_mesh().vertices());
  EXPECT_EQ(z.size(), 4u);
  const Tensor<float> out = edl.decode(z);
  EXPECT_EQ(out.rows, small_topology()->graph().node_count());
  EXPECT_EQ(out.cols, 6u);
  const auto& w = edl.parameters()[edl.parameters().find("dec.out.weight")].value;
  EXPECT_TRUE(std::all_of(w.begin(), w.end(), [](float x) { return x == 0.0f; }));
}

TEST(Autoencoder, BatchGradientIsMeanOfSampleGradients) {
  const auto data = small_dataset(5);
  for (Variant v : {Variant::Edl, Variant::Gl, Variant::Lp}) {
    Autoencoder<double> m(small_topology(), small_config(v));
    m.initialize(2);
    // Move the output layer off zero so every parameter sees gradient.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (const char* name : {"dec.out.weight", "dec.out.bias"}) {
      for (auto& x : m.parameters()[m.parameters().find(name)].value) x = u(rng);
    }
    const std::vector<std::size_t> batch{0, 3, 4, 3};
    const double loss = m.batch_gradients(data, data, batch);

    auto sum = m.parameters().make_gradient_buffer();
    double loss_sum = 0.0;
    for (std::size_t s : batch) loss_sum += m.sample_gradients(data[s], data[s], sum);
    EXPECT_NEAR(loss, loss_sum / 4.0, 1e-12);
    for (std::size_t p = 0; p < sum.size(); ++p) {
      for (std::size_t i = 0; i < sum[p].size(); ++i) {
        ASSERT_NEAR(m.parameters()[p].grad[i], sum[p][i] / 4.0, 1e-6) << m.parameters()[p].name;
      }
    }
  }
}

TEST(Autoencoder, RigidTargetIsReconstructedFromPositions) {
  const auto topo = small_topology();
  const Mat3 rot = euler_to_rotation(Vec3(0.7, -0.4, 1.1));
  const Vec3 t(0.3, -1.0, 2.0);
  const NodeTransforms rigid = rigid_node_transforms(topo->graph(), rot, t);
  const auto recon = reconstruct_from_translations(*topo, rigid.translations);
  std::vector<Vec3> want;
  for (const Vec3& p : topo->template_mesh().vertices()) want.push_back(rot * p + t);
  EXPECT_LT(max_deviation(recon, want), 1e-6);
}

TEST(Autoencoder, CastToDoubleAgrees) {
  const auto data = small_dataset(1);
  Autoencoder<float> m(small_topology(), small_config(Variant::Edl));
  m.initialize(3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-0.05f, 0.05f);
  for (auto& x : m.parameters()[m.parameters().find("dec.out.weight")].value) x = u(rng);
  const Autoencoder<double> d = m.cast<double>();
  EXPECT_LT(max_deviation(m.autoencode(data[0]), d.autoencode(data[0])), 1e-4);
}

TEST(Autoencoder, TrainingReducesLossAndIsDeterministic) {
  const auto data = small_dataset(6);
  ModelConfig cfg = small_config(Variant::Edl);
  cfg.max_steps = 40;
  cfg.adam.learning_rate = 1e-3;

  auto run = [&](const char* threads) {
    ScopedEnv env("DEMEA_THREADS", threads);
    Autoencoder<float> m(small_topology(), cfg);
    m.initialize(cfg.seed);
    const auto history = train(m, data);
    return std::make_pair(history, m.parameters()[m.parameters().find("dec.out.weight")].value);
  };
  const auto [h1, w1] = run("1");
  const auto [h3, w3] = run("3");
  ASSERT_EQ(h1.size(), 40u);
  EXPECT_LT(h1.back().loss, h1.front().loss);
  EXPECT_EQ(w1, w3);
  for (std::size_t i = 0; i < h1.size(); ++i) EXPECT_EQ(h1[i].loss, h3[i].loss);
}

TEST(Autoencoder, EpochAccountingWithFullBatches) {
  const auto data = small_dataset(6);
  ModelConfig cfg = small_config(Variant::Gl);
  cfg.epochs = 2;  // 12 samples in batches of 4: three steps
  Autoencoder<float> m(small_topology(), cfg);
  m.initialize(1);
  const auto d = testkit::scratch_dir("train_out");
  TrainOptions opts;
  opts.output_dir = d;
  const auto history = train(m, data, opts);
  EXPECT_EQ(history.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(d / "ckpt_latest.bin"));
  const std::string csv = testkit::slurp(d / "loss.csv");
  EXPECT_EQ(csv.rfind("step,epoch,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Autoencoder, NonFiniteLossAborts) {
  auto data = small_dataset(4);
  data[2][5].x() = std::numeric_limits<double>::quiet_NaN();
  ModelConfig cfg = small_config(Variant::Edl);
  cfg.max_steps = 5;
  Autoencoder<float> m(small_topology(), cfg);
  m.initialize(1);
  EXPECT_THROW(train(m, data), TrainingError);
}

TEST(Autoencoder, ConfigJsonRoundTrip) {
  ModelConfig c = small_config(Variant::Lp, ConvType::Spectral);
  c.decoder_widths = {8, 4};
  c.spiral_length = 12;
  c.reshuffle_each_epoch = false;
  c.adam.learning_rate = 3e-4;
  c.hierarchy = "hier";
  const ModelConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.variant, Variant::Lp);
  EXPECT_EQ(back.conv_type, ConvType::Spectral);
  EXPECT_EQ(back.decoder_widths, c.decoder_widths);
  EXPECT_FALSE(back.reshuffle_each_epoch);
  EXPECT_DOUBLE_EQ(back.adam.learning_rate, 3e-4);

  EXPECT_EQ(parse_variant("gl"), Variant::Gl);
  EXPECT_THROW(parse_variant("xyz"), Error);
  EXPECT_THROW(config_from_json("{\"latent_dim\": 0}").validate(), Error);
  EXPECT_THROW(config_from_json("{oops"), ParseError);
}

TEST(Autoencoder, RejectsMismatchedWidths) {
  ModelConfig c = small_config(Variant::Edl);
  c.encoder_widths = {4};
  EXPECT_THROW(Autoencoder<float>(small_topology(), c), Error);
  c = small_config(Variant::Edl);
  c.decoder_widths = {8, 4, 2};
  EXPECT_THROW(Autoencoder<float>(small_topology(), c), Error);
}

class Gradcheck : public ::testing::TestWithParam<GradScope> {};

TEST_P(Gradcheck, TwentySeedsPass) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GradcheckReport r = run_gradcheck(GetParam(), seed);
    EXPECT_TRUE(r.passed()) << to_string(GetParam()) << " seed " << seed << " max rel " << r.max_rel_error
                            << " at " << r.worst;
  }
}

TEST_P(Gradcheck, CorruptedBackwardIsCaught) {
  EXPECT_FALSE(run_gradcheck(GetParam(), 1, true).passed());
}

INSTANTIATE_TEST_SUITE_P(AllScopes, Gradcheck,
                         ::testing::Values(GradScope::Edl, GradScope::Spiral, GradScope::Spectral, GradScope::Fc,
                                           GradScope::Elu, GradScope::Loss, GradScope::End2End),
                         [](const auto& info) { return to_string(info.param); });

TEST(GradcheckHelpers, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-6);
  EXPECT_EQ(parse_grad_scope("end2end"), GradScope::End2End);
  EXPECT_THROW(parse_grad_scope("bogus"), Error);
}
