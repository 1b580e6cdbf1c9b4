#include "demea/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <random>

#include "demea/autoencoder.hpp"
#include "demea/edl.hpp"
#include "demea/error.hpp"
#include "demea/graph_conv.hpp"
#include "demea/hierarchy.hpp"
#include "demea/nn.hpp"
#include "demea/synthetic.hpp"

namespace demea {

std::string to_string(GradScope scope) {
  switch (scope) {
    case GradScope::Edl:
      return "edl";
    case GradScope::Spiral:
      return "spiral";
    case GradScope::Spectral:
      return "spectral";
    case GradScope::Fc:
      return "fc";
    case GradScope::Elu:
      return "elu";
    case GradScope::Loss:
      return "loss";
    case GradScope::End2End:
      return "end2end";
  }
  return "?";
}

GradScope parse_grad_scope(const std::string& s) {
  for (GradScope g : {GradScope::Edl, GradScope::Spiral, GradScope::Spectral, GradScope::Fc, GradScope::Elu,
                      GradScope::Loss, GradScope::End2End}) {
    if (to_string(g) == s) return g;
  }
  throw Error("unknown gradcheck scope '" + s + "' (edl, spiral, spectral, fc, elu, loss, end2end)");
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

namespace {

class Checker {
 public:
  Checker(GradcheckReport& report, bool corrupt) : report_(report), corrupt_(corrupt) {}

  /// Compares `analytic` with the central difference of f in the variable x.
  void check(const std::string& label, double& x, double analytic, const std::function<double()>& f) {
    const double saved = x;
    x = saved + kFiniteDifferenceStep;
    const double up = f();
    x = saved - kFiniteDifferenceStep;
    const double down = f();
    x = saved;
    const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
    if (corrupt_ && report_.checked == 0) analytic = 1.5 * analytic + 1e-2;
    const double err = relative_error(analytic, numeric);
    if (err > report_.max_rel_error || report_.checked == 0) {
      report_.max_rel_error = std::max(err, report_.max_rel_error);
      report_.worst = label;
    }
    ++report_.checked;
  }

 private:
  GradcheckReport& report_;
  bool corrupt_;
};

class Random {
 public:
  explicit Random(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  /// Magnitude in [lo, hi] with random sign, i.e. bounded away from zero.
  double away_from_zero(double lo, double hi) { return (uniform(0, 1) < 0.5 ? -1 : 1) * uniform(lo, hi); }
  Vec3 vec(double a, double b) { return Vec3(uniform(a, b), uniform(a, b), uniform(a, b)); }
  void fill(std::span<double> v, double a, double b) {
    for (double& x : v) x = uniform(a, b);
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_edl(Checker& ck, Random& rnd) {
  std::vector<Vec3> vertices(20);
  for (auto& v : vertices) v = rnd.vec(-1, 1);
  DeformationGraph graph;
  for (Index l = 0; l < 4; ++l) {
    graph.node_positions.push_back(vertices[l]);
    graph.node_to_vertex.push_back(l);
  }
  const double sigma = skinning_sigma(compute_metrics(vertices).d_max, graph.node_count());
  const EmbeddedDeformation edl(vertices, graph, bind_skinning(vertices, graph, 4, sigma));
  NodeTransforms t(4);
  for (std::size_t l = 0; l < 4; ++l) {
    t.euler_angles[l] = rnd.vec(-1.2, 1.2);
    t.translations[l] = rnd.vec(-0.5, 0.5);
  }
  std::vector<Vec3> c(vertices.size());
  for (auto& v : c) v = rnd.vec(-1, 1);
  auto loss = [&] {
    const auto out = edl.forward(t);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += c[i].dot(out[i]);
    return s;
  };
  EdlCache cache;
  edl.forward(t, &cache);
  const EdlGradients g = edl.backward(cache, c);
  for (std::size_t l = 0; l < 4; ++l) {
    for (int a = 0; a < 3; ++a) {
      ck.check("angle[" + std::to_string(l) + "][" + std::to_string(a) + "]", t.euler_angles[l][a],
               g.euler_angles[l][a], loss);
      ck.check("translation[" + std::to_string(l) + "][" + std::to_string(a) + "]", t.translations[l][a],
               g.translations[l][a], loss);
    }
  }
}

template <typename Forward, typename Backward>
void check_conv(Checker& ck, Random& rnd, std::size_t n, std::size_t f_in, std::size_t f_out,
                std::size_t weight_size, Forward forward, Backward backward) {
  Tensor<double> x(n, f_in);
  rnd.fill(x.data, -1, 1);
  std::vector<double> w(weight_size), b(f_out);
  rnd.fill(w, -0.5, 0.5);
  rnd.fill(b, -0.5, 0.5);
  Tensor<double> c(n, f_out);
  rnd.fill(c.data, -1, 1);
  auto loss = [&] { return dot(forward(x, w, b, nullptr).data, c.data); };
  Tensor<double> cache, gx;
  forward(x, w, b, &cache);
  std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
  backward(cache, c, w, gw, gb, &gx);
  for (std::size_t i = 0; i < w.size(); ++i) ck.check("weight[" + std::to_string(i) + "]", w[i], gw[i], loss);
  for (std::size_t i = 0; i < b.size(); ++i) ck.check("bias[" + std::to_string(i) + "]", b[i], gb[i], loss);
  for (std::size_t i = 0; i < x.size(); ++i) ck.check("x[" + std::to_string(i) + "]", x.data[i], gx.data[i], loss);
}

void check_spiral(Checker& ck, Random& rnd) {
  const Mesh mesh = make_grid_patch(4, 4, 0.2, rnd.engine());
  const SpiralSupport support = build_spirals(mesh, 7);
  const std::size_t f_in = 3, f_out = 4;
  check_conv(
      ck, rnd, mesh.vertex_count(), f_in, f_out, f_out * support.length * f_in,
      [&](const Tensor<double>& x, const std::vector<double>& w, const std::vector<double>& b, Tensor<double>* cache) {
        return spiral_conv<double>(support, x, w, b, f_out, cache);
      },
      [&](const Tensor<double>& cache, const Tensor<double>& gy, const std::vector<double>& w, std::vector<double>& gw,
          std::vector<double>& gb, Tensor<double>* gx) { spiral_conv_backward<double>(support, cache, gy, w, gw, gb, gx); });
}

void check_spectral(Checker& ck, Random& rnd, std::uint64_t seed) {
  const Mesh mesh = make_grid_patch(4, 4, 0.2, rnd.engine());
  const SpectralOperator op = build_spectral(mesh);
  const std::size_t K = 1 + seed % 6, f_in = 3, f_out = 4;
  check_conv(
      ck, rnd, mesh.vertex_count(), f_in, f_out, K * f_in * f_out,
      [&](const Tensor<double>& x, const std::vector<double>& w, const std::vector<double>& b, Tensor<double>* cache) {
        return spectral_conv<double>(op, x, w, b, K, f_out, cache);
      },
      [&](const Tensor<double>& cache, const Tensor<double>& gy, const std::vector<double>& w, std::vector<double>& gw,
          std::vector<double>& gb, Tensor<double>* gx) { spectral_conv_backward<double>(op, cache, gy, w, K, gw, gb, gx); });
}

void check_fc(Checker& ck, Random& rnd) {
  const std::size_t in = 7, out = 5;
  std::vector<double> x(in), w(out * in), b(out), c(out);
  rnd.fill(x, -1, 1);
  rnd.fill(w, -1, 1);
  rnd.fill(b, -1, 1);
  rnd.fill(c, -1, 1);
  auto loss = [&] { return dot(fully_connected<double>(x, w, b), c); };
  std::vector<double> gw(w.size(), 0.0), gb(out, 0.0), gx(in, 0.0);
  fully_connected_backward<double>(x, c, w, gw, gb, gx);
  for (std::size_t i = 0; i < w.size(); ++i) ck.check("weight[" + std::to_string(i) + "]", w[i], gw[i], loss);
  for (std::size_t i = 0; i < b.size(); ++i) ck.check("bias[" + std::to_string(i) + "]", b[i], gb[i], loss);
  for (std::size_t i = 0; i < x.size(); ++i) ck.check("x[" + std::to_string(i) + "]", x[i], gx[i], loss);
}

void check_elu(Checker& ck, Random& rnd) {
  std::vector<double> x(16), c(16);
  for (double& v : x) v = rnd.away_from_zero(0.01, 4.0);
  rnd.fill(c, -1, 1);
  auto loss = [&] {
    std::vector<double> y = x;
    elu_inplace<double>(y);
    return dot(y, c);
  };
  std::vector<double> g = c;
  elu_backward<double>(x, g);
  for (std::size_t i = 0; i < x.size(); ++i) ck.check("x[" + std::to_string(i) + "]", x[i], g[i], loss);
}

void check_losses(Checker& ck, Random& rnd) {
  const std::size_t n = 12;
  std::vector<Vec3> pred(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = rnd.vec(-1, 1);
    for (int a = 0; a < 3; ++a) target[i][a] = pred[i][a] + rnd.away_from_zero(0.05, 0.5);
  }
  const LossResult v = l1_vertex_loss(pred, target);
  auto vloss = [&] { return l1_vertex_loss(pred, target).value; };
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) ck.check("vertex[" + std::to_string(i) + "]", pred[i][a], v.gradient[i][a], vloss);
  }
  // Graph loss over a subset of target vertices.
  std::vector<Index> node_to_vertex{1, 4, 7, 10};
  std::vector<Vec3> nodes(node_to_vertex.size());
  for (std::size_t l = 0; l < nodes.size(); ++l) {
    for (int a = 0; a < 3; ++a) nodes[l][a] = target[node_to_vertex[l]][a] + rnd.away_from_zero(0.05, 0.5);
  }
  const LossResult g = l1_graph_loss(nodes, target, node_to_vertex);
  auto gloss = [&] { return l1_graph_loss(nodes, target, node_to_vertex).value; };
  for (std::size_t l = 0; l < nodes.size(); ++l) {
    for (int a = 0; a < 3; ++a) ck.check("node[" + std::to_string(l) + "]", nodes[l][a], g.gradient[l][a], gloss);
  }
}

std::shared_ptr<const ModelTopology> small_topology() {
  static std::once_flag once;
  static std::shared_ptr<const ModelTopology> topo;
  std::call_once(once, [] {
    const Mesh mesh = make_icosphere(2);
    const DeformationGraph graph = extract_graph(mesh, 42);
    const std::vector<std::size_t> counts{162, 42, 12};
    MeshHierarchy h = build_hierarchy(mesh, &graph, counts);
    topo = make_topology(make_artifact(std::move(h), graph));
  });
  return topo;
}

void check_end_to_end(Checker& ck, Random& rnd, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.encoder_widths = {4, 8};
  cfg.conv_type = seed % 2 == 0 ? ConvType::Spiral : ConvType::Spectral;
  cfg.chebyshev_order = 3;
  Autoencoder<double> model(small_topology(), cfg);
  model.initialize(seed);
  auto& params = model.parameters();
  // The output layer starts at zero; give it weights so the latent reaches the loss.
  const std::size_t out_w = params.find("dec.out.weight");
  rnd.fill(params[out_w].value, -0.1, 0.1);
  rnd.fill(params[params.find("dec.out.bias")].value, -0.05, 0.05);

  std::vector<double> latent(cfg.latent_dim);
  rnd.fill(latent, -1, 1);
  std::vector<Vec3> target = model.reconstruct(latent);
  for (Vec3& p : target) {
    for (int a = 0; a < 3; ++a) p[a] += rnd.away_from_zero(0.02, 0.1);
  }
  auto loss = [&] { return model.latent_loss(latent, target, nullptr, nullptr); };
  std::vector<double> grad_latent;
  GradientBuffer<double> grad = params.make_gradient_buffer();
  model.latent_loss(latent, target, &grad_latent, &grad);
  for (std::size_t i = 0; i < latent.size(); ++i) {
    ck.check("latent[" + std::to_string(i) + "]", latent[i], grad_latent[i], loss);
  }
  for (int k = 0; k < 24; ++k) {
    std::size_t p = 0;
    do {
      p = static_cast<std::size_t>(rnd.uniform(0, static_cast<double>(params.size())));
    } while (params[p].name.starts_with("enc."));
    const auto e = static_cast<std::size_t>(rnd.uniform(0, static_cast<double>(params[p].size())));
    ck.check(params[p].name + "[" + std::to_string(e) + "]", params[p].value[e], grad[p][e], loss);
  }
}

}  // namespace

GradcheckReport run_gradcheck(GradScope scope, std::uint64_t seed, bool corrupt) {
  GradcheckReport report;
  report.scope = scope;
  report.seed = seed;
  report.tolerance = scope == GradScope::End2End ? 1e-3 : 1e-4;
  Checker ck(report, corrupt);
  Random rnd(seed);
  switch (scope) {
    case GradScope::Edl:
      check_edl(ck, rnd);
      break;
    case GradScope::Spiral:
      check_spiral(ck, rnd);
      break;
    case GradScope::Spectral:
      check_spectral(ck, rnd, seed);
      break;
    case GradScope::Fc:
      check_fc(ck, rnd);
      break;
    case GradScope::Elu:
      check_elu(ck, rnd);
      break;
    case GradScope::Loss:
      check_losses(ck, rnd);
      break;
    case GradScope::End2End:
      check_end_to_end(ck, rnd, seed);
      break;
  }
  return report;
}

}  // namespace demea
