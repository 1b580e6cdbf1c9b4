#include "demea/nn.hpp"

#include <cmath>

#include "demea/error.hpp"
#include "demea/kernels.hpp"

namespace demea {

template <typename Real>
std::size_t ParameterStore<Real>::add(std::string name, std::vector<std::uint32_t> shape) {
  if (find(name) != params_.size()) throw Error("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  Parameter<Real> p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.value.assign(n, Real(0));
  p.grad.assign(n, Real(0));
  p.m.assign(n, Real(0));
  p.v.assign(n, Real(0));
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename Real>
std::size_t ParameterStore<Real>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return params_.size();
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), Real(0));
}

template <typename Real>
GradientBuffer<Real> ParameterStore<Real>::make_gradient_buffer() const {
  GradientBuffer<Real> b(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) b[i].assign(params_[i].size(), Real(0));
  return b;
}

template <typename Real>
void ParameterStore<Real>::accumulate(const GradientBuffer<Real>& buffer, Real scale) {
  require_shape(buffer.size() == params_.size(), "accumulate: gradient buffer layout mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require_shape(buffer[i].size() == params_[i].size(), "accumulate: gradient buffer layout mismatch");
    for (std::size_t k = 0; k < buffer[i].size(); ++k) params_[i].grad[k] += scale * buffer[i][k];
  }
}

template <typename Real>
std::size_t ParameterStore<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename Real>
template <typename Other>
ParameterStore<Other> ParameterStore<Real>::cast() const {
  ParameterStore<Other> out;
  for (const auto& p : params_) {
    const std::size_t i = out.add(p.name, p.shape);
    for (std::size_t k = 0; k < p.size(); ++k) {
      out[i].value[k] = static_cast<Other>(p.value[k]);
      out[i].grad[k] = static_cast<Other>(p.grad[k]);
      out[i].m[k] = static_cast<Other>(p.m[k]);
      out[i].v[k] = static_cast<Other>(p.v[k]);
    }
  }
  out.set_step(step_);
  return out;
}

template <typename Real>
void glorot_uniform(std::span<Real> w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Real& x : w) x = static_cast<Real>(dist(rng));
}

template <typename Real>
std::vector<Real> fully_connected(std::span<const Real> x, std::span<const Real> weight, std::span<const Real> bias) {
  const std::size_t out = bias.size(), in = x.size();
  require_shape(weight.size() == out * in, "fully_connected: weight must be out x in (" + std::to_string(out) + " x " +
                                               std::to_string(in) + ")");
  std::vector<Real> y(bias.begin(), bias.end());
  kernels::gemm_nt<Real>(1, out, in, x.data(), weight.data(), y.data());
  return y;
}

template <typename Real>
void fully_connected_backward(std::span<const Real> x, std::span<const Real> grad_y, std::span<const Real> weight,
                              std::span<Real> grad_weight, std::span<Real> grad_bias, std::span<Real> grad_x) {
  const std::size_t out = grad_y.size(), in = x.size();
  require_shape(weight.size() == out * in && grad_weight.size() == out * in && grad_bias.size() == out,
                "fully_connected_backward: shape mismatch");
  for (std::size_t o = 0; o < out; ++o) grad_bias[o] += grad_y[o];
  // dW += grad_y x^T (outer product)
  kernels::gemm_nn<Real>(out, in, 1, grad_y.data(), x.data(), grad_weight.data());
  if (!grad_x.empty()) {
    require_shape(grad_x.size() == in, "fully_connected_backward: grad_x has wrong size");
    std::fill(grad_x.begin(), grad_x.end(), Real(0));
    // dx = W^T grad_y
    kernels::gemm_tn<Real>(in, 1, out, weight.data(), grad_y.data(), grad_x.data());
  }
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

LossResult l1_vertex_loss(std::span<const Vec3> predicted, std::span<const Vec3> target) {
  require_shape(predicted.size() == target.size() && !predicted.empty(),
                "l1_vertex_loss: prediction and target must have the same nonzero vertex count");
  LossResult r;
  r.gradient.resize(predicted.size());
  const double inv = 1.0 / static_cast<double>(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const Vec3 d = predicted[i] - target[i];
    r.value += d.cwiseAbs().sum();
    r.gradient[i] = Vec3(sign(d.x()), sign(d.y()), sign(d.z())) * inv;
  }
  r.value *= inv;
  return r;
}

LossResult l1_graph_loss(std::span<const Vec3> node_positions, std::span<const Vec3> target_vertices,
                         std::span<const Index> node_to_vertex) {
  require_shape(node_positions.size() == node_to_vertex.size() && !node_positions.empty(),
                "l1_graph_loss: one target index per node required");
  std::vector<Vec3> targets(node_positions.size());
  for (std::size_t l = 0; l < node_positions.size(); ++l) {
    require_shape(node_to_vertex[l] < target_vertices.size(), "l1_graph_loss: node index out of range");
    targets[l] = target_vertices[node_to_vertex[l]];
  }
  return l1_vertex_loss(node_positions, targets);
}

double mean_vertex_error(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_shape(a.size() == b.size() && !a.empty(), "mean_vertex_error: vertex counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

template <typename Real>
void adam_step(ParameterStore<Real>& store, const AdamSettings& s) {
  store.increment_step();
  const double t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<Real>& p = store[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      const double m = s.beta1 * p.m[k] + (1.0 - s.beta1) * g;
      const double v = s.beta2 * p.v[k] + (1.0 - s.beta2) * g * g;
      p.m[k] = static_cast<Real>(m);
      p.v[k] = static_cast<Real>(v);
      const double update = s.learning_rate * (m / c1) / (std::sqrt(v / c2) + s.epsilon);
      p.value[k] = static_cast<Real>(p.value[k] - update);
      p.grad[k] = Real(0);
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template ParameterStore<double> ParameterStore<float>::cast<double>() const;
template ParameterStore<float> ParameterStore<double>::cast<float>() const;
template ParameterStore<float> ParameterStore<float>::cast<float>() const;
template ParameterStore<double> ParameterStore<double>::cast<double>() const;

#define DEMEA_INSTANTIATE_NN(Real)                                                                              \
  template void glorot_uniform(std::span<Real>, std::size_t, std::size_t, std::mt19937_64&);                   \
  template std::vector<Real> fully_connected(std::span<const Real>, std::span<const Real>, std::span<const Real>); \
  template void fully_connected_backward(std::span<const Real>, std::span<const Real>, std::span<const Real>,   \
                                         std::span<Real>, std::span<Real>, std::span<Real>);                    \
  template void adam_step(ParameterStore<Real>&, const AdamSettings&);

DEMEA_INSTANTIATE_NN(float)
DEMEA_INSTANTIATE_NN(double)

}  // namespace demea
