#pragma once
// Dense-tensor building blocks: parameters with gradient slots, fully connected layers,
// ELU, l1 losses and Adam. Layers are plain forward/backward function pairs; the
// autoencoder composes them in a fixed order and keeps whatever the backward needs.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "demea/mesh.hpp"
#include "demea/tensor.hpp"

namespace demea {

template <typename Real>
struct Parameter {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  std::vector<Real> m;  // Adam first moment
  std::vector<Real> v;  // Adam second moment

  std::size_t size() const { return value.size(); }
};

/// Per-parameter gradient arrays laid out like a ParameterStore.
template <typename Real>
using GradientBuffer = std::vector<std::vector<Real>>;

template <typename Real>
class ParameterStore {
 public:
  /// Adds a zero-initialized parameter and returns its index. Names must be unique.
  std::size_t add(std::string name, std::vector<std::uint32_t> shape);

  std::size_t size() const { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }
  /// Index of the named parameter, or size() if absent.
  std::size_t find(const std::string& name) const;

  std::span<const Real> value(std::size_t i) const { return params_[i].value; }
  std::span<Real> value(std::size_t i) { return params_[i].value; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void increment_step() { ++step_; }

  void zero_grad();
  GradientBuffer<Real> make_gradient_buffer() const;
  /// grad += scale * buffer
  void accumulate(const GradientBuffer<Real>& buffer, Real scale);
  std::size_t parameter_count() const;

  template <typename Other>
  ParameterStore<Other> cast() const;

 private:
  std::vector<Parameter<Real>> params_;
  std::uint64_t step_ = 0;
};

/// Fills `w` with U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename Real>
void glorot_uniform(std::span<Real> w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// y = W x + b, W is out x in (row-major).
template <typename Real>
std::vector<Real> fully_connected(std::span<const Real> x, std::span<const Real> weight, std::span<const Real> bias);

/// Accumulates grad_weight and grad_bias; writes grad_x if it is non-empty.
template <typename Real>
void fully_connected_backward(std::span<const Real> x, std::span<const Real> grad_y, std::span<const Real> weight,
                              std::span<Real> grad_weight, std::span<Real> grad_bias, std::span<Real> grad_x);

template <typename Real>
Real elu(Real x) {
  return x > Real(0) ? x : std::expm1(x);
}

template <typename Real>
Real elu_derivative(Real x) {
  return x > Real(0) ? Real(1) : std::exp(x);
}

template <typename Real>
void elu_inplace(std::span<Real> x) {
  for (Real& v : x) v = elu(v);
}

/// grad_in = grad_out * elu'(pre_activation)
template <typename Real>
void elu_backward(std::span<const Real> pre_activation, std::span<Real> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= elu_derivative(pre_activation[i]);
}

struct LossResult {
  double value = 0.0;
  std::vector<Vec3> gradient;  // d loss / d prediction
};

/// 1/N sum_i |pred_i - target_i|_1, subgradient sign(diff)/N with sign(0) = 0.
LossResult l1_vertex_loss(std::span<const Vec3> predicted, std::span<const Vec3> target);

/// 1/L sum_l |node_l - target_{i_l}|_1 over graph nodes l with vertex index i_l.
LossResult l1_graph_loss(std::span<const Vec3> node_positions, std::span<const Vec3> target_vertices,
                         std::span<const Index> node_to_vertex);

/// Mean per-vertex Euclidean distance.
double mean_vertex_error(std::span<const Vec3> a, std::span<const Vec3> b);

struct AdamSettings {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update of every parameter from its `grad`; then zeroes gradients.
template <typename Real>
void adam_step(ParameterStore<Real>& store, const AdamSettings& settings);

}  // namespace demea
