#pragma once
// Spiral and spectral (Chebyshev) graph convolutions over a fixed-topology level mesh.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demea/mesh.hpp"
#include "demea/tensor.hpp"

namespace demea {

/// Per-node spiral orderings, flattened node-major. Absent entries are -1.
struct SpiralSupport {
  std::size_t length = 0;             // S
  std::vector<std::int64_t> indices;  // node_count * length
  std::vector<Index> isolated;        // nodes with no neighbors (spiral = self + padding)

  std::size_t node_count() const { return length == 0 ? 0 : indices.size() / length; }
  std::span<const std::int64_t> spiral(std::size_t node) const {
    return {indices.data() + node * length, length};
  }
  /// Same orderings cut or padded to a new length.
  SpiralSupport resized(std::size_t new_length) const;

  friend bool operator==(const SpiralSupport&, const SpiralSupport&) = default;
};

/// Spirals start at the node, walk its 1-ring from the smallest-index neighbor following
/// face winding, then each further ring in order of discovery from the previous ring
/// (neighbors in ascending index). Cut or padded to `length`.
SpiralSupport build_spirals(const Mesh& mesh, std::size_t length);

/// Smallest S that covers the full 2-ring (self, 1-ring, 2-ring) of at least 95% of nodes.
std::size_t default_spiral_length(const Mesh& mesh);

/// Gathers x rows along each spiral: result is N x (S * F_in), zero where padded.
template <typename Real>
Tensor<Real> spiral_gather(const SpiralSupport& support, const Tensor<Real>& x);

/// y_n = sum_s G_s x_{n_s} + bias. `weight` is F_out x (S * F_in) with block s holding G_s.
/// When `gathered` is non-null it receives the gathered input needed by the backward pass.
template <typename Real>
Tensor<Real> spiral_conv(const SpiralSupport& support, const Tensor<Real>& x, std::span<const Real> weight,
                         std::span<const Real> bias, std::size_t f_out, Tensor<Real>* gathered = nullptr);

/// Accumulates into grad_weight / grad_bias; writes grad_x when non-null.
template <typename Real>
void spiral_conv_backward(const SpiralSupport& support, const Tensor<Real>& gathered, const Tensor<Real>& grad_y,
                          std::span<const Real> weight, std::span<Real> grad_weight, std::span<Real> grad_bias,
                          Tensor<Real>* grad_x);

/// Scaled normalized Laplacian L~ = 2L/lambda_max - I with lambda_max = 2, i.e. L - I,
/// where L = I - D^-1/2 A D^-1/2. Isolated nodes get an identity row in L (zero row in L~).
/// Stored as CSR over off-diagonal entries (the diagonal of L~ is zero).
struct SpectralOperator {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<Index> col;
  std::vector<double> value;
  std::vector<Index> isolated;

  /// y = L~ x
  template <typename Real>
  Tensor<Real> apply(const Tensor<Real>& x) const;

  friend bool operator==(const SpectralOperator&, const SpectralOperator&) = default;
};

SpectralOperator build_spectral(std::size_t node_count, std::span<const Edge> edges);
inline SpectralOperator build_spectral(const Mesh& mesh) { return build_spectral(mesh.vertex_count(), mesh.edges()); }

/// y = sum_k T_k(L~) x theta_k + bias via the Chebyshev recurrence.
/// `theta` is K x F_in x F_out (row-major). When `stack` is non-null it receives
/// [X_0 | X_1 | ... | X_{K-1}] (N x K*F_in), needed by the backward pass.
template <typename Real>
Tensor<Real> spectral_conv(const SpectralOperator& op, const Tensor<Real>& x, std::span<const Real> theta,
                           std::span<const Real> bias, std::size_t order_k, std::size_t f_out,
                           Tensor<Real>* stack = nullptr);

template <typename Real>
void spectral_conv_backward(const SpectralOperator& op, const Tensor<Real>& stack, const Tensor<Real>& grad_y,
                            std::span<const Real> theta, std::size_t order_k, std::span<Real> grad_theta,
                            std::span<Real> grad_bias, Tensor<Real>* grad_x);

}  // namespace demea
