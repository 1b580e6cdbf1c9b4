#include "demea/graph_conv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "demea/kernels.hpp"

namespace demea {

SpiralSupport SpiralSupport::resized(std::size_t new_length) const {
  SpiralSupport out;
  out.length = new_length;
  out.isolated = isolated;
  out.indices.assign(node_count() * new_length, -1);
  for (std::size_t n = 0; n < node_count(); ++n) {
    const auto src = spiral(n);
    std::copy_n(src.begin(), std::min(length, new_length), out.indices.begin() + n * new_length);
  }
  return out;
}

namespace {

// Successors around each vertex induced by face winding: for face (v, u, w) in
// counter-clockwise order, w follows u in v's 1-ring.
std::vector<std::map<Index, std::vector<Index>>> ring_successors(const Mesh& mesh) {
  std::vector<std::map<Index, std::vector<Index>>> succ(mesh.vertex_count());
  for (const Face& f : mesh.faces()) {
    for (int k = 0; k < 3; ++k) succ[f[k]][f[(k + 1) % 3]].push_back(f[(k + 2) % 3]);
  }
  return succ;
}

std::vector<Index> order_one_ring(Index center, const std::vector<Index>& ring,
                                  const std::map<Index, std::vector<Index>>& succ, std::vector<bool>& visited) {
  std::vector<Index> order;
  if (ring.empty()) return order;
  Index cur = ring.front();
  while (true) {
    order.push_back(cur);
    visited[cur] = true;
    if (order.size() == ring.size()) break;
    Index next = 0;
    bool found = false;
    if (auto it = succ.find(cur); it != succ.end()) {
      for (Index w : it->second) {
        if (w != center && !visited[w] && (!found || w < next)) {
          next = w;
          found = true;
        }
      }
    }
    if (!found) {
      for (Index w : ring) {
        if (!visited[w]) {
          next = w;
          found = true;
          break;
        }
      }
    }
    cur = next;
  }
  return order;
}

}  // namespace

SpiralSupport build_spirals(const Mesh& mesh, std::size_t length) {
  if (length == 0) throw Error("build_spirals: spiral length must be at least 1");
  const std::size_t n = mesh.vertex_count();
  const auto adj = mesh.adjacency();
  const auto succ = ring_successors(mesh);

  SpiralSupport s;
  s.length = length;
  s.indices.assign(n * length, -1);
  std::vector<bool> visited(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<Index> spiral{static_cast<Index>(v)};
    std::vector<Index> touched{static_cast<Index>(v)};
    visited[v] = true;
    if (adj[v].empty()) s.isolated.push_back(static_cast<Index>(v));

    std::vector<Index> ring = order_one_ring(static_cast<Index>(v), adj[v], succ[v], visited);
    touched.insert(touched.end(), ring.begin(), ring.end());
    while (!ring.empty() && spiral.size() < length) {
      spiral.insert(spiral.end(), ring.begin(), ring.end());
      std::vector<Index> next;
      for (Index u : ring) {
        for (Index w : adj[u]) {
          if (!visited[w]) {
            visited[w] = true;
            touched.push_back(w);
            next.push_back(w);
          }
        }
      }
      ring = std::move(next);
    }
    for (Index t : touched) visited[t] = false;
    const std::size_t used = std::min(length, spiral.size());
    for (std::size_t k = 0; k < used; ++k) s.indices[v * length + k] = spiral[k];
  }
  return s;
}

std::size_t default_spiral_length(const Mesh& mesh) {
  const std::size_t n = mesh.vertex_count();
  if (n == 0) return 1;
  const auto adj = mesh.adjacency();
  std::vector<std::size_t> sizes(n);
  std::vector<int> mark(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t count = 1;
    mark[v] = static_cast<int>(v);
    for (Index u : adj[v]) {
      if (mark[u] != static_cast<int>(v)) {
        mark[u] = static_cast<int>(v);
        ++count;
      }
    }
    for (Index u : adj[v]) {
      for (Index w : adj[u]) {
        if (mark[w] != static_cast<int>(v)) {
          mark[w] = static_cast<int>(v);
          ++count;
        }
      }
    }
    sizes[v] = count;
  }
  std::sort(sizes.begin(), sizes.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1;
  return std::max<std::size_t>(1, sizes[std::min(idx, n - 1)]);
}

template <typename Real>
Tensor<Real> spiral_gather(const SpiralSupport& support, const Tensor<Real>& x) {
  require_shape(x.rows == support.node_count(), "spiral_gather: feature rows " + std::to_string(x.rows) +
                                                    " != node count " + std::to_string(support.node_count()));
  const std::size_t S = support.length, F = x.cols;
  Tensor<Real> g(x.rows, S * F);
  for (std::size_t n = 0; n < x.rows; ++n) {
    const auto sp = support.spiral(n);
    Real* dst = g.data.data() + n * S * F;
    for (std::size_t s = 0; s < S; ++s) {
      if (sp[s] < 0) continue;
      const auto src = x.row(static_cast<std::size_t>(sp[s]));
      std::copy(src.begin(), src.end(), dst + s * F);
    }
  }
  return g;
}

template <typename Real>
Tensor<Real> spiral_conv(const SpiralSupport& support, const Tensor<Real>& x, std::span<const Real> weight,
                         std::span<const Real> bias, std::size_t f_out, Tensor<Real>* gathered) {
  const std::size_t k = support.length * x.cols;
  require_shape(weight.size() == f_out * k, "spiral_conv: weight must be F_out x (S * F_in)");
  require_shape(bias.size() == f_out, "spiral_conv: bias must have F_out entries");
  Tensor<Real> g = spiral_gather(support, x);
  Tensor<Real> y(x.rows, f_out);
  for (std::size_t n = 0; n < y.rows; ++n) std::copy(bias.begin(), bias.end(), y.row(n).begin());
  kernels::gemm_nt<Real>(y.rows, f_out, k, g.data.data(), weight.data(), y.data.data());
  if (gathered != nullptr) *gathered = std::move(g);
  return y;
}

template <typename Real>
void spiral_conv_backward(const SpiralSupport& support, const Tensor<Real>& gathered, const Tensor<Real>& grad_y,
                          std::span<const Real> weight, std::span<Real> grad_weight, std::span<Real> grad_bias,
                          Tensor<Real>* grad_x) {
  const std::size_t n = grad_y.rows, f_out = grad_y.cols, k = gathered.cols;
  require_shape(gathered.rows == n && grad_weight.size() == f_out * k && grad_bias.size() == f_out &&
                    weight.size() == f_out * k,
                "spiral_conv_backward: shape mismatch");
  for (std::size_t r = 0; r < n; ++r) {
    const auto gy = grad_y.row(r);
    for (std::size_t o = 0; o < f_out; ++o) grad_bias[o] += gy[o];
  }
  kernels::gemm_tn<Real>(f_out, k, n, grad_y.data.data(), gathered.data.data(), grad_weight.data());
  if (grad_x == nullptr) return;
  Tensor<Real> grad_g(n, k);
  kernels::gemm_nn<Real>(n, k, f_out, grad_y.data.data(), weight.data(), grad_g.data.data());
  const std::size_t S = support.length, F = k / S;
  *grad_x = Tensor<Real>(n, F);
  for (std::size_t r = 0; r < n; ++r) {
    const auto sp = support.spiral(r);
    const Real* src = grad_g.data.data() + r * k;
    for (std::size_t s = 0; s < S; ++s) {
      if (sp[s] < 0) continue;
      auto dst = grad_x->row(static_cast<std::size_t>(sp[s]));
      for (std::size_t c = 0; c < F; ++c) dst[c] += src[s * F + c];
    }
  }
}

SpectralOperator build_spectral(std::size_t node_count, std::span<const Edge> edges) {
  std::vector<std::vector<Index>> adj(node_count);
  for (const auto& [a, b] : edges) {
    if (a >= node_count || b >= node_count || a == b) throw Error("build_spectral: invalid edge");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  SpectralOperator op;
  op.n = node_count;
  op.row_ptr.push_back(0);
  for (std::size_t i = 0; i < node_count; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  for (std::size_t i = 0; i < node_count; ++i) {
    if (adj[i].empty()) op.isolated.push_back(static_cast<Index>(i));
    const double di = static_cast<double>(adj[i].size());
    for (Index j : adj[i]) {
      const double dj = static_cast<double>(adj[j].size());
      op.col.push_back(j);
      op.value.push_back(-1.0 / std::sqrt(di * dj));
    }
    op.row_ptr.push_back(op.col.size());
  }
  return op;
}

template <typename Real>
Tensor<Real> SpectralOperator::apply(const Tensor<Real>& x) const {
  require_shape(x.rows == n, "SpectralOperator::apply: row count mismatch");
  Tensor<Real> y(n, x.cols);
  const auto& kt = kernels::active<Real>();
  for (std::size_t i = 0; i < n; ++i) {
    Real* dst = y.data.data() + i * x.cols;
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      kt.axpy(x.cols, static_cast<Real>(value[p]), x.data.data() + col[p] * x.cols, dst);
    }
  }
  return y;
}

template <typename Real>
Tensor<Real> spectral_conv(const SpectralOperator& op, const Tensor<Real>& x, std::span<const Real> theta,
                           std::span<const Real> bias, std::size_t order_k, std::size_t f_out, Tensor<Real>* stack) {
  require_shape(order_k >= 1, "spectral_conv: K must be at least 1");
  const std::size_t N = x.rows, F = x.cols;
  require_shape(N == op.n, "spectral_conv: feature rows do not match the operator");
  require_shape(theta.size() == order_k * F * f_out, "spectral_conv: theta must be K x F_in x F_out");
  require_shape(bias.size() == f_out, "spectral_conv: bias must have F_out entries");

  Tensor<Real> st(N, order_k * F);
  auto put = [&](std::size_t k, const Tensor<Real>& xk) {
    for (std::size_t r = 0; r < N; ++r) std::copy(xk.row(r).begin(), xk.row(r).end(), st.data.begin() + r * order_k * F + k * F);
  };
  put(0, x);
  if (order_k > 1) {
    Tensor<Real> prev2 = x;
    Tensor<Real> prev1 = op.apply(x);
    put(1, prev1);
    for (std::size_t k = 2; k < order_k; ++k) {
      Tensor<Real> cur = op.apply(prev1);
      for (std::size_t i = 0; i < cur.data.size(); ++i) cur.data[i] = Real(2) * cur.data[i] - prev2.data[i];
      put(k, cur);
      prev2 = std::move(prev1);
      prev1 = std::move(cur);
    }
  }
  Tensor<Real> y(N, f_out);
  for (std::size_t r = 0; r < N; ++r) std::copy(bias.begin(), bias.end(), y.row(r).begin());
  kernels::gemm_nn<Real>(N, f_out, order_k * F, st.data.data(), theta.data(), y.data.data());
  if (stack != nullptr) *stack = std::move(st);
  return y;
}

template <typename Real>
void spectral_conv_backward(const SpectralOperator& op, const Tensor<Real>& stack, const Tensor<Real>& grad_y,
                            std::span<const Real> theta, std::size_t order_k, std::span<Real> grad_theta,
                            std::span<Real> grad_bias, Tensor<Real>* grad_x) {
  const std::size_t N = grad_y.rows, f_out = grad_y.cols, KF = stack.cols;
  require_shape(stack.rows == N && N == op.n && KF % order_k == 0 && theta.size() == KF * f_out &&
                    grad_theta.size() == KF * f_out && grad_bias.size() == f_out,
                "spectral_conv_backward: shape mismatch");
  const std::size_t F = KF / order_k;
  for (std::size_t r = 0; r < N; ++r) {
    const auto gy = grad_y.row(r);
    for (std::size_t o = 0; o < f_out; ++o) grad_bias[o] += gy[o];
  }
  kernels::gemm_tn<Real>(KF, f_out, N, stack.data.data(), grad_y.data.data(), grad_theta.data());
  if (grad_x == nullptr) return;

  Tensor<Real> grad_stack(N, KF);
  kernels::gemm_nt<Real>(N, KF, f_out, grad_y.data.data(), theta.data(), grad_stack.data.data());
  std::vector<Tensor<Real>> g(order_k, Tensor<Real>(N, F));
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t k = 0; k < order_k; ++k) {
      std::copy_n(grad_stack.data.begin() + r * KF + k * F, F, g[k].row(r).begin());
    }
  }
  // Reverse the recurrence X_k = 2 L~ X_{k-1} - X_{k-2}; L~ is symmetric.
  for (std::size_t k = order_k - 1; k >= 2; --k) {
    Tensor<Real> back = op.apply(g[k]);
    for (std::size_t i = 0; i < back.data.size(); ++i) {
      g[k - 1].data[i] += Real(2) * back.data[i];
      g[k - 2].data[i] -= g[k].data[i];
    }
  }
  if (order_k > 1) {
    Tensor<Real> back = op.apply(g[1]);
    for (std::size_t i = 0; i < back.data.size(); ++i) g[0].data[i] += back.data[i];
  }
  *grad_x = std::move(g[0]);
}

#define DEMEA_INSTANTIATE_GRAPH_CONV(Real)                                                                          \
  template Tensor<Real> spiral_gather(const SpiralSupport&, const Tensor<Real>&);                                  \
  template Tensor<Real> spiral_conv(const SpiralSupport&, const Tensor<Real>&, std::span<const Real>,              \
                                    std::span<const Real>, std::size_t, Tensor<Real>*);                            \
  template void spiral_conv_backward(const SpiralSupport&, const Tensor<Real>&, const Tensor<Real>&,               \
                                     std::span<const Real>, std::span<Real>, std::span<Real>, Tensor<Real>*);      \
  template Tensor<Real> SpectralOperator::apply(const Tensor<Real>&) const;                                        \
  template Tensor<Real> spectral_conv(const SpectralOperator&, const Tensor<Real>&, std::span<const Real>,         \
                                      std::span<const Real>, std::size_t, std::size_t, Tensor<Real>*);             \
  template void spectral_conv_backward(const SpectralOperator&, const Tensor<Real>&, const Tensor<Real>&,          \
                                       std::span<const Real>, std::size_t, std::span<Real>, std::span<Real>,       \
                                       Tensor<Real>*);

DEMEA_INSTANTIATE_GRAPH_CONV(float)
DEMEA_INSTANTIATE_GRAPH_CONV(double)

}  // namespace demea
