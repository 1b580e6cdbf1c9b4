#pragma once
// Dense inner-loop kernels with a scalar reference and SIMD variants chosen at runtime.
//
// Every layer that does real arithmetic (spiral/spectral convolutions, fully connected
// layers) funnels through these few primitives. The scalar table is the reference; the
// AVX2+FMA table is selected when the CPU supports it and is equivalence-tested against
// the reference. Set DEMEA_KERNELS=scalar to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace demea::kernels {

enum class Isa { Scalar, Avx2 };

template <typename Real>
struct KernelTable {
  Isa isa;
  Real (*dot)(std::size_t n, const Real* a, const Real* b);
  // y += alpha * x
  void (*axpy)(std::size_t n, Real alpha, const Real* x, Real* y);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
};

/// True if the running CPU (and this build) can execute kernels for `isa`.
bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws std::runtime_error if unavailable.
template <typename Real>
const KernelTable<Real>& table(Isa isa);

/// The table used by the library. Chosen once: the best available ISA unless
/// DEMEA_KERNELS=scalar is set, or overridden with set_active_isa().
Isa active_isa();
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

template <typename Real>
const KernelTable<Real>& active() {
  return table<Real>(active_isa());
}

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  return active<Real>().dot(a.size(), a.data(), b.data());
}

template <typename Real>
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  active<Real>().axpy(x.size(), alpha, x.data(), y.data());
}

template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_nt(m, n, k, a, b, c);
}

template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_nn(m, n, k, a, b, c);
}

template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_tn(m, n, k, a, b, c);
}

namespace detail {
const KernelTable<float>& scalar_f32();
const KernelTable<double>& scalar_f64();
#if defined(DEMEA_HAVE_AVX2_KERNELS)
const KernelTable<float>& avx2_f32();
const KernelTable<double>& avx2_f64();
#endif
}  // namespace detail

}  // namespace demea::kernels
