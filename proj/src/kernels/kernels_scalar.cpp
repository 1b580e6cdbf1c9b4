#include "demea/kernels.hpp"

namespace demea::kernels::detail {
namespace {

template <typename Real>
Real dot_ref(std::size_t n, const Real* a, const Real* b) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Real>
void axpy_ref(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename Real>
void gemm_nt_ref(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_ref(k, a + i * k, b + j * k);
  }
}

template <typename Real>
void gemm_nn_ref(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      axpy_ref(n, a[i * k + p], b + p * n, c + i * n);
    }
  }
}

template <typename Real>
void gemm_tn_ref(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      axpy_ref(n, a[p * m + i], b + p * n, c + i * n);
    }
  }
}

template <typename Real>
KernelTable<Real> make_table() {
  return {Isa::Scalar, &dot_ref<Real>, &axpy_ref<Real>, &gemm_nt_ref<Real>, &gemm_nn_ref<Real>,
          &gemm_tn_ref<Real>};
}

}  // namespace

const KernelTable<float>& scalar_f32() {
  static const KernelTable<float> t = make_table<float>();
  return t;
}

const KernelTable<double>& scalar_f64() {
  static const KernelTable<double> t = make_table<double>();
  return t;
}

}  // namespace demea::kernels::detail
