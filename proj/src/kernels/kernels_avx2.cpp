// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and must only
// be entered after a runtime CPU check (see dispatch.cpp).
#include <immintrin.h>

#include "demea/kernels.hpp"

namespace demea::kernels::detail {
namespace {

struct F32 {
  using Real = float;
  using Vec = __m256;
  static constexpr std::size_t lanes = 8;
  static Vec zero() { return _mm256_setzero_ps(); }
  static Vec load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Vec v) { _mm256_storeu_ps(p, v); }
  static Vec set1(float x) { return _mm256_set1_ps(x); }
  static Vec fmadd(Vec a, Vec b, Vec c) { return _mm256_fmadd_ps(a, b, c); }
  static Vec add(Vec a, Vec b) { return _mm256_add_ps(a, b); }
  static float hsum(Vec v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

struct F64 {
  using Real = double;
  using Vec = __m256d;
  static constexpr std::size_t lanes = 4;
  static Vec zero() { return _mm256_setzero_pd(); }
  static Vec load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Vec v) { _mm256_storeu_pd(p, v); }
  static Vec set1(double x) { return _mm256_set1_pd(x); }
  static Vec fmadd(Vec a, Vec b, Vec c) { return _mm256_fmadd_pd(a, b, c); }
  static Vec add(Vec a, Vec b) { return _mm256_add_pd(a, b); }
  static double hsum(Vec v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <typename T>
typename T::Real dot(std::size_t n, const typename T::Real* a, const typename T::Real* b) {
  constexpr std::size_t w = T::lanes;
  auto acc0 = T::zero(), acc1 = T::zero(), acc2 = T::zero(), acc3 = T::zero();
  std::size_t i = 0;
  for (; i + 4 * w <= n; i += 4 * w) {
    acc0 = T::fmadd(T::load(a + i), T::load(b + i), acc0);
    acc1 = T::fmadd(T::load(a + i + w), T::load(b + i + w), acc1);
    acc2 = T::fmadd(T::load(a + i + 2 * w), T::load(b + i + 2 * w), acc2);
    acc3 = T::fmadd(T::load(a + i + 3 * w), T::load(b + i + 3 * w), acc3);
  }
  for (; i + w <= n; i += w) acc0 = T::fmadd(T::load(a + i), T::load(b + i), acc0);
  typename T::Real sum = T::hsum(T::add(T::add(acc0, acc1), T::add(acc2, acc3)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

template <typename T>
void axpy(std::size_t n, typename T::Real alpha, const typename T::Real* x, typename T::Real* y) {
  constexpr std::size_t w = T::lanes;
  const auto va = T::set1(alpha);
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    T::store(y + i, T::fmadd(va, T::load(x + i), T::load(y + i)));
    T::store(y + i + w, T::fmadd(va, T::load(x + i + w), T::load(y + i + w)));
  }
  for (; i + w <= n; i += w) T::store(y + i, T::fmadd(va, T::load(x + i), T::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const typename T::Real* a,
             const typename T::Real* b, typename T::Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const auto* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot<T>(k, ai, b + j * k);
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const typename T::Real* a,
             const typename T::Real* b, typename T::Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy<T>(n, a[i * k + p], b + p * n, c + i * n);
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const typename T::Real* a,
             const typename T::Real* b, typename T::Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) axpy<T>(n, a[p * m + i], b + p * n, c + i * n);
  }
}

template <typename T>
KernelTable<typename T::Real> make_table() {
  return {Isa::Avx2, &dot<T>, &axpy<T>, &gemm_nt<T>, &gemm_nn<T>, &gemm_tn<T>};
}

}  // namespace

const KernelTable<float>& avx2_f32() {
  static const KernelTable<float> t = make_table<F32>();
  return t;
}

const KernelTable<double>& avx2_f64() {
  static const KernelTable<double> t = make_table<F64>();
  return t;
}

}  // namespace demea::kernels::detail
