// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma;
// nothing here may run before dispatch has confirmed CPU support.

#include "subm/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include "simd_impl.hpp"

namespace subm::kernels::avx2 {
namespace {

struct VecD {
  using T = double;
  using R = __m256d;
  static constexpr std::size_t W = 4;
  static R load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, R v) { _mm256_storeu_pd(p, v); }
  static R set1(T x) { return _mm256_set1_pd(x); }
  static R zero() { return _mm256_setzero_pd(); }
  static R fmadd(R a, R b, R c) { return _mm256_fmadd_pd(a, b, c); }
  static R max(R a, R b) { return _mm256_max_pd(a, b); }
  static R select_positive(R x, R v) {
    return _mm256_and_pd(_mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ), v);
  }
};

struct VecF {
  using T = float;
  using R = __m256;
  static constexpr std::size_t W = 8;
  static R load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, R v) { _mm256_storeu_ps(p, v); }
  static R set1(T x) { return _mm256_set1_ps(x); }
  static R zero() { return _mm256_setzero_ps(); }
  static R fmadd(R a, R b, R c) { return _mm256_fmadd_ps(a, b, c); }
  static R max(R a, R b) { return _mm256_max_ps(a, b); }
  static R select_positive(R x, R v) {
    return _mm256_and_ps(_mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_GT_OQ), v);
  }
};

template <typename V>
const Table<typename V::T>& make() {
  static const Table<typename V::T> t{Isa::kAvx2,         &simd::gemm_nn<V>,
                                      &simd::gemm_tn<V>,  &simd::axpy<V>,
                                      &simd::relu<V>,     &simd::relu_backward<V>};
  return t;
}

}  // namespace

template <>
const Table<double>* table<double>() {
  return &make<VecD>();
}
template <>
const Table<float>* table<float>() {
  return &make<VecF>();
}

}  // namespace subm::kernels::avx2

#else

namespace subm::kernels::avx2 {
template <>
const Table<double>* table<double>() {
  return nullptr;
}
template <>
const Table<float>* table<float>() {
  return nullptr;
}
}  // namespace subm::kernels::avx2

#endif
