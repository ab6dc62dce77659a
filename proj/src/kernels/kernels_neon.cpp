// AArch64 NEON variants (Advanced SIMD is mandatory on AArch64, so no
// runtime feature probe is needed once compiled in).

#include "subm/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

#include "simd_impl.hpp"

namespace subm::kernels::neon {
namespace {

struct VecD {
  using T = double;
  using R = float64x2_t;
  static constexpr std::size_t W = 2;
  static R load(const T* p) { return vld1q_f64(p); }
  static void store(T* p, R v) { vst1q_f64(p, v); }
  static R set1(T x) { return vdupq_n_f64(x); }
  static R zero() { return vdupq_n_f64(0.0); }
  static R fmadd(R a, R b, R c) { return vfmaq_f64(c, a, b); }
  static R max(R a, R b) { return vmaxq_f64(a, b); }
  static R select_positive(R x, R v) {
    return vreinterpretq_f64_u64(
        vandq_u64(vcgtq_f64(x, vdupq_n_f64(0.0)), vreinterpretq_u64_f64(v)));
  }
};

struct VecF {
  using T = float;
  using R = float32x4_t;
  static constexpr std::size_t W = 4;
  static R load(const T* p) { return vld1q_f32(p); }
  static void store(T* p, R v) { vst1q_f32(p, v); }
  static R set1(T x) { return vdupq_n_f32(x); }
  static R zero() { return vdupq_n_f32(0.0f); }
  static R fmadd(R a, R b, R c) { return vfmaq_f32(c, a, b); }
  static R max(R a, R b) { return vmaxq_f32(a, b); }
  static R select_positive(R x, R v) {
    return vreinterpretq_f32_u32(
        vandq_u32(vcgtq_f32(x, vdupq_n_f32(0.0f)), vreinterpretq_u32_f32(v)));
  }
};

template <typename V>
const Table<typename V::T>& make() {
  static const Table<typename V::T> t{Isa::kNeon,         &simd::gemm_nn<V>,
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

}  // namespace subm::kernels::neon

#else

namespace subm::kernels::neon {
template <>
const Table<double>* table<double>() {
  return nullptr;
}
template <>
const Table<float>* table<float>() {
  return nullptr;
}
}  // namespace subm::kernels::neon

#endif
