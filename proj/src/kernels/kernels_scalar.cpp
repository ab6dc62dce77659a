// Reference kernels. The SIMD variants must agree with these up to
// floating-point reassociation of the fused multiply-add.

#include "subm/kernels.hpp"

namespace subm::kernels::scalar {
namespace {

template <typename T>
void gemm_nn(std::size_t rows, std::size_t m, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* ar = a + r * m;
    T* cr = c + r * n;
    for (std::size_t k = 0; k < m; ++k) {
      const T x = ar[k];
      const T* bk = b + k * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += x * bk[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t rows, std::size_t m, std::size_t n, const T* a, const T* g, T* c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* ar = a + r * m;
    const T* gr = g + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T x = ar[i];
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += x * gr[j];
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

}  // namespace

template <typename T>
const Table<T>& table() {
  static const Table<T> t{Isa::kScalar, &gemm_nn<T>, &gemm_tn<T>, &axpy<T>, &relu<T>,
                          &relu_backward<T>};
  return t;
}

template const Table<float>& table<float>();
template const Table<double>& table<double>();

}  // namespace subm::kernels::scalar
