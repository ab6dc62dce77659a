#pragma once

// Register-blocked kernels written against a small vector-traits interface
// (load/store/set1/fmadd/max/zero, W lanes). Each ISA translation unit
// instantiates them with its own traits and compile flags.

#include <cstddef>

namespace subm::kernels::simd {

// 4 rows x 2 vectors micro-tile of C += A * B.
template <typename V>
inline void gemm_nn(std::size_t rows, std::size_t m, std::size_t n, const typename V::T* a,
                    const typename V::T* b, typename V::T* c) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const T* a0 = a + (r + 0) * m;
    const T* a1 = a + (r + 1) * m;
    const T* a2 = a + (r + 2) * m;
    const T* a3 = a + (r + 3) * m;
    T* c0 = c + (r + 0) * n;
    T* c1 = c + (r + 1) * n;
    T* c2 = c + (r + 2) * n;
    T* c3 = c + (r + 3) * n;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) {
      auto x00 = V::load(c0 + j), x01 = V::load(c0 + j + W);
      auto x10 = V::load(c1 + j), x11 = V::load(c1 + j + W);
      auto x20 = V::load(c2 + j), x21 = V::load(c2 + j + W);
      auto x30 = V::load(c3 + j), x31 = V::load(c3 + j + W);
      for (std::size_t k = 0; k < m; ++k) {
        const T* bk = b + k * n + j;
        auto b0 = V::load(bk), b1 = V::load(bk + W);
        auto s0 = V::set1(a0[k]);
        x00 = V::fmadd(s0, b0, x00);
        x01 = V::fmadd(s0, b1, x01);
        auto s1 = V::set1(a1[k]);
        x10 = V::fmadd(s1, b0, x10);
        x11 = V::fmadd(s1, b1, x11);
        auto s2 = V::set1(a2[k]);
        x20 = V::fmadd(s2, b0, x20);
        x21 = V::fmadd(s2, b1, x21);
        auto s3 = V::set1(a3[k]);
        x30 = V::fmadd(s3, b0, x30);
        x31 = V::fmadd(s3, b1, x31);
      }
      V::store(c0 + j, x00), V::store(c0 + j + W, x01);
      V::store(c1 + j, x10), V::store(c1 + j + W, x11);
      V::store(c2 + j, x20), V::store(c2 + j + W, x21);
      V::store(c3 + j, x30), V::store(c3 + j + W, x31);
    }
    for (; j + W <= n; j += W) {
      auto x0 = V::load(c0 + j), x1 = V::load(c1 + j);
      auto x2 = V::load(c2 + j), x3 = V::load(c3 + j);
      for (std::size_t k = 0; k < m; ++k) {
        auto bk = V::load(b + k * n + j);
        x0 = V::fmadd(V::set1(a0[k]), bk, x0);
        x1 = V::fmadd(V::set1(a1[k]), bk, x1);
        x2 = V::fmadd(V::set1(a2[k]), bk, x2);
        x3 = V::fmadd(V::set1(a3[k]), bk, x3);
      }
      V::store(c0 + j, x0), V::store(c1 + j, x1);
      V::store(c2 + j, x2), V::store(c3 + j, x3);
    }
    for (; j < n; ++j) {
      T y0 = c0[j], y1 = c1[j], y2 = c2[j], y3 = c3[j];
      for (std::size_t k = 0; k < m; ++k) {
        const T bk = b[k * n + j];
        y0 += a0[k] * bk;
        y1 += a1[k] * bk;
        y2 += a2[k] * bk;
        y3 += a3[k] * bk;
      }
      c0[j] = y0, c1[j] = y1, c2[j] = y2, c3[j] = y3;
    }
  }
  for (; r < rows; ++r) {
    const T* ar = a + r * m;
    T* cr = c + r * n;
    std::size_t j = 0;
    for (; j + W <= n; j += W) {
      auto x = V::load(cr + j);
      for (std::size_t k = 0; k < m; ++k) x = V::fmadd(V::set1(ar[k]), V::load(b + k * n + j), x);
      V::store(cr + j, x);
    }
    for (; j < n; ++j) {
      T y = cr[j];
      for (std::size_t k = 0; k < m; ++k) y += ar[k] * b[k * n + j];
      cr[j] = y;
    }
  }
}

// C[m x n] += A^T G, blocked 4 columns of A x 2 vectors of G.
template <typename V>
inline void gemm_tn(std::size_t rows, std::size_t m, std::size_t n, const typename V::T* a,
                    const typename V::T* g, typename V::T* c) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + (i + 0) * n;
    T* c1 = c + (i + 1) * n;
    T* c2 = c + (i + 2) * n;
    T* c3 = c + (i + 3) * n;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) {
      auto x00 = V::load(c0 + j), x01 = V::load(c0 + j + W);
      auto x10 = V::load(c1 + j), x11 = V::load(c1 + j + W);
      auto x20 = V::load(c2 + j), x21 = V::load(c2 + j + W);
      auto x30 = V::load(c3 + j), x31 = V::load(c3 + j + W);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* ar = a + r * m + i;
        const T* gr = g + r * n + j;
        auto g0 = V::load(gr), g1 = V::load(gr + W);
        auto s0 = V::set1(ar[0]);
        x00 = V::fmadd(s0, g0, x00);
        x01 = V::fmadd(s0, g1, x01);
        auto s1 = V::set1(ar[1]);
        x10 = V::fmadd(s1, g0, x10);
        x11 = V::fmadd(s1, g1, x11);
        auto s2 = V::set1(ar[2]);
        x20 = V::fmadd(s2, g0, x20);
        x21 = V::fmadd(s2, g1, x21);
        auto s3 = V::set1(ar[3]);
        x30 = V::fmadd(s3, g0, x30);
        x31 = V::fmadd(s3, g1, x31);
      }
      V::store(c0 + j, x00), V::store(c0 + j + W, x01);
      V::store(c1 + j, x10), V::store(c1 + j + W, x11);
      V::store(c2 + j, x20), V::store(c2 + j + W, x21);
      V::store(c3 + j, x30), V::store(c3 + j + W, x31);
    }
    for (; j + W <= n; j += W) {
      auto x0 = V::load(c0 + j), x1 = V::load(c1 + j);
      auto x2 = V::load(c2 + j), x3 = V::load(c3 + j);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* ar = a + r * m + i;
        auto gr = V::load(g + r * n + j);
        x0 = V::fmadd(V::set1(ar[0]), gr, x0);
        x1 = V::fmadd(V::set1(ar[1]), gr, x1);
        x2 = V::fmadd(V::set1(ar[2]), gr, x2);
        x3 = V::fmadd(V::set1(ar[3]), gr, x3);
      }
      V::store(c0 + j, x0), V::store(c1 + j, x1);
      V::store(c2 + j, x2), V::store(c3 + j, x3);
    }
    for (; j < n; ++j) {
      T y0 = c0[j], y1 = c1[j], y2 = c2[j], y3 = c3[j];
      for (std::size_t r = 0; r < rows; ++r) {
        const T* ar = a + r * m + i;
        const T gv = g[r * n + j];
        y0 += ar[0] * gv;
        y1 += ar[1] * gv;
        y2 += ar[2] * gv;
        y3 += ar[3] * gv;
      }
      c0[j] = y0, c1[j] = y1, c2[j] = y2, c3[j] = y3;
    }
  }
  for (; i < m; ++i) {
    T* ci = c + i * n;
    std::size_t j = 0;
    for (; j + W <= n; j += W) {
      auto x = V::load(ci + j);
      for (std::size_t r = 0; r < rows; ++r) {
        x = V::fmadd(V::set1(a[r * m + i]), V::load(g + r * n + j), x);
      }
      V::store(ci + j, x);
    }
    for (; j < n; ++j) {
      T y = ci[j];
      for (std::size_t r = 0; r < rows; ++r) y += a[r * m + i] * g[r * n + j];
      ci[j] = y;
    }
  }
}

template <typename V>
inline void axpy(std::size_t n, typename V::T alpha, const typename V::T* x, typename V::T* y) {
  constexpr std::size_t W = V::W;
  auto s = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fmadd(s, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename V>
inline void relu(std::size_t n, const typename V::T* x, typename V::T* y) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  auto z = V::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::max(V::load(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename V>
inline void relu_backward(std::size_t n, const typename V::T* x, const typename V::T* dy,
                          typename V::T* dx) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(dx + i, V::select_positive(V::load(x + i), V::load(dy + i)));
  for (; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

}  // namespace subm::kernels::simd
