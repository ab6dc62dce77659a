#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace subm::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Inner loops of the rule-book executor. All matrices are dense row-major
/// and contiguous.
template <typename T>
struct Table {
  Isa isa;
  // C[rows x n] += A[rows x m] * B[m x n]
  void (*gemm_nn)(std::size_t rows, std::size_t m, std::size_t n, const T* a, const T* b, T* c);
  // C[m x n] += A[rows x m]^T * G[rows x n]
  void (*gemm_tn)(std::size_t rows, std::size_t m, std::size_t n, const T* a, const T* g, T* c);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // y = max(x, 0)
  void (*relu)(std::size_t n, const T* x, T* y);
  // dx = x > 0 ? dy : 0
  void (*relu_backward)(std::size_t n, const T* x, const T* dy, T* dx);
};

/// Table picked once per process: the widest ISA the CPU supports, unless
/// SUBM_KERNELS=scalar|avx2|neon overrides it.
template <typename T>
const Table<T>& active();

/// Specific table, or nullptr when not compiled in or not supported by
/// the running CPU.
template <typename T>
const Table<T>* table_for(Isa isa);

std::vector<Isa> available_isas();

namespace scalar {
template <typename T>
const Table<T>& table();
}
namespace avx2 {
template <typename T>
const Table<T>* table();
}
namespace neon {
template <typename T>
const Table<T>* table();
}

}  // namespace subm::kernels
