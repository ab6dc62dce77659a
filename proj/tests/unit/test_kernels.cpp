#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "subm/kernels.hpp"

namespace subm::kernels {
namespace {

template <typename T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

template <typename T>
void expect_matches_scalar(const Table<T>& t, double tol) {
  const Table<T>& ref = scalar::table<T>();
  std::mt19937_64 rng(11);
  // Sizes straddle the vector widths and their remainders.
  for (std::size_t rows : {1u, 3u, 17u}) {
    for (std::size_t m : {1u, 4u, 9u, 33u}) {
      for (std::size_t n : {1u, 5u, 8u, 19u}) {
        auto a = random_vec<T>(rng, rows * m);
        auto b = random_vec<T>(rng, m * n);
        auto g = random_vec<T>(rng, rows * n);
        auto c0 = random_vec<T>(rng, rows * n);
        auto c1 = c0;
        ref.gemm_nn(rows, m, n, a.data(), b.data(), c0.data());
        t.gemm_nn(rows, m, n, a.data(), b.data(), c1.data());
        for (std::size_t i = 0; i < c0.size(); ++i) EXPECT_NEAR(c0[i], c1[i], tol);

        auto w0 = random_vec<T>(rng, m * n);
        auto w1 = w0;
        ref.gemm_tn(rows, m, n, a.data(), g.data(), w0.data());
        t.gemm_tn(rows, m, n, a.data(), g.data(), w1.data());
        for (std::size_t i = 0; i < w0.size(); ++i) EXPECT_NEAR(w0[i], w1[i], tol);
      }
    }
  }
  for (std::size_t n : {0u, 1u, 7u, 8u, 31u}) {
    auto x = random_vec<T>(rng, n);
    auto dy = random_vec<T>(rng, n);
    auto y0 = random_vec<T>(rng, n);
    auto y1 = y0;
    ref.axpy(n, T(0.7), x.data(), y0.data());
    t.axpy(n, T(0.7), x.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y0[i], y1[i], tol);
    std::vector<T> r0(n), r1(n), d0(n), d1(n);
    ref.relu(n, x.data(), r0.data());
    t.relu(n, x.data(), r1.data());
    ref.relu_backward(n, x.data(), dy.data(), d0.data());
    t.relu_backward(n, x.data(), dy.data(), d1.data());
    EXPECT_EQ(r0, r1);
    EXPECT_EQ(d0, d1);
  }
}

TEST(Kernels, ScalarIsAlwaysAvailable) {
  auto isas = available_isas();
  ASSERT_FALSE(isas.empty());
  EXPECT_EQ(isas.front(), Isa::kScalar);
  EXPECT_NE(table_for<double>(Isa::kScalar), nullptr);
}

TEST(Kernels, ScalarGemmByHand) {
  const double a[] = {1, 2, 3, 4};      // 2x2
  const double b[] = {5, 6, 7, 8, 9, 10};  // 2x3
  double c[6] = {};
  scalar::table<double>().gemm_nn(2, 2, 3, a, b, c);
  const double want[] = {21, 24, 27, 47, 54, 61};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(c[i], want[i]);
}

TEST(Kernels, EveryAvailableIsaMatchesScalarDouble) {
  for (Isa isa : available_isas()) {
    SCOPED_TRACE(std::string(isa_name(isa)));
    expect_matches_scalar(*table_for<double>(isa), 1e-12);
  }
}

TEST(Kernels, EveryAvailableIsaMatchesScalarFloat) {
  for (Isa isa : available_isas()) {
    SCOPED_TRACE(std::string(isa_name(isa)));
    expect_matches_scalar(*table_for<float>(isa), 1e-4);
  }
}

TEST(Kernels, ActiveTableIsAvailable) {
  const Isa chosen = active<double>().isa;
  bool found = false;
  for (Isa isa : available_isas()) found = found || isa == chosen;
  EXPECT_TRUE(found);
}

}  // namespace
}  // namespace subm::kernels
