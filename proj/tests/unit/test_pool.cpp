#include <memory>
#include <random>

#include "helpers.hpp"
#include "subm/checks.hpp"
#include "subm/ops.hpp"
#include "subm/oracle.hpp"

namespace subm {
namespace {

using test::make_grid;

RuleBookPtr pool_book(const SparseGrid& g, ConvKind kind, int f, int s) {
  ConvSpec spec{.kind = kind, .m = static_cast<int>(g.num_features()),
                .n = static_cast<int>(g.num_features()), .f = f, .s = s, .d = g.dim()};
  return std::make_shared<const RuleBook>(build_pool(g, spec));
}

TEST(MaxPool, NegativeInputLosesToZero) {
  SparseGrid g = make_grid({2, 2}, 1, {{{0, 0}, {-2.5}}});
  PoolTape tape;
  SparseGrid out = maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2), &tape);
  ASSERT_EQ(out.active_count(), 1u);
  EXPECT_EQ(out.features()(0, 0), 0.0);
  Matrix gi = maxpool_backward(tape, Matrix(1, 1, 1.0));
  EXPECT_EQ(gi(0, 0), 0.0);
}

TEST(MaxPool, StrictMaxRoutesGradient) {
  SparseGrid g = make_grid({2, 2}, 1, {{{0, 0}, {1.0}}, {{1, 1}, {3.0}}});
  PoolTape tape;
  SparseGrid out = maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2), &tape);
  EXPECT_EQ(out.features()(0, 0), 3.0);
  Matrix gi = maxpool_backward(tape, Matrix(1, 1, 2.0));
  EXPECT_EQ(gi(0, 0), 0.0);
  EXPECT_EQ(gi(1, 0), 2.0);
}

TEST(MaxPool, TiesGoToLowestOffset) {
  SparseGrid g = make_grid({2, 2}, 1, {{{1, 1}, {3.0}}, {{0, 0}, {3.0}}});
  PoolTape tape;
  maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2), &tape);
  Matrix gi = maxpool_backward(tape, Matrix(1, 1, 1.0));
  EXPECT_EQ(gi(1, 0), 1.0);  // (0,0) sits at offset 0
  EXPECT_EQ(gi(0, 0), 0.0);
}

TEST(MaxPool, PerChannelArgmax) {
  SparseGrid g = make_grid({2, 2}, 2, {{{0, 0}, {1.0, -1.0}}, {{0, 1}, {-1.0, 5.0}}});
  PoolTape tape;
  SparseGrid out = maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2), &tape);
  EXPECT_EQ(out.features()(0, 0), 1.0);
  EXPECT_EQ(out.features()(0, 1), 5.0);
  Matrix gi = maxpool_backward(tape, Matrix(1, 2, std::vector<Real>{1.0, 1.0}));
  EXPECT_EQ(gi(0, 0), 1.0);
  EXPECT_EQ(gi(0, 1), 0.0);
  EXPECT_EQ(gi(1, 0), 0.0);
  EXPECT_EQ(gi(1, 1), 1.0);
}

TEST(AvgPool, DividesByWindowVolume) {
  SparseGrid g = make_grid({2, 2}, 1, {{{0, 0}, {1.0}}, {{1, 1}, {3.0}}});
  SparseGrid out = avgpool_forward(g, pool_book(g, ConvKind::AP, 2, 2));
  EXPECT_EQ(out.features()(0, 0), 1.0);
  SparseGrid one = make_grid({2, 2}, 1, {{{1, 0}, {4.0}}});
  EXPECT_EQ(avgpool_forward(one, pool_book(one, ConvKind::AP, 2, 2)).features()(0, 0), 1.0);
}

TEST(AvgPool, OneDimensional) {
  SparseGrid g = make_grid({3}, 1, {{{0}, {3.0}}, {{2}, {6.0}}});
  EXPECT_EQ(avgpool_forward(g, pool_book(g, ConvKind::AP, 3, 1)).features()(0, 0), 3.0);
}

TEST(AvgPool, BackwardScattersScaledGrad) {
  SparseGrid g = make_grid({2, 2}, 1, {{{0, 0}, {1.0}}, {{1, 1}, {3.0}}});
  PoolTape tape;
  avgpool_forward(g, pool_book(g, ConvKind::AP, 2, 2), &tape);
  Matrix gi = avgpool_backward(tape, Matrix(1, 1, 8.0));
  EXPECT_EQ(gi(0, 0), 2.0);
  EXPECT_EQ(gi(1, 0), 2.0);
}

TEST(Pool, WrongBookKind) {
  SparseGrid g = make_grid({2, 2}, 1, {{{0, 0}, {1.0}}});
  EXPECT_THROW_CODE(avgpool_forward(g, pool_book(g, ConvKind::MP, 2, 2)), ErrorCode::kShapeMismatch);
  PoolTape tape;
  maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2), &tape);
  EXPECT_THROW_CODE(maxpool_backward(tape, Matrix(2, 1)), ErrorCode::kShapeMismatch);
}

TEST(Pool, MatchesDenseOracle) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    SparseGrid g = checks::random_grid(rng, {.dim = 2, .extent = 8, .max_active = 20, .planes = 2});
    SparseGrid mp = maxpool_forward(g, pool_book(g, ConvKind::MP, 2, 2));
    SparseGrid ap = avgpool_forward(g, pool_book(g, ConvKind::AP, 2, 2));
    const DenseVolume v = grid_to_dense(g);
    EXPECT_LT(oracle::max_abs_diff_at_active(mp, oracle::dense_maxpool(v, 2, 2)), 1e-10);
    EXPECT_LT(oracle::max_abs_diff_at_active(ap, oracle::dense_avgpool(v, 2, 2)), 1e-10);
  }
}

}  // namespace
}  // namespace subm
