#include <cmath>
#include <random>

#include "helpers.hpp"
#include "subm/checks.hpp"
#include "subm/ops.hpp"

namespace subm {
namespace {

using test::make_grid;

TEST(BatchNorm, TwoPointStandardization) {
  SparseGrid g = make_grid({3, 3}, 1, {{{0, 0}, {0.0}}, {{1, 1}, {2.0}}});
  BatchNormParams p = BatchNormParams::identity(1);
  p.eps = 0;
  SparseGrid y = batchnorm_forward(g, p, true);
  EXPECT_DOUBLE_EQ(y.features()(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(y.features()(1, 0), 1.0);
  EXPECT_EQ(y.site_map(), g.site_map());
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  SparseGrid g = make_grid({3, 3}, 1, {{{0, 0}, {0.3}}, {{1, 1}, {2.0}}, {{2, 2}, {-4.0}}});
  BatchNormParams p = BatchNormParams::identity(1);
  p.gamma[0] = 0;
  p.beta[0] = 0.25;
  SparseGrid y = batchnorm_forward(g, p, true);
  for (Real v : y.features().values()) EXPECT_EQ(v, 0.25);
}

TEST(BatchNorm, TooFewSitesInTraining) {
  SparseGrid g = make_grid({3, 3}, 1, {{{0, 0}, {1.0}}});
  BatchNormParams p = BatchNormParams::identity(1);
  EXPECT_THROW_CODE(batchnorm_forward(g, p, true), ErrorCode::kTooFewActiveSites);
  EXPECT_NO_THROW(batchnorm_forward(g, p, false));
}

TEST(BatchNorm, RunningStatsUpdateAndInference) {
  SparseGrid g = make_grid({3, 3}, 1, {{{0, 0}, {1.0}}, {{1, 1}, {3.0}}});
  BatchNormParams p = BatchNormParams::identity(1);
  batchnorm_forward(g, p, true);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * 2.0, 1e-12);  // unbiased variance of {1,3} is 2
  SparseGrid y = batchnorm_forward(g, p, false);
  EXPECT_NEAR(y.features()(0, 0), (1.0 - 0.2) / std::sqrt(1.1 + 1e-5), 1e-12);
}

TEST(BatchNorm, FiniteDifferences) {
  std::mt19937_64 rng(2);
  Matrix x(10, 4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (Real& v : x.values()) v = u(rng);
  std::vector<Point> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({test::at({i, 0}), {0, 0, 0, 0}});
  SparseGrid g = grid_from_points(pts, std::vector<std::int32_t>{10, 1}, 4).with_features(x);
  BatchNormParams p = BatchNormParams::identity(4);
  for (std::size_t c = 0; c < 4; ++c) {
    p.gamma[c] = 0.5 + u(rng);
    p.beta[c] = u(rng);
  }
  Matrix seed(10, 4);
  for (Real& v : seed.values()) v = u(rng);
  BatchNormTape tape;
  BatchNormParams q = p;
  batchnorm_forward(g, q, true, &tape);
  BatchNormGrads gr = batchnorm_backward(tape, p, seed);
  auto loss = [&] {
    BatchNormParams r = p;
    SparseGrid y = batchnorm_forward(g.with_features(x), r, true);
    double acc = 0;
    for (std::size_t i = 0; i < seed.size(); ++i) acc += y.features().values()[i] * seed.values()[i];
    return acc;
  };
  EXPECT_LT(checks::max_grad_error(x.values(), gr.input.values(), loss), 1e-6);
  EXPECT_LT(checks::max_grad_error(p.gamma, gr.gamma, loss), 1e-6);
  EXPECT_LT(checks::max_grad_error(p.beta, gr.beta, loss), 1e-6);
}

TEST(Relu, ClampsAndKeepsSites) {
  SparseGrid g = make_grid({3, 3}, 2, {{{0, 0}, {-1.0, 2.0}}, {{1, 1}, {-3.0, -0.5}}});
  ReluTape tape;
  SparseGrid y = relu_forward(g, &tape);
  EXPECT_EQ(y.features(), Matrix(2, 2, std::vector<Real>{0, 2, 0, 0}));
  EXPECT_EQ(y.active_count(), 2u);
  EXPECT_EQ(relu_forward(y).features(), y.features());
  Matrix gi = relu_backward(tape, Matrix(2, 2, 1.0));
  EXPECT_EQ(gi, Matrix(2, 2, std::vector<Real>{0, 1, 0, 0}));
}

TEST(AddConcat, RequireIdenticalActiveSets) {
  SparseGrid a = make_grid({3, 3}, 1, {{{0, 0}, {1.0}}, {{1, 1}, {2.0}}});
  SparseGrid b = a.with_features(Matrix(2, 1, std::vector<Real>{10, 20}));
  SparseGrid sum = add_grids(a, b);
  EXPECT_EQ(sum.site_map(), a.site_map());
  EXPECT_EQ(sum.features(), Matrix(2, 1, std::vector<Real>{11, 22}));
  SparseGrid cat = concat_grids(a, b);
  EXPECT_EQ(cat.num_features(), 2u);
  EXPECT_EQ(cat.features(), Matrix(2, 2, std::vector<Real>{1, 10, 2, 20}));

  SparseGrid other = make_grid({3, 3}, 1, {{{0, 0}, {1.0}}, {{2, 2}, {2.0}}});
  EXPECT_THROW_CODE(add_grids(a, other), ErrorCode::kActiveSetMismatch);
  EXPECT_THROW_CODE(concat_grids(a, other), ErrorCode::kActiveSetMismatch);
  SparseGrid wide = a.with_features(Matrix(2, 2));
  EXPECT_THROW_CODE(add_grids(a, wide), ErrorCode::kPlaneMismatch);
}

TEST(Classifier, IdentityWeights) {
  SparseGrid g = make_grid({1, 1}, 2, {{{0, 0}, {1.0, 2.0}}});
  const std::vector<Real> w{1, 0, 0, 1}, b{0, 0};
  Matrix logits = classifier_forward(g, w, b, 2);
  EXPECT_EQ(logits, Matrix(1, 2, std::vector<Real>{1, 2}));
}

TEST(Classifier, MissingSampleGivesBiasAndWarning) {
  SparseGrid g = make_grid({1, 1}, 2, {{{0, 0}, {1.0, 2.0}, 1}}, 2);
  const std::vector<Real> w{1, 0, 0, 1}, b{0.5, -0.5};
  std::vector<std::int32_t> missing;
  Matrix logits = classifier_forward(g, w, b, 2, nullptr, &missing);
  EXPECT_EQ(missing, std::vector<std::int32_t>{0});
  EXPECT_EQ(logits(0, 0), 0.5);
  EXPECT_EQ(logits(1, 1), 1.5);
}

TEST(Classifier, MultipleSitesRejected) {
  SparseGrid g = make_grid({2, 1}, 1, {{{0, 0}, {1.0}}, {{1, 0}, {1.0}}});
  const std::vector<Real> w{1}, b{0};
  EXPECT_THROW_CODE(classifier_forward(g, w, b, 1), ErrorCode::kMultipleSites);
}

TEST(Classifier, FiniteDifferences) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  SparseGrid g = make_grid({1, 1}, 3, {{{0, 0}, {0.1, 0.2, 0.3}, 0}, {{0, 0}, {-1, 0.5, 2}, 1}}, 2);
  Matrix x = g.features();
  std::vector<Real> w(12), b(4);
  for (Real& v : w) v = u(rng);
  for (Real& v : b) v = u(rng);
  Matrix seed(2, 4);
  for (Real& v : seed.values()) v = u(rng);
  HeadTape tape;
  classifier_forward(g, w, b, 4, &tape);
  HeadGrads gr = classifier_backward(tape, w, 4, seed);
  auto loss = [&] {
    Matrix l = classifier_forward(g.with_features(x), w, b, 4);
    double acc = 0;
    for (std::size_t i = 0; i < seed.size(); ++i) acc += l.values()[i] * seed.values()[i];
    return acc;
  };
  EXPECT_LT(checks::max_grad_error(x.values(), gr.input.values(), loss), 1e-6);
  EXPECT_LT(checks::max_grad_error(w, gr.weights, loss), 1e-6);
  EXPECT_LT(checks::max_grad_error(b, gr.bias, loss), 1e-6);
}

}  // namespace
}  // namespace subm
