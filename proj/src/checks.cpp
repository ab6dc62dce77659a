#include "subm/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "subm/cost.hpp"
#include "subm/kernels.hpp"
#include "subm/oracle.hpp"
#include "subm/train.hpp"

namespace subm::checks {
namespace {

using Clock = std::chrono::steady_clock;

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

CheckResult finish(std::string name, Clock::time_point start, const std::string& failure,
                   const std::string& summary) {
  CheckResult r;
  r.name = std::move(name);
  r.passed = failure.empty();
  r.detail = failure.empty() ? summary : failure;
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

// Extent l >= f with (l - f) divisible by s, at most `cap`.
std::int32_t tiling_extent(std::mt19937_64& rng, int f, int s, std::int32_t cap) {
  const int steps = std::max(0, (cap - f) / s);
  return f + s * uniform_int(rng, 0, steps);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

ConvSpec spec_of(ConvKind kind, int m, int n, int f, int s, int d) {
  return ConvSpec{.kind = kind, .m = m, .n = n, .f = f, .s = s, .d = d};
}

}  // namespace

SparseGrid random_grid(std::mt19937_64& rng, const GridSpec& spec) {
  GridShape shape;
  shape.dim = spec.dim;
  for (int k = 0; k < spec.dim; ++k) shape.size[static_cast<std::size_t>(k)] = spec.extent;
  const std::int64_t capacity = shape.volume() * spec.batch;
  const auto target = static_cast<std::size_t>(std::min<std::int64_t>(
      capacity, uniform_int(rng, 1, static_cast<int>(std::max<std::size_t>(spec.max_active, 1)))));

  std::set<std::pair<std::int32_t, std::array<std::int32_t, kMaxDim>>> seen;
  std::vector<Point> pts;
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  while (pts.size() < target) {
    Point p;
    p.coord.batch = uniform_int(rng, 0, spec.batch - 1);
    for (int k = 0; k < spec.dim; ++k) {
      p.coord.spatial[static_cast<std::size_t>(k)] = uniform_int(rng, 0, spec.extent - 1);
    }
    if (!seen.insert({p.coord.batch, p.coord.spatial}).second) continue;
    for (std::size_t c = 0; c < spec.planes; ++c) p.features.push_back(static_cast<Real>(val(rng)));
    pts.push_back(std::move(p));
  }
  std::vector<std::int32_t> size(static_cast<std::size_t>(spec.dim), spec.extent);
  return grid_from_points(pts, size, spec.planes, spec.batch);
}

ConvParams random_params(std::mt19937_64& rng, const ConvSpec& spec) {
  ConvParams p = ConvParams::zeros(spec);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (Real& w : p.weights) w = static_cast<Real>(val(rng));
  for (Real& b : p.bias) b = static_cast<Real>(val(rng));
  return p;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

double max_grad_error(std::span<Real> x, std::span<const Real> analytic,
                      const std::function<double()>& loss, double h) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real keep = x[i];
    x[i] = static_cast<Real>(keep + h);
    const double up = loss();
    x[i] = static_cast<Real>(keep - h);
    const double down = loss();
    x[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

// ---------------------------------------------------------------------------

CheckResult check_dilation() {
  const auto start = Clock::now();
  std::string failure;
  std::ostringstream summary;
  for (int d : {2, 3}) {
    const std::int32_t l = 9;
    Point p;
    for (int k = 0; k < d; ++k) p.coord.spatial[static_cast<std::size_t>(k)] = l / 2;
    p.features = {Real(1)};
    std::vector<std::int32_t> size(static_cast<std::size_t>(d), l);
    SparseGrid g = grid_from_points(std::span<const Point>(&p, 1), size, 1);
    const ConvSpec spec{.kind = ConvKind::SC, .m = 1, .n = 1, .f = 3, .s = 1, .d = d};
    auto sites = g.site_map();
    std::vector<std::size_t> counts;
    for (int layer = 0; layer < 2; ++layer) {
      sites = build_sc(sites, spec).output_sites;
      counts.push_back(sites->size());
    }
    const std::size_t want1 = static_cast<std::size_t>(ipow(3, d));
    const std::size_t want2 = static_cast<std::size_t>(ipow(5, d));
    summary << "d=" << d << ": " << counts[0] << "," << counts[1] << " ";
    if (counts[0] != want1 || counts[1] != want2) {
      failure += "d=" + std::to_string(d) + " gave " + std::to_string(counts[0]) + "," +
                 std::to_string(counts[1]) + " ";
    }
  }
  return finish("dilation", start, failure, summary.str());
}

CheckResult check_vsc_invariance(std::uint64_t seed, int grids) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  std::size_t layers_run = 0;
  for (int t = 0; t < grids && failure.empty(); ++t) {
    const int d = uniform_int(rng, 2, 3);
    GridSpec gs{.dim = d, .extent = uniform_int(rng, 1, 16), .max_active = 200,
                .planes = static_cast<std::size_t>(uniform_int(rng, 1, 3)),
                .batch = uniform_int(rng, 1, 2)};
    SparseGrid in = random_grid(rng, gs);
    const auto reference = oracle::active_set(in.sites());
    SparseGrid h = in;
    const int depth = uniform_int(rng, 1, 8);
    for (int k = 0; k < depth; ++k) {
      const int f = 2 * uniform_int(rng, 0, 2) + 1;
      const int n = uniform_int(rng, 1, 3);
      auto spec = spec_of(ConvKind::VSC, static_cast<int>(h.num_features()), n, f, 1, d);
      auto rb = std::make_shared<const RuleBook>(build_vsc(h.site_map(), spec));
      h = conv_forward(h, rb, random_params(rng, spec));
      ++layers_run;
    }
    if (h.active_count() != in.active_count() || oracle::active_set(h.sites()) != reference ||
        !h.sites().same_sites(in.sites())) {
      failure = "grid " + std::to_string(t) + " changed its active set";
    }
  }
  return finish("vsc_invariance", start, failure,
                std::to_string(grids) + " grids, " + std::to_string(layers_run) + " layers");
}

CheckResult check_sc_matches_propagation(std::uint64_t seed, int instances) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  for (int t = 0; t < instances && failure.empty(); ++t) {
    const int d = uniform_int(rng, 1, 3);
    const int f = uniform_int(rng, 1, 4);
    const int s = uniform_int(rng, 1, f);
    const std::int32_t l = tiling_extent(rng, f, s, 8);
    SparseGrid g = random_grid(rng, {.dim = d, .extent = l, .max_active = 12, .planes = 1,
                                     .batch = uniform_int(rng, 1, 2)});
    RuleBook rb = build_sc(g.site_map(), spec_of(ConvKind::SC, 1, 1, f, s, d));
    auto active = oracle::active_set(g.sites());
    auto want = oracle::propagate_active(active, g.shape(), g.batch_size(), f, s);
    if (oracle::active_set(*rb.output_sites) != want) {
      failure = "instance " + std::to_string(t) + ": output sites differ from propagation";
    }
  }
  return finish("sc_vs_propagation", start, failure, std::to_string(instances) + " instances");
}

CheckResult check_dense_equivalence(std::uint64_t seed, int instances, double tol) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  double worst[6] = {0, 0, 0, 0, 0, 0};  // sc, vsc, mp, ap, bn, relu
  auto note = [&](int which, double err, const char* op, int t) {
    worst[which] = std::max(worst[which], err);
    if (err > tol && failure.empty()) {
      failure = std::string(op) + " instance " + std::to_string(t) + " differs by " + fmt(err);
    }
  };

  for (int t = 0; t < instances; ++t) {
    const int d = uniform_int(rng, 1, 3);
    const std::int32_t cap = d == 3 ? 7 : 10;

    {  // SC
      const int f = uniform_int(rng, 1, 3), s = uniform_int(rng, 1, f);
      const std::int32_t l = tiling_extent(rng, f, s, cap);
      const int m = uniform_int(rng, 1, 3), n = uniform_int(rng, 1, 3);
      SparseGrid g = random_grid(rng, {d, l, 15, static_cast<std::size_t>(m), 1});
      auto spec = spec_of(ConvKind::SC, m, n, f, s, d);
      ConvParams p = random_params(rng, spec);
      SparseGrid y = conv_forward(g, build_sc(g, spec), p);
      DenseVolume ref = oracle::dense_conv(grid_to_dense(g), p, s);
      if (oracle::active_set(y.sites()) !=
          oracle::propagate_active(oracle::active_set(g.sites()), g.shape(), 1, f, s)) {
        if (failure.empty()) failure = "sc instance " + std::to_string(t) + " active set";
      }
      note(0, oracle::max_abs_diff_at_active(y, ref), "sc", t);
    }
    {  // VSC against a zero-padded dense convolution
      const int f = 2 * uniform_int(rng, 0, 1) + 1;
      const int m = uniform_int(rng, 1, 3), n = uniform_int(rng, 1, 3);
      SparseGrid g = random_grid(rng, {d, uniform_int(rng, 1, cap), 15,
                                       static_cast<std::size_t>(m), 1});
      auto spec = spec_of(ConvKind::VSC, m, n, f, 1, d);
      ConvParams p = random_params(rng, spec);
      SparseGrid y = conv_forward(g, build_vsc(g, spec), p);
      DenseVolume ref = oracle::dense_conv(grid_to_dense(g), p, 1, (f - 1) / 2);
      note(1, oracle::max_abs_diff_at_active(y, ref), "vsc", t);
    }
    for (ConvKind kind : {ConvKind::MP, ConvKind::AP}) {
      const int f = uniform_int(rng, 1, 3), s = uniform_int(rng, 1, f);
      const std::int32_t l = tiling_extent(rng, f, s, cap);
      const auto c = static_cast<std::size_t>(uniform_int(rng, 1, 3));
      SparseGrid g = random_grid(rng, {d, l, 15, c, 1});
      auto spec = spec_of(kind, 1, 1, f, s, d);
      auto rb = std::make_shared<const RuleBook>(build_pool(g, spec));
      if (kind == ConvKind::MP) {
        note(2, oracle::max_abs_diff_at_active(maxpool_forward(g, rb),
                                               oracle::dense_maxpool(grid_to_dense(g), f, s)),
             "mp", t);
      } else {
        note(3, oracle::max_abs_diff_at_active(avgpool_forward(g, rb),
                                               oracle::dense_avgpool(grid_to_dense(g), f, s)),
             "ap", t);
      }
    }
    {  // BN (training statistics) and ReLU
      const auto c = static_cast<std::size_t>(uniform_int(rng, 1, 4));
      SparseGrid g;
      do {
        g = random_grid(rng, {d, uniform_int(rng, 2, cap), 20, c, uniform_int(rng, 1, 2)});
      } while (g.active_count() < 2);
      BatchNormParams bp = BatchNormParams::identity(c);
      std::uniform_real_distribution<double> val(-1.0, 1.0);
      for (auto& v : bp.gamma) v = static_cast<Real>(val(rng));
      for (auto& v : bp.beta) v = static_cast<Real>(val(rng));
      SparseGrid y = batchnorm_forward(g, bp, true);
      DenseVolume dense = grid_to_dense(g);
      note(4, oracle::max_abs_diff_at_active(
                  y, oracle::dense_batchnorm(dense, oracle::active_mask(g), bp.gamma, bp.beta,
                                             bp.eps)),
           "bn", t);
      note(5, oracle::max_abs_diff_at_active(relu_forward(g), oracle::dense_relu(dense)), "relu",
           t);
    }
  }
  std::ostringstream summary;
  summary << instances << " instances per op; max err sc=" << fmt(worst[0])
          << " vsc=" << fmt(worst[1]) << " mp=" << fmt(worst[2]) << " ap=" << fmt(worst[3])
          << " bn=" << fmt(worst[4]) << " relu=" << fmt(worst[5]);
  return finish("dense_equivalence", start, failure, summary.str());
}

namespace {

// Sum of r .* y over a feature matrix.
double weighted(const Matrix& y, const Matrix& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y.data()[i]) * r.data()[i];
  return s;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (auto& v : m.values()) v = static_cast<Real>(val(rng));
  return m;
}

// Features of `g` replaced by a mutable copy the finite differences can poke.
struct Probe {
  SiteMapPtr sites;
  Matrix x;
  SparseGrid grid() const { return SparseGrid(sites, x); }
};

// Rejects instances where the finite-difference step could flip a max:
// every window's winner must beat the runner-up (and zero) by `margin`.
bool max_has_margin(const SparseGrid& g, const RuleBook& rb, double margin) {
  const std::size_t c = g.num_features();
  std::vector<std::vector<double>> cand(rb.output_sites->size() * c, std::vector<double>{0.0});
  for (const auto& list : rb.rules) {
    for (const Rule& r : list) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        cand[static_cast<std::size_t>(r.out) * c + ch].push_back(
            g.features()(static_cast<std::size_t>(r.in), ch));
      }
    }
  }
  for (auto& v : cand) {
    if (v.size() < 2) continue;
    std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
    if (v[0] - v[1] < margin) return false;
  }
  return true;
}

}  // namespace

CheckResult check_gradients(std::uint64_t seed, int instances, double tol) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  double worst[7] = {0, 0, 0, 0, 0, 0, 0};
  const char* names[7] = {"conv", "mp", "ap", "bn", "relu", "classifier", "loss"};
  auto note = [&](int which, double err, int t) {
    worst[which] = std::max(worst[which], err);
    if (err > tol && failure.empty()) {
      failure = std::string(names[which]) + " instance " + std::to_string(t) + " rel err " +
                fmt(err);
    }
  };

  for (int t = 0; t < instances; ++t) {
    const int d = uniform_int(rng, 1, 3);
    const std::int32_t cap = d == 3 ? 5 : 7;

    {  // conv: SC or VSC, inputs, weights and bias
      const bool vsc = uniform_int(rng, 0, 1) == 1;
      const int f = vsc ? 3 : uniform_int(rng, 1, 3);
      const int s = vsc ? 1 : uniform_int(rng, 1, f);
      const std::int32_t l = vsc ? uniform_int(rng, 1, cap) : tiling_extent(rng, f, s, cap);
      const int m = uniform_int(rng, 1, 3), n = uniform_int(rng, 1, 3);
      auto spec = spec_of(vsc ? ConvKind::VSC : ConvKind::SC, m, n, f, s, d);
      SparseGrid g = random_grid(rng, {d, l, 10, static_cast<std::size_t>(m), 1});
      ConvParams p = random_params(rng, spec);
      auto rb = std::make_shared<const RuleBook>(build_rulebook(g.site_map(), spec));
      Probe probe{g.site_map(), g.features()};
      ConvTape tape;
      SparseGrid y = conv_forward(probe.grid(), rb, p, &tape);
      Matrix r = random_matrix(rng, y.active_count(), y.num_features());
      ConvGrads grads = conv_backward(tape, p, r);
      auto loss = [&] { return weighted(conv_forward(probe.grid(), *rb, p).features(), r); };
      double e = max_grad_error(probe.x.values(), grads.input.values(), loss);
      e = std::max(e, max_grad_error(p.weights, grads.weights, loss));
      e = std::max(e, max_grad_error(p.bias, grads.bias, loss));
      note(0, e, t);
    }
    for (ConvKind kind : {ConvKind::MP, ConvKind::AP}) {
      const int f = uniform_int(rng, 1, 3), s = uniform_int(rng, 1, f);
      const std::int32_t l = tiling_extent(rng, f, s, cap);
      const auto c = static_cast<std::size_t>(uniform_int(rng, 1, 3));
      auto spec = spec_of(kind, 1, 1, f, s, d);
      SparseGrid g;
      RuleBookPtr rb;
      do {
        g = random_grid(rng, {d, l, 10, c, 1});
        rb = std::make_shared<const RuleBook>(build_pool(g, spec));
      } while (kind == ConvKind::MP && !max_has_margin(g, *rb, 1e-3));
      Probe probe{g.site_map(), g.features()};
      PoolTape tape;
      auto fwd = [&](PoolTape* tp) {
        return kind == ConvKind::MP ? maxpool_forward(probe.grid(), rb, tp)
                                    : avgpool_forward(probe.grid(), rb, tp);
      };
      SparseGrid y = fwd(&tape);
      Matrix r = random_matrix(rng, y.active_count(), y.num_features());
      Matrix gin = kind == ConvKind::MP ? maxpool_backward(tape, r) : avgpool_backward(tape, r);
      note(kind == ConvKind::MP ? 1 : 2,
           max_grad_error(probe.x.values(), gin.values(),
                          [&] { return weighted(fwd(nullptr).features(), r); }),
           t);
    }
    {  // batch norm in training mode: inputs, gamma, beta
      const auto c = static_cast<std::size_t>(uniform_int(rng, 1, 3));
      SparseGrid g;
      do {
        g = random_grid(rng, {d, cap, 12, c, uniform_int(rng, 1, 2)});
      } while (g.active_count() < 3);
      BatchNormParams bp = BatchNormParams::identity(c);
      std::uniform_real_distribution<double> val(0.5, 1.5);
      for (auto& v : bp.gamma) v = static_cast<Real>(val(rng));
      for (auto& v : bp.beta) v = static_cast<Real>(val(rng) - 1.0);
      Probe probe{g.site_map(), g.features()};
      BatchNormTape tape;
      BatchNormParams scratch = bp;
      SparseGrid y = batchnorm_forward(probe.grid(), scratch, true, &tape);
      Matrix r = random_matrix(rng, y.active_count(), c);
      BatchNormGrads grads = batchnorm_backward(tape, bp, r);
      auto loss = [&] {
        BatchNormParams tmp = bp;
        return weighted(batchnorm_forward(probe.grid(), tmp, true).features(), r);
      };
      double e = max_grad_error(probe.x.values(), grads.input.values(), loss);
      e = std::max(e, max_grad_error(bp.gamma, grads.gamma, loss));
      e = std::max(e, max_grad_error(bp.beta, grads.beta, loss));
      note(3, e, t);
    }
    {  // ReLU away from the kink
      const auto c = static_cast<std::size_t>(uniform_int(rng, 1, 3));
      SparseGrid g = random_grid(rng, {d, cap, 12, c, 1});
      Probe probe{g.site_map(), g.features()};
      for (auto& v : probe.x.values()) {
        if (std::abs(v) < 1e-2) v = v < 0 ? Real(-0.5) : Real(0.5);
      }
      ReluTape tape;
      SparseGrid y = relu_forward(probe.grid(), &tape);
      Matrix r = random_matrix(rng, y.active_count(), c);
      Matrix gin = relu_backward(tape, r);
      note(4,
           max_grad_error(probe.x.values(), gin.values(),
                          [&] { return weighted(relu_forward(probe.grid()).features(), r); }),
           t);
    }
    {  // classifier head: one site per sample, some samples missing
      const std::int32_t batch = uniform_int(rng, 1, 4);
      const auto m = static_cast<std::size_t>(uniform_int(rng, 1, 4));
      const auto classes = static_cast<std::size_t>(uniform_int(rng, 2, 5));
      std::vector<Point> pts;
      std::uniform_real_distribution<double> val(-1.0, 1.0);
      for (std::int32_t b = 0; b < batch; ++b) {
        if (batch > 1 && uniform_int(rng, 0, 3) == 0) continue;
        Point p;
        p.coord.batch = b;
        for (std::size_t k = 0; k < m; ++k) p.features.push_back(static_cast<Real>(val(rng)));
        pts.push_back(std::move(p));
      }
      const std::int32_t one = 1;
      SparseGrid g = grid_from_points(pts, std::span<const std::int32_t>(&one, 1), m, batch);
      std::vector<Real> w(m * classes), bias(classes);
      for (auto& v : w) v = static_cast<Real>(val(rng));
      for (auto& v : bias) v = static_cast<Real>(val(rng));
      Probe probe{g.site_map(), g.features()};
      HeadTape tape;
      Matrix logits = classifier_forward(probe.grid(), w, bias, classes, &tape);
      Matrix r = random_matrix(rng, logits.rows(), logits.cols());
      HeadGrads grads = classifier_backward(tape, w, classes, r);
      auto loss = [&] { return weighted(classifier_forward(probe.grid(), w, bias, classes), r); };
      double e = max_grad_error(probe.x.values(), grads.input.values(), loss);
      e = std::max(e, max_grad_error(w, grads.weights, loss));
      e = std::max(e, max_grad_error(bias, grads.bias, loss));
      note(5, e, t);
    }
    {  // softmax cross-entropy
      const auto batch = static_cast<std::size_t>(uniform_int(rng, 1, 5));
      const auto classes = static_cast<std::size_t>(uniform_int(rng, 2, 6));
      Matrix z = random_matrix(rng, batch, classes);
      for (auto& v : z.values()) v *= 3;
      std::vector<int> labels(batch);
      for (auto& y : labels) y = uniform_int(rng, 0, static_cast<int>(classes) - 1);
      LossResult lr = softmax_xent(z, labels);
      note(6,
           max_grad_error(z.values(), lr.grad.values(),
                          [&] { return softmax_xent(z, labels).loss; }),
           t);
    }
  }
  std::ostringstream summary;
  summary << instances << " instances per op; max rel err";
  for (int i = 0; i < 7; ++i) summary << ' ' << names[i] << '=' << fmt(worst[i]);
  return finish("gradients", start, failure, summary.str());
}

CheckResult check_cost_identities(std::uint64_t seed, int instances) {
  const auto start = Clock::now();
  std::string failure;

  // Single output site with 5 active inputs among its 3x3 field.
  const SiteCost dense = site_cost(CostColumn::kDense, 3, 2, 16, 16, 5, true);
  const SiteCost sparse = site_cost(CostColumn::kSparse, 3, 2, 16, 16, 5, true);
  const SiteCost valid = site_cost(CostColumn::kValid, 3, 2, 16, 16, 5, true);
  if (dense.flops != 2304 || sparse.flops != 1280 || valid.flops != 1280 || dense.memory != 16 ||
      sparse.memory != 16 || valid.memory != 16) {
    failure = "single-site table values wrong";
  }

  std::mt19937_64 rng(seed);
  for (int t = 0; t < instances && failure.empty(); ++t) {
    const int d = uniform_int(rng, 1, 3);
    const int f = 2 * uniform_int(rng, 0, 1) + 1;
    const std::int64_t m = uniform_int(rng, 1, 32), n = uniform_int(rng, 1, 32);
    SparseGrid g = random_grid(rng, {d, uniform_int(rng, f, d == 3 ? 8 : 12), 30, 1, 1});
    const int pad = (f - 1) / 2;
    RuleBook sc = build_sc(g.site_map(), {.kind = ConvKind::SC, .m = 1, .n = 1, .f = f, .s = 1,
                                          .d = d, .pad = pad});
    RuleBook vsc = build_vsc(g.site_map(), spec_of(ConvKind::VSC, 1, 1, f, 1, d));

    // Independent per-site sum from the dense occupancy mask.
    const auto mask = oracle::active_mask(g);
    DenseVolume index(1, g.shape(), 1);
    std::int64_t per_site_sc = 0, per_site_vsc = 0, per_site_dense = 0;
    for (std::int64_t s = 0; s < g.shape().volume(); ++s) {
      const Coordinate q = index.site_coord(s);
      std::int64_t a = 0;
      for (std::int64_t off = 0; off < ipow(f, d); ++off) {
        Coordinate p = q;
        std::int64_t rem = off;
        bool inside = true;
        for (int k = d - 1; k >= 0; --k) {
          auto kk = static_cast<std::size_t>(k);
          p.spatial[kk] = q.spatial[kk] + static_cast<std::int32_t>(rem % f) - pad;
          rem /= f;
          inside = inside && p.spatial[kk] >= 0 && p.spatial[kk] < g.shape().size[kk];
        }
        if (inside && mask[static_cast<std::size_t>(index.site_index(p))]) ++a;
      }
      const bool centre = mask[static_cast<std::size_t>(s)];
      per_site_dense += site_cost(CostColumn::kDense, f, d, m, n, a, centre).flops;
      per_site_sc += site_cost(CostColumn::kSparse, f, d, m, n, a, centre).flops;
      per_site_vsc += site_cost(CostColumn::kValid, f, d, m, n, a, centre).flops;
    }
    const std::int64_t ledger_sc = count_flops(sc, m, n);
    const std::int64_t ledger_vsc = count_flops(vsc, m, n);
    const std::int64_t ledger_dense = count_dense_flops(f, d, m, n, g.shape(), 1);
    std::int64_t sum_k = 0;
    for (const auto& list : sc.rules) sum_k += static_cast<std::int64_t>(list.size());
    if (ledger_sc != m * n * sum_k || ledger_sc != per_site_sc || ledger_vsc != per_site_vsc ||
        ledger_dense != per_site_dense || !(ledger_vsc <= ledger_sc && ledger_sc <= ledger_dense)) {
      failure = "instance " + std::to_string(t) + ": ledger disagrees with per-site sums";
    }
  }
  return finish("cost_identities", start, failure,
                "C=" + std::to_string(dense.flops) + " SC=" + std::to_string(sparse.flops) +
                    " VSC=" + std::to_string(valid.flops) + "; " + std::to_string(instances) +
                    " random instances");
}

CheckResult check_dc_inversion(std::uint64_t seed, int instances) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  for (int t = 0; t < instances && failure.empty(); ++t) {
    const int d = uniform_int(rng, 1, 3);
    const int f = uniform_int(rng, 2, 3);
    const int s = uniform_int(rng, 1, f);
    const std::int32_t l = tiling_extent(rng, f, s, d == 3 ? 9 : 16);
    const int m = uniform_int(rng, 1, 3), n = uniform_int(rng, 1, 3);
    SparseGrid g = random_grid(rng, {d, l, 40, static_cast<std::size_t>(m),
                                     uniform_int(rng, 1, 2)});
    auto sc_spec = spec_of(ConvKind::SC, m, n, f, s, d);
    auto sc = std::make_shared<const RuleBook>(build_sc(g.site_map(), sc_spec));
    auto dc = std::make_shared<const RuleBook>(invert(*sc));
    SparseGrid y = conv_forward(g, sc, random_params(rng, sc_spec));
    SparseGrid back = conv_forward(y, dc, random_params(rng, spec_of(ConvKind::SC, n, m, f, s, d)));

    if (oracle::active_set(back.sites()) != oracle::active_set(g.sites()) ||
        !back.sites().same_sites(g.sites())) {
      failure = "instance " + std::to_string(t) + ": DC did not restore the input sites";
      break;
    }
    // Every input row is reached, and the rules are the mirrored transpose.
    std::vector<bool> reached(g.active_count(), false);
    const std::size_t k = sc->num_offsets();
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<Rule> flipped;
      for (const Rule& r : sc->rules[i]) flipped.push_back({r.out, r.in});
      auto mirror = dc->rules[k - 1 - i];
      auto cmp = [](const Rule& a, const Rule& b) {
        return a.out != b.out ? a.out < b.out : a.in < b.in;
      };
      std::sort(flipped.begin(), flipped.end(), cmp);
      std::sort(mirror.begin(), mirror.end(), cmp);
      if (flipped != mirror) failure = "instance " + std::to_string(t) + ": rules not transposed";
      for (const Rule& r : mirror) reached[static_cast<std::size_t>(r.out)] = true;
    }
    if (failure.empty() && std::find(reached.begin(), reached.end(), false) != reached.end()) {
      failure = "instance " + std::to_string(t) + ": an input site receives no DC rule";
    }
  }
  return finish("dc_inversion", start, failure, std::to_string(instances) + " books");
}

CheckResult check_kernel_equivalence(std::uint64_t seed, int instances) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::string failure;
  const auto& ref = kernels::scalar::table<double>();
  std::ostringstream summary;
  for (kernels::Isa isa : kernels::available_isas()) {
    const auto* tab = kernels::table_for<double>(isa);
    if (!tab) continue;
    summary << kernels::isa_name(isa) << ' ';
    for (int t = 0; t < instances && failure.empty(); ++t) {
      const auto rows = static_cast<std::size_t>(uniform_int(rng, 0, 37));
      const auto m = static_cast<std::size_t>(uniform_int(rng, 1, 19));
      const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 21));
      std::uniform_real_distribution<double> val(-1.0, 1.0);
      auto vec = [&](std::size_t len) {
        std::vector<double> v(len);
        for (auto& x : v) x = val(rng);
        return v;
      };
      const auto a = vec(rows * m), b = vec(m * n), g = vec(rows * n);
      auto c0 = vec(rows * n), c1 = c0;
      ref.gemm_nn(rows, m, n, a.data(), b.data(), c0.data());
      tab->gemm_nn(rows, m, n, a.data(), b.data(), c1.data());
      auto w0 = vec(m * n), w1 = w0;
      ref.gemm_tn(rows, m, n, a.data(), g.data(), w0.data());
      tab->gemm_tn(rows, m, n, a.data(), g.data(), w1.data());
      // Reassociation bound: every term has magnitude <= 1.
      const double bound = 4.0 * static_cast<double>(std::max(m, rows) + 2) * 1e-16 *
                           static_cast<double>(std::max(m, rows) + 1);
      for (std::size_t i = 0; i < c0.size(); ++i) {
        if (std::abs(c0[i] - c1[i]) > bound) failure = "gemm_nn differs";
      }
      for (std::size_t i = 0; i < w0.size(); ++i) {
        if (std::abs(w0[i] - w1[i]) > bound) failure = "gemm_tn differs";
      }
      auto y0 = vec(rows * n), y1 = y0, r0 = y0, r1 = y0, dx0 = y0, dx1 = y0;
      ref.axpy(g.size(), 0.75, g.data(), y0.data());
      tab->axpy(g.size(), 0.75, g.data(), y1.data());
      ref.relu(g.size(), g.data(), r0.data());
      tab->relu(g.size(), g.data(), r1.data());
      ref.relu_backward(g.size(), g.data(), c0.data(), dx0.data());
      tab->relu_backward(g.size(), g.data(), c0.data(), dx1.data());
      for (std::size_t i = 0; i < y0.size(); ++i) {
        if (std::abs(y0[i] - y1[i]) > 1e-15 || r0[i] != r1[i] || dx0[i] != dx1[i]) {
          failure = "elementwise kernels differ";
        }
      }
      if (!failure.empty()) failure = std::string(kernels::isa_name(isa)) + ": " + failure;
    }
  }
  return finish("kernel_equivalence", start, failure, summary.str());
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {
      check_dilation(),
      check_vsc_invariance(seed, 200),
      check_sc_matches_propagation(seed + 1, 200),
      check_dense_equivalence(seed + 2, 100, 1e-10),
      check_gradients(seed + 3, 30, 1e-6),
      check_cost_identities(seed + 4, 100),
      check_dc_inversion(seed + 5, 100),
      check_kernel_equivalence(seed + 6, 100),
  };
}

}  // namespace subm::checks
