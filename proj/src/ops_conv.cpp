#include <algorithm>
#include <cmath>

#include "subm/kernels.hpp"
#include "subm/ops.hpp"

namespace subm {
namespace {

// Rules are executed in chunks: gather input rows, one GEMM against W^i,
// scatter-add into the output rows.
constexpr std::size_t kChunk = 256;

void check_conv(const SparseGrid& g, const RuleBook& rb, const ConvParams& p) {
  p.validate();
  if (static_cast<std::size_t>(p.spec.m) != g.num_features()) {
    throw Error(ErrorCode::kShapeMismatch, "conv expects m=" + std::to_string(p.spec.m) +
                                               " input planes, grid has " +
                                               std::to_string(g.num_features()));
  }
  if (!rb.input_sites || rb.input_sites->size() != g.active_count()) {
    throw Error(ErrorCode::kStaleRuleBook,
                "rule book was built for a different active set (" +
                    std::to_string(rb.input_sites ? rb.input_sites->size() : 0) + " vs " +
                    std::to_string(g.active_count()) + " sites)");
  }
  if (static_cast<std::int64_t>(rb.num_offsets()) != p.spec.volume()) {
    throw Error(ErrorCode::kShapeMismatch, "rule book has " + std::to_string(rb.num_offsets()) +
                                               " offsets, parameters have " +
                                               std::to_string(p.spec.volume()));
  }
}

}  // namespace

void ConvParams::validate() const {
  const auto expect = static_cast<std::size_t>(spec.volume()) * matrix_size();
  if (weights.size() != expect || bias.size() != static_cast<std::size_t>(spec.n)) {
    throw Error(ErrorCode::kShapeMismatch, "conv parameter storage does not match spec");
  }
}

ConvParams ConvParams::zeros(const ConvSpec& spec) {
  ConvParams p;
  p.spec = spec;
  p.weights.assign(static_cast<std::size_t>(spec.volume() * spec.m * spec.n), Real(0));
  p.bias.assign(static_cast<std::size_t>(spec.n), Real(0));
  return p;
}

ConvParams ConvParams::uniform_init(const ConvSpec& spec, std::mt19937_64& rng) {
  ConvParams p = zeros(spec);
  const double bound = std::sqrt(3.0 / static_cast<double>(spec.volume() * spec.m));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& w : p.weights) w = static_cast<Real>(dist(rng));
  return p;
}

SparseGrid conv_forward(const SparseGrid& g, const RuleBook& rb, const ConvParams& p) {
  check_conv(g, rb, p);
  const auto& k = kernels::active<Real>();
  const std::size_t m = static_cast<std::size_t>(p.spec.m);
  const std::size_t n = static_cast<std::size_t>(p.spec.n);
  Matrix out(rb.output_sites->size(), n);

  std::vector<Real> a_buf(kChunk * m), c_buf(kChunk * n);
  for (std::size_t i = 0; i < rb.num_offsets(); ++i) {
    const auto& list = rb.rules[i];
    const Real* w = p.weight(i).data();
    for (std::size_t start = 0; start < list.size(); start += kChunk) {
      const std::size_t len = std::min(kChunk, list.size() - start);
      for (std::size_t j = 0; j < len; ++j) {
        auto src = g.features().row(static_cast<std::size_t>(list[start + j].in));
        std::copy(src.begin(), src.end(), a_buf.begin() + static_cast<std::ptrdiff_t>(j * m));
      }
      std::fill(c_buf.begin(), c_buf.begin() + static_cast<std::ptrdiff_t>(len * n), Real(0));
      k.gemm_nn(len, m, n, a_buf.data(), w, c_buf.data());
      for (std::size_t j = 0; j < len; ++j) {
        k.axpy(n, Real(1), c_buf.data() + j * n,
               out.row(static_cast<std::size_t>(list[start + j].out)).data());
      }
    }
  }
  for (std::size_t r = 0; r < out.rows(); ++r) k.axpy(n, Real(1), p.bias.data(), out.row(r).data());
  return SparseGrid(rb.output_sites, std::move(out));
}

SparseGrid conv_forward(const SparseGrid& g, const RuleBookPtr& rb, const ConvParams& p,
                        ConvTape* tape) {
  SparseGrid out = conv_forward(g, *rb, p);
  if (tape) {
    tape->input = g;
    tape->rulebook = rb;
  }
  return out;
}

ConvGrads conv_backward(const ConvTape& tape, const ConvParams& p, const Matrix& grad_out) {
  const RuleBook& rb = *tape.rulebook;
  const SparseGrid& in = tape.input;
  const std::size_t m = static_cast<std::size_t>(p.spec.m);
  const std::size_t n = static_cast<std::size_t>(p.spec.n);
  if (grad_out.rows() != rb.output_sites->size() || grad_out.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "conv grad_out must be a_out x n");
  }
  const auto& k = kernels::active<Real>();

  ConvGrads g;
  g.input = Matrix(in.active_count(), m);
  g.weights.assign(p.weights.size(), Real(0));
  g.bias.assign(n, Real(0));
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    k.axpy(n, Real(1), grad_out.row(r).data(), g.bias.data());
  }

  std::vector<Real> wt(m * n);
  std::vector<Real> a_buf(kChunk * m), g_buf(kChunk * n), t_buf(kChunk * m);
  for (std::size_t i = 0; i < rb.num_offsets(); ++i) {
    const auto& list = rb.rules[i];
    if (list.empty()) continue;
    auto w = p.weight(i);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < n; ++b) wt[b * m + a] = w[a * n + b];
    }
    Real* gw = g.weights.data() + i * m * n;
    for (std::size_t start = 0; start < list.size(); start += kChunk) {
      const std::size_t len = std::min(kChunk, list.size() - start);
      for (std::size_t j = 0; j < len; ++j) {
        const Rule& rule = list[start + j];
        auto src = in.features().row(static_cast<std::size_t>(rule.in));
        std::copy(src.begin(), src.end(), a_buf.begin() + static_cast<std::ptrdiff_t>(j * m));
        auto gsrc = grad_out.row(static_cast<std::size_t>(rule.out));
        std::copy(gsrc.begin(), gsrc.end(), g_buf.begin() + static_cast<std::ptrdiff_t>(j * n));
      }
      std::fill(t_buf.begin(), t_buf.begin() + static_cast<std::ptrdiff_t>(len * m), Real(0));
      k.gemm_nn(len, n, m, g_buf.data(), wt.data(), t_buf.data());
      for (std::size_t j = 0; j < len; ++j) {
        k.axpy(m, Real(1), t_buf.data() + j * m,
               g.input.row(static_cast<std::size_t>(list[start + j].in)).data());
      }
      k.gemm_tn(len, m, n, a_buf.data(), g_buf.data(), gw);
    }
  }
  return g;
}

}  // namespace subm
