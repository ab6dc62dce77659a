#include "subm/kernels.hpp"
#include "subm/ops.hpp"

namespace subm {
namespace {

void check_pool(const SparseGrid& g, const RuleBook& rb, ConvKind kind) {
  if (rb.op_kind() != kind) {
    throw Error(ErrorCode::kShapeMismatch, std::string("expected a ") +
                                               std::string(conv_kind_name(kind)) + " rule book");
  }
  if (!rb.input_sites || rb.input_sites->size() != g.active_count()) {
    throw Error(ErrorCode::kStaleRuleBook, "pooling rule book built for a different active set");
  }
}

PoolTape make_tape(const RuleBookPtr& rb, const SparseGrid& g) {
  PoolTape t;
  t.rulebook = rb;
  t.input_rows = g.active_count();
  t.channels = g.num_features();
  return t;
}

void check_grad(const PoolTape& tape, const Matrix& grad_out) {
  if (grad_out.rows() != tape.rulebook->output_sites->size() || grad_out.cols() != tape.channels) {
    throw Error(ErrorCode::kShapeMismatch, "pool grad_out must be a_out x channels");
  }
}

}  // namespace

SparseGrid maxpool_forward(const SparseGrid& g, const RuleBookPtr& rb_ptr, PoolTape* tape) {
  const RuleBook& rb = *rb_ptr;
  check_pool(g, rb, ConvKind::MP);
  const std::size_t c = g.num_features();
  Matrix out(rb.output_sites->size(), c);  // the implicit zero vector
  std::vector<std::int32_t> argmax(out.size(), -1);
  for (const auto& list : rb.rules) {
    for (const Rule& r : list) {
      auto src = g.features().row(static_cast<std::size_t>(r.in));
      auto dst = out.row(static_cast<std::size_t>(r.out));
      std::int32_t* am = argmax.data() + static_cast<std::size_t>(r.out) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (src[ch] > dst[ch]) {
          dst[ch] = src[ch];
          am[ch] = r.in;
        }
      }
    }
  }
  if (tape) {
    *tape = make_tape(rb_ptr, g);
    tape->argmax = std::move(argmax);
  }
  return SparseGrid(rb.output_sites, std::move(out));
}

Matrix maxpool_backward(const PoolTape& tape, const Matrix& grad_out) {
  check_grad(tape, grad_out);
  const std::size_t c = tape.channels;
  Matrix grad_in(tape.input_rows, c);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::int32_t src = tape.argmax[r * c + ch];
      if (src >= 0) grad_in(static_cast<std::size_t>(src), ch) += grad_out(r, ch);
    }
  }
  return grad_in;
}

SparseGrid avgpool_forward(const SparseGrid& g, const RuleBookPtr& rb_ptr, PoolTape* tape) {
  const RuleBook& rb = *rb_ptr;
  check_pool(g, rb, ConvKind::AP);
  const auto& k = kernels::active<Real>();
  const std::size_t c = g.num_features();
  // Divisor is the full window volume f^d, not the number of active inputs.
  const Real scale = Real(1) / static_cast<Real>(rb.num_offsets());
  Matrix out(rb.output_sites->size(), c);
  for (const auto& list : rb.rules) {
    for (const Rule& r : list) {
      k.axpy(c, scale, g.features().row(static_cast<std::size_t>(r.in)).data(),
             out.row(static_cast<std::size_t>(r.out)).data());
    }
  }
  if (tape) *tape = make_tape(rb_ptr, g);
  return SparseGrid(rb.output_sites, std::move(out));
}

Matrix avgpool_backward(const PoolTape& tape, const Matrix& grad_out) {
  check_grad(tape, grad_out);
  const auto& k = kernels::active<Real>();
  const RuleBook& rb = *tape.rulebook;
  const Real scale = Real(1) / static_cast<Real>(rb.num_offsets());
  Matrix grad_in(tape.input_rows, tape.channels);
  for (const auto& list : rb.rules) {
    for (const Rule& r : list) {
      k.axpy(tape.channels, scale, grad_out.row(static_cast<std::size_t>(r.out)).data(),
             grad_in.row(static_cast<std::size_t>(r.in)).data());
    }
  }
  return grad_in;
}

}  // namespace subm
