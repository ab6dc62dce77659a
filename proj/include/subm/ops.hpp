#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "subm/grid.hpp"
#include "subm/matrix.hpp"
#include "subm/rulebook.hpp"

namespace subm {

/// f^d weight matrices W^i (each m x n, row-major, offset-major) plus bias.
struct ConvParams {
  ConvSpec spec;
  std::vector<Real> weights;
  std::vector<Real> bias;

  static ConvParams zeros(const ConvSpec& spec);
  // Uniform in +-sqrt(3 / (f^d m)), bias zero.
  static ConvParams uniform_init(const ConvSpec& spec, std::mt19937_64& rng);

  std::size_t matrix_size() const { return static_cast<std::size_t>(spec.m * spec.n); }
  std::span<Real> weight(std::size_t offset) {
    return {weights.data() + offset * matrix_size(), matrix_size()};
  }
  std::span<const Real> weight(std::size_t offset) const {
    return {weights.data() + offset * matrix_size(), matrix_size()};
  }
  void validate() const;
};

struct ConvGrads {
  Matrix input;
  std::vector<Real> weights;
  std::vector<Real> bias;
};

// Saved forward state. Each holds exactly what its backward needs.
struct ConvTape {
  SparseGrid input;
  RuleBookPtr rulebook;
};

struct PoolTape {
  RuleBookPtr rulebook;
  std::size_t input_rows = 0;
  std::size_t channels = 0;
  // MP only: per output row and channel, the winning input row or -1 when
  // the implicit zero won.
  std::vector<std::int32_t> argmax;
};

struct BatchNormParams {
  std::vector<Real> gamma, beta;
  std::vector<Real> running_mean, running_var;
  Real eps = Real(1e-5);
  Real momentum = Real(0.9);

  static BatchNormParams identity(std::size_t n);
  std::size_t size() const { return gamma.size(); }
};

struct BatchNormTape {
  Matrix normalized;  // x-hat
  std::vector<Real> inv_std;
  bool training = true;
};

struct BatchNormGrads {
  Matrix input;
  std::vector<Real> gamma, beta;
};

struct ReluTape {
  Matrix input;
};

struct HeadTape {
  Matrix features;                   // one row per batch sample (zeros when missing)
  std::vector<std::int32_t> sample_row;  // grid row per sample, -1 when missing
  std::size_t input_rows = 0;
};

struct HeadGrads {
  Matrix input;
  std::vector<Real> weights;
  std::vector<Real> bias;
};

// --- convolution (SC, VSC, and DC through an inverted book) ----------------

SparseGrid conv_forward(const SparseGrid& g, const RuleBookPtr& rb, const ConvParams& p,
                        ConvTape* tape = nullptr);
SparseGrid conv_forward(const SparseGrid& g, const RuleBook& rb, const ConvParams& p);
ConvGrads conv_backward(const ConvTape& tape, const ConvParams& p, const Matrix& grad_out);

// --- pooling ---------------------------------------------------------------

SparseGrid maxpool_forward(const SparseGrid& g, const RuleBookPtr& rb, PoolTape* tape = nullptr);
Matrix maxpool_backward(const PoolTape& tape, const Matrix& grad_out);

SparseGrid avgpool_forward(const SparseGrid& g, const RuleBookPtr& rb, PoolTape* tape = nullptr);
Matrix avgpool_backward(const PoolTape& tape, const Matrix& grad_out);

// --- batch norm over active sites ------------------------------------------

SparseGrid batchnorm_forward(const SparseGrid& g, BatchNormParams& p, bool training,
                             BatchNormTape* tape = nullptr);
BatchNormGrads batchnorm_backward(const BatchNormTape& tape, const BatchNormParams& p,
                                  const Matrix& grad_out);

// --- ReLU on active rows ---------------------------------------------------

SparseGrid relu_forward(const SparseGrid& g, ReluTape* tape = nullptr);
Matrix relu_backward(const ReluTape& tape, const Matrix& grad_out);

// --- structural combinators (active set must be shared) --------------------

SparseGrid add_grids(const SparseGrid& a, const SparseGrid& b);
SparseGrid concat_grids(const SparseGrid& a, const SparseGrid& b);

// --- classifier head -------------------------------------------------------

/// logits[b] = features[row(b)] * W + bias, one active site per sample.
/// Samples without an active site get a zero feature row; their batch
/// indices are appended to `missing` when given.
Matrix classifier_forward(const SparseGrid& g, std::span<const Real> weights,
                          std::span<const Real> bias, std::size_t classes,
                          HeadTape* tape = nullptr, std::vector<std::int32_t>* missing = nullptr);
HeadGrads classifier_backward(const HeadTape& tape, std::span<const Real> weights,
                              std::size_t classes, const Matrix& grad_logits);

}  // namespace subm
