#include <cmath>

#include "subm/kernels.hpp"
#include "subm/ops.hpp"

namespace subm {

// ---------------------------------------------------------------------------
// Batch normalization over the active rows of the whole batch.

BatchNormParams BatchNormParams::identity(std::size_t n) {
  BatchNormParams p;
  p.gamma.assign(n, Real(1));
  p.beta.assign(n, Real(0));
  p.running_mean.assign(n, Real(0));
  p.running_var.assign(n, Real(1));
  return p;
}

SparseGrid batchnorm_forward(const SparseGrid& g, BatchNormParams& p, bool training,
                             BatchNormTape* tape) {
  const std::size_t a = g.active_count();
  const std::size_t n = g.num_features();
  if (p.size() != n) throw Error(ErrorCode::kShapeMismatch, "batch norm plane count");
  const Matrix& x = g.features();

  std::vector<Real> mean(n, Real(0)), var(n, Real(0));
  if (training) {
    if (a < 2) {
      throw Error(ErrorCode::kTooFewActiveSites,
                  "batch norm needs >= 2 active sites in training, got " + std::to_string(a));
    }
    for (std::size_t r = 0; r < a; ++r) {
      for (std::size_t c = 0; c < n; ++c) mean[c] += x(r, c);
    }
    for (auto& v : mean) v /= static_cast<Real>(a);
    for (std::size_t r = 0; r < a; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        Real dlt = x(r, c) - mean[c];
        var[c] += dlt * dlt;
      }
    }
    for (auto& v : var) v /= static_cast<Real>(a);
    const Real unbias = static_cast<Real>(a) / static_cast<Real>(a - 1);
    for (std::size_t c = 0; c < n; ++c) {
      p.running_mean[c] = p.momentum * p.running_mean[c] + (1 - p.momentum) * mean[c];
      p.running_var[c] = p.momentum * p.running_var[c] + (1 - p.momentum) * var[c] * unbias;
    }
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }

  std::vector<Real> inv_std(n);
  for (std::size_t c = 0; c < n; ++c) inv_std[c] = Real(1) / std::sqrt(var[c] + p.eps);

  Matrix xhat(a, n), y(a, n);
  for (std::size_t r = 0; r < a; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      Real h = (x(r, c) - mean[c]) * inv_std[c];
      xhat(r, c) = h;
      y(r, c) = p.gamma[c] * h + p.beta[c];
    }
  }
  if (tape) {
    tape->normalized = std::move(xhat);
    tape->inv_std = std::move(inv_std);
    tape->training = training;
  }
  return g.with_features(std::move(y));
}

BatchNormGrads batchnorm_backward(const BatchNormTape& tape, const BatchNormParams& p,
                                  const Matrix& grad_out) {
  const Matrix& xhat = tape.normalized;
  const std::size_t a = xhat.rows(), n = xhat.cols();
  if (grad_out.rows() != a || grad_out.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "batch norm grad_out shape");
  }
  BatchNormGrads g;
  g.gamma.assign(n, Real(0));
  g.beta.assign(n, Real(0));
  for (std::size_t r = 0; r < a; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      g.beta[c] += grad_out(r, c);
      g.gamma[c] += grad_out(r, c) * xhat(r, c);
    }
  }
  g.input = Matrix(a, n);
  if (!tape.training) {
    for (std::size_t r = 0; r < a; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        g.input(r, c) = p.gamma[c] * tape.inv_std[c] * grad_out(r, c);
      }
    }
    return g;
  }
  const Real inv_a = Real(1) / static_cast<Real>(a);
  for (std::size_t r = 0; r < a; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      g.input(r, c) = p.gamma[c] * tape.inv_std[c] * inv_a *
                      (static_cast<Real>(a) * grad_out(r, c) - g.beta[c] - xhat(r, c) * g.gamma[c]);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ReLU. Activity is structural: a row whose features all clamp to zero is
// still an active site.

SparseGrid relu_forward(const SparseGrid& g, ReluTape* tape) {
  const auto& k = kernels::active<Real>();
  Matrix y(g.active_count(), g.num_features());
  k.relu(y.size(), g.features().data(), y.data());
  if (tape) tape->input = g.features();
  return g.with_features(std::move(y));
}

Matrix relu_backward(const ReluTape& tape, const Matrix& grad_out) {
  if (grad_out.rows() != tape.input.rows() || grad_out.cols() != tape.input.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "relu grad_out shape");
  }
  const auto& k = kernels::active<Real>();
  Matrix dx(grad_out.rows(), grad_out.cols());
  k.relu_backward(dx.size(), tape.input.data(), grad_out.data(), dx.data());
  return dx;
}

// ---------------------------------------------------------------------------
// Residual sum and dense concatenation.

namespace {
void require_same_sites(const SparseGrid& a, const SparseGrid& b, const char* what) {
  if (!a.sites().same_sites(b.sites())) {
    throw Error(ErrorCode::kActiveSetMismatch, std::string(what) + " needs identical active sets");
  }
}
}  // namespace

SparseGrid add_grids(const SparseGrid& a, const SparseGrid& b) {
  require_same_sites(a, b, "residual addition");
  if (a.num_features() != b.num_features()) {
    throw Error(ErrorCode::kPlaneMismatch, "residual addition plane counts differ");
  }
  Matrix y = a.features();
  kernels::active<Real>().axpy(y.size(), Real(1), b.features().data(), y.data());
  return a.with_features(std::move(y));
}

SparseGrid concat_grids(const SparseGrid& a, const SparseGrid& b) {
  require_same_sites(a, b, "concatenation");
  return a.with_features(hconcat(a.features(), b.features()));
}

// ---------------------------------------------------------------------------
// Classifier head.

Matrix classifier_forward(const SparseGrid& g, std::span<const Real> weights,
                          std::span<const Real> bias, std::size_t classes, HeadTape* tape,
                          std::vector<std::int32_t>* missing) {
  const std::size_t m = g.num_features();
  if (weights.size() != m * classes || bias.size() != classes) {
    throw Error(ErrorCode::kShapeMismatch, "classifier parameters do not match m x C");
  }
  const auto batches = static_cast<std::size_t>(g.batch_size());
  std::vector<std::int32_t> sample_row(batches, -1);
  for (std::size_t r = 0; r < g.active_count(); ++r) {
    auto b = static_cast<std::size_t>(g.sites().coord(r).batch);
    if (sample_row[b] != -1) {
      throw Error(ErrorCode::kMultipleSites,
                  "sample " + std::to_string(b) + " has more than one active site at the head");
    }
    sample_row[b] = static_cast<std::int32_t>(r);
  }
  Matrix feats(batches, m);
  for (std::size_t b = 0; b < batches; ++b) {
    if (sample_row[b] < 0) {
      if (missing) missing->push_back(static_cast<std::int32_t>(b));
      continue;
    }
    auto src = g.features().row(static_cast<std::size_t>(sample_row[b]));
    std::copy(src.begin(), src.end(), feats.row(b).begin());
  }
  const auto& k = kernels::active<Real>();
  Matrix logits(batches, classes);
  for (std::size_t b = 0; b < batches; ++b) {
    std::copy(bias.begin(), bias.end(), logits.row(b).begin());
  }
  k.gemm_nn(batches, m, classes, feats.data(), weights.data(), logits.data());
  if (tape) {
    tape->features = std::move(feats);
    tape->sample_row = std::move(sample_row);
    tape->input_rows = g.active_count();
  }
  return logits;
}

HeadGrads classifier_backward(const HeadTape& tape, std::span<const Real> weights,
                              std::size_t classes, const Matrix& grad_logits) {
  const std::size_t batches = tape.features.rows();
  const std::size_t m = tape.features.cols();
  if (grad_logits.rows() != batches || grad_logits.cols() != classes) {
    throw Error(ErrorCode::kShapeMismatch, "grad_logits must be batch x C");
  }
  const auto& k = kernels::active<Real>();
  HeadGrads g;
  g.weights.assign(m * classes, Real(0));
  g.bias.assign(classes, Real(0));
  k.gemm_tn(batches, m, classes, tape.features.data(), grad_logits.data(), g.weights.data());
  for (std::size_t b = 0; b < batches; ++b) {
    k.axpy(classes, Real(1), grad_logits.row(b).data(), g.bias.data());
  }
  std::vector<Real> wt(m * classes);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < classes; ++c) wt[c * m + i] = weights[i * classes + c];
  }
  g.input = Matrix(tape.input_rows, m);
  for (std::size_t b = 0; b < batches; ++b) {
    if (tape.sample_row[b] < 0) continue;
    k.gemm_nn(1, classes, m, grad_logits.row(b).data(), wt.data(),
              g.input.row(static_cast<std::size_t>(tape.sample_row[b])).data());
  }
  return g;
}

}  // namespace subm
