#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "subm/data.hpp"
#include "subm/net.hpp"

namespace subm {

struct LossResult {
  double loss = 0;
  Matrix grad;  // d(loss)/d(logits), batch x C
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_xent(const Matrix& logits, std::span<const int> labels);

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double decay = 0.95;  // lr multiplier applied after every epoch

  void validate() const;
};

/// Momentum buffers, one per parameter tensor, created lazily on the first
/// step and shape-checked afterwards.
struct OptimizerState {
  SgdConfig config;
  std::vector<std::vector<Real>> velocity;

  explicit OptimizerState(SgdConfig c = {}) : config(c) { config.validate(); }
};

// g' = g + wd * p (when the tensor decays); v = mu * v + g'; p -= lr * v.
void sgd_step(OptimizerState& state, std::span<const ParamRef> params);

/// Merges batch-size-1 samples into one grid with batch indices 0..k-1.
SparseGrid make_batch(std::span<const Sample* const> samples);

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;  // running accuracy of the training passes
  double val_acc = -1;   // -1 when no validation set is given
  double wall_seconds = 0;
};

struct TrainOptions {
  int epochs = 1;
  int batch = 100;
  std::uint64_t seed = 1;
  ConvMode mode = ConvMode::kSubmanifold;
  const Dataset* validation = nullptr;
  // Called after every epoch; returning false stops training early.
  std::function<bool(const EpochStats&)> on_epoch;
};

std::vector<EpochStats> run_epochs(NetworkPlan& plan, const Dataset& train, OptimizerState& state,
                                   const TrainOptions& opts);

struct EvalResult {
  double accuracy = 0;
  double loss = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::size_t warnings = 0;
};

EvalResult evaluate(NetworkPlan& plan, const Dataset& ds, int batch = 100,
                    ConvMode mode = ConvMode::kSubmanifold);

void write_history_csv(std::ostream& os, std::span<const EpochStats> history);

}  // namespace subm
