#include "subm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace subm {

LossResult softmax_xent(const Matrix& logits, std::span<const int> labels) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != batch) {
    throw Error(ErrorCode::kShapeMismatch, "one label per logits row expected");
  }
  LossResult out;
  out.grad = Matrix(batch, classes);
  if (batch == 0) return out;
  double total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    auto z = logits.row(b);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (Real v : z) sum += std::exp(static_cast<double>(v) - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - static_cast<double>(z[static_cast<std::size_t>(y)]);
    auto g = out.grad.row(b);
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp(static_cast<double>(z[c]) - lse);
      if (c == static_cast<std::size_t>(y)) p -= 1.0;
      g[c] = static_cast<Real>(p / static_cast<double>(batch));
    }
  }
  out.loss = total / static_cast<double>(batch);
  return out;
}

void SgdConfig::validate() const {
  if (!(lr > 0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0)) throw Error(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
  if (!(decay > 0 && decay <= 1)) throw Error(ErrorCode::kInvalidArgument, "decay must be in (0, 1]");
}

void sgd_step(OptimizerState& state, std::span<const ParamRef> params) {
  auto& vel = state.velocity;
  if (vel.empty()) {
    for (const auto& p : params) vel.emplace_back(p.value.size(), Real(0));
  }
  if (vel.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state tracks a different parameter list");
  }
  const auto& cfg = state.config;
  const Real mu = static_cast<Real>(cfg.momentum);
  const Real lr = static_cast<Real>(cfg.lr);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const ParamRef& p = params[t];
    auto& v = vel[t];
    if (v.size() != p.value.size() || p.grad.size() != p.value.size()) {
      throw Error(ErrorCode::kShapeMismatch, "parameter " + p.name + " changed shape");
    }
    const Real wd = p.decay ? static_cast<Real>(cfg.weight_decay) : Real(0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Real g = p.grad[i] + wd * p.value[i];
      v[i] = mu * v[i] + g;
      p.value[i] -= lr * v[i];
    }
  }
}

SparseGrid make_batch(std::span<const Sample* const> samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyDataset, "cannot batch zero samples");
  const SparseGrid& first = samples.front()->grid;
  const std::size_t m = first.num_features();
  std::size_t rows = 0;
  for (const Sample* s : samples) {
    if (!(s->grid.shape() == first.shape()) || s->grid.num_features() != m) {
      throw Error(ErrorCode::kGeometryMismatch, "samples in one batch must share shape and planes");
    }
    rows += s->grid.active_count();
  }
  auto sites = std::make_shared<SiteMap>(first.shape(), static_cast<std::int32_t>(samples.size()));
  sites->reserve(rows);
  Matrix features(rows, m);
  std::size_t r = 0;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const SparseGrid& g = samples[b]->grid;
    for (std::size_t i = 0; i < g.active_count(); ++i, ++r) {
      Coordinate c = g.sites().coord(i);
      c.batch = static_cast<std::int32_t>(b);
      sites->insert(c);
      std::copy_n(g.features().row(i).data(), m, features.row(r).data());
    }
  }
  return SparseGrid(std::move(sites), std::move(features));
}

namespace {

// Consecutive index ranges of at most `batch`; a trailing singleton joins
// the previous range so batch statistics never see a lone sample.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch) {
  const auto step = static_cast<std::size_t>(std::max(batch, 1));
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += step) out.emplace_back(s, std::min(n, s + step));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<EpochStats> run_epochs(NetworkPlan& plan, const Dataset& train, OptimizerState& state,
                                   const TrainOptions& opts) {
  if (train.empty()) throw Error(ErrorCode::kEmptyDataset, "empty dataset");
  if (opts.epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  std::vector<EpochStats> history;
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (auto [lo, hi] : batch_ranges(order.size(), opts.batch)) {
      std::vector<const Sample*> members;
      std::vector<int> labels;
      for (std::size_t i = lo; i < hi; ++i) {
        members.push_back(&train.samples[order[i]]);
        labels.push_back(train.samples[order[i]].label);
      }
      plan.zero_grad();
      ForwardResult res = plan.forward(make_batch(members), {.training = true, .mode = opts.mode});
      LossResult loss = softmax_xent(res.logits, labels);
      plan.backward(loss.grad);
      auto params = plan.params();
      sgd_step(state, params);
      loss_sum += loss.loss * static_cast<double>(labels.size());
      for (std::size_t b = 0; b < labels.size(); ++b) {
        correct += argmax_row(res.logits, b) == static_cast<std::size_t>(labels[b]);
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = state.config.lr;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (opts.validation && !opts.validation->empty()) {
      st.val_acc = evaluate(plan, *opts.validation, opts.batch, opts.mode).accuracy;
    }
    st.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(st);
    state.config.lr *= state.config.decay;
    if (opts.on_epoch && !opts.on_epoch(st)) break;
  }
  return history;
}

EvalResult evaluate(NetworkPlan& plan, const Dataset& ds, int batch, ConvMode mode) {
  if (ds.empty()) throw Error(ErrorCode::kEmptyDataset, "empty dataset");
  const auto classes = static_cast<std::size_t>(plan.classes());
  if (classes == 0) throw Error(ErrorCode::kInvalidArgument, "plan has no classifier");
  EvalResult out;
  out.confusion.assign(classes, std::vector<std::int64_t>(classes, 0));
  std::size_t correct = 0;
  double loss_sum = 0;
  for (auto [lo, hi] : batch_ranges(ds.size(), batch)) {
    std::vector<const Sample*> members;
    std::vector<int> labels;
    for (std::size_t i = lo; i < hi; ++i) {
      members.push_back(&ds.samples[i]);
      labels.push_back(ds.samples[i].label);
    }
    ForwardResult res = plan.forward(make_batch(members), {.training = false, .mode = mode});
    out.warnings += res.warnings.size();
    loss_sum += softmax_xent(res.logits, labels).loss * static_cast<double>(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const std::size_t pred = argmax_row(res.logits, b);
      correct += pred == static_cast<std::size_t>(labels[b]);
      ++out.confusion[static_cast<std::size_t>(labels[b])][pred];
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  out.loss = loss_sum / static_cast<double>(ds.size());
  return out;
}

void write_history_csv(std::ostream& os, std::span<const EpochStats> history) {
  os << "epoch,lr,train_loss,train_acc,val_acc,wall_seconds\n";
  for (const auto& h : history) {
    os << h.epoch << ',' << h.lr << ',' << h.train_loss << ',' << h.train_acc << ',';
    if (h.val_acc >= 0) os << h.val_acc;
    os << ',' << h.wall_seconds << '\n';
  }
}

}  // namespace subm
