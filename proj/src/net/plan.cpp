#include <cmath>

#include "subm/net.hpp"

namespace subm {

NetworkPlan::NetworkPlan(ArchConfig arch, std::uint64_t seed)
    : arch_(std::move(arch)), body_(std::make_unique<Sequential>("body")) {
  std::mt19937_64 rng(seed);
  const int dim = arch_.input ? arch_.input->dim : 2;
  std::optional<GridShape> shape;
  if (arch_.input) {
    GridShape s;
    s.dim = dim;
    for (int k = 0; k < dim; ++k) s.size[static_cast<std::size_t>(k)] = arch_.input->size;
    shape = s;
  }

  int planes = arch_.input_planes();
  for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
    const BlockConfig& b = arch_.blocks[i];
    if (b.n_in != planes) {
      throw Error(ErrorCode::kPlaneMismatch, "block " + std::to_string(i) + " expects " +
                                                 std::to_string(b.n_in) + " planes, gets " +
                                                 std::to_string(planes));
    }
    if (shape) shape = block_out_shape(b, *shape);
    body_->append(build_block(b, dim, "b" + std::to_string(i), rng));
    planes = block_out_planes(b);
  }

  head_planes_ = planes;
  if (arch_.classes > 0) {
    const auto size = static_cast<std::size_t>(head_planes_ * arch_.classes);
    const double bound = std::sqrt(3.0 / head_planes_);
    std::uniform_real_distribution<double> dist(-bound, bound);
    head_w_.resize(size);
    for (Real& w : head_w_) w = static_cast<Real>(dist(rng));
    head_b_.assign(static_cast<std::size_t>(arch_.classes), Real(0));
    head_gw_.assign(head_w_.size(), Real(0));
    head_gb_.assign(head_b_.size(), Real(0));
  }
}

ForwardResult NetworkPlan::forward(const SparseGrid& g, const ForwardOptions& opts) {
  if (arch_.input) {
    const auto& in = *arch_.input;
    bool ok = g.dim() == in.dim && g.num_features() == static_cast<std::size_t>(in.planes);
    for (int k = 0; ok && k < in.dim; ++k) ok = g.shape().size[static_cast<std::size_t>(k)] == in.size;
    if (!ok) {
      throw Error(ErrorCode::kGeometryMismatch,
                  "input grid does not match the plan's declared d/size/m");
    }
  } else if (static_cast<int>(g.num_features()) != arch_.input_planes()) {
    throw Error(ErrorCode::kGeometryMismatch, "input plane count does not match the plan");
  }

  ForwardResult res;
  cache_.clear();
  ForwardContext ctx{opts.training, opts.mode, &cache_, &res.ledger};
  res.features = body_->forward(g, ctx);

  if (arch_.classes > 0) {
    std::vector<std::int32_t> missing;
    res.logits = classifier_forward(res.features, head_w_, head_b_,
                                    static_cast<std::size_t>(arch_.classes), &head_tape_, &missing);
    for (auto b : missing) {
      res.warnings.push_back("sample " + std::to_string(b) +
                             " has no active site at the classifier; logits use zero features");
    }
  }
  return res;
}

void NetworkPlan::backward(const Matrix& grad_logits) {
  if (arch_.classes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "plan has no classifier to backpropagate from");
  }
  HeadGrads hg = classifier_backward(head_tape_, head_w_, static_cast<std::size_t>(arch_.classes),
                                     grad_logits);
  for (std::size_t i = 0; i < head_gw_.size(); ++i) head_gw_[i] += hg.weights[i];
  for (std::size_t i = 0; i < head_gb_.size(); ++i) head_gb_[i] += hg.bias[i];
  body_->backward(hg.input);
}

std::vector<ParamRef> NetworkPlan::params() {
  std::vector<ParamRef> out;
  body_->collect_params(out);
  if (arch_.classes > 0) {
    out.push_back({"head.weight", head_w_, head_gw_, true});
    out.push_back({"head.bias", head_b_, head_gb_, true});
  }
  return out;
}

void NetworkPlan::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), Real(0));
}

}  // namespace subm
