#include <algorithm>

#include "subm/net.hpp"

namespace subm {

RuleBookPtr RuleBookCache::get(const SiteMapPtr& sites, const ConvSpec& spec) {
  Key key{sites.get(), spec.kind, spec.f, spec.s, spec.pad};
  if (auto it = books_.find(key); it != books_.end()) {
    ++hits_;
    return it->second;
  }
  auto rb = std::make_shared<const RuleBook>(build_rulebook(sites, spec));
  books_.emplace(key, rb);
  families_.insert(sites.get());
  ++builds_by_kind_[spec.kind];
  ++builds_;
  return rb;
}

std::size_t RuleBookCache::builds_of(ConvKind kind) const {
  auto it = builds_by_kind_.find(kind);
  return it == builds_by_kind_.end() ? 0 : it->second;
}

void RuleBookCache::clear() {
  books_.clear();
  families_.clear();
  builds_by_kind_.clear();
  builds_ = 0;
  hits_ = 0;
}

namespace {

RuleBookPtr fetch_book(ForwardContext& ctx, const SiteMapPtr& sites, const ConvSpec& spec) {
  if (ctx.cache) return ctx.cache->get(sites, spec);
  return std::make_shared<const RuleBook>(build_rulebook(sites, spec));
}

void accumulate(std::vector<Real>& dst, const std::vector<Real>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// --- ConvLayer -------------------------------------------------------------

ConvLayer::ConvLayer(std::string name, const ConvSpec& spec, std::mt19937_64& rng)
    : Layer(std::move(name)), params_(ConvParams::uniform_init((spec.validate(), spec), rng)) {
  grad_w_.assign(params_.weights.size(), Real(0));
  grad_b_.assign(params_.bias.size(), Real(0));
}

SparseGrid ConvLayer::forward(const SparseGrid& x, ForwardContext& ctx) {
  ConvSpec geometry = params_.spec;
  if (ctx.mode == ConvMode::kFull && geometry.kind == ConvKind::VSC) {
    geometry.kind = ConvKind::SC;
    geometry.pad = (geometry.f - 1) / 2;
  }
  if (x.dim() != geometry.d) {
    throw Error(ErrorCode::kGeometryMismatch,
                name() + ": expects d=" + std::to_string(geometry.d) + " input");
  }
  RuleBookPtr rb = fetch_book(ctx, x.site_map(), geometry);
  SparseGrid y = conv_forward(x, rb, params_, &tape_);

  if (ctx.ledger) {
    const auto m = static_cast<std::int64_t>(geometry.m);
    const auto n = static_cast<std::int64_t>(geometry.n);
    const GridShape& out_shape = rb->output_sites->shape();
    ctx.ledger->add(LedgerEntry{
        .layer = name(),
        .kind = std::string(conv_kind_name(geometry.kind)),
        .flops = count_flops(*rb, m, n),
        .hidden_states = count_hidden(*rb, n),
        .dense_flops = count_dense_flops(geometry.f, geometry.d, m, n, out_shape, x.batch_size()),
        .dense_hidden_states = count_dense_hidden(n, out_shape, x.batch_size()),
    });
  }
  return y;
}

Matrix ConvLayer::backward(const Matrix& grad_out) {
  ConvGrads g = conv_backward(tape_, params_, grad_out);
  accumulate(grad_w_, g.weights);
  accumulate(grad_b_, g.bias);
  return std::move(g.input);
}

void ConvLayer::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".weight", params_.weights, grad_w_, true});
  out.push_back({name() + ".bias", params_.bias, grad_b_, true});
}

// --- BatchNormLayer --------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, std::size_t planes)
    : Layer(std::move(name)), params_(BatchNormParams::identity(planes)) {
  grad_gamma_.assign(planes, Real(0));
  grad_beta_.assign(planes, Real(0));
}

SparseGrid BatchNormLayer::forward(const SparseGrid& x, ForwardContext& ctx) {
  return batchnorm_forward(x, params_, ctx.training, &tape_);
}

Matrix BatchNormLayer::backward(const Matrix& grad_out) {
  BatchNormGrads g = batchnorm_backward(tape_, params_, grad_out);
  accumulate(grad_gamma_, g.gamma);
  accumulate(grad_beta_, g.beta);
  return std::move(g.input);
}

void BatchNormLayer::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".gamma", params_.gamma, grad_gamma_, false});
  out.push_back({name() + ".beta", params_.beta, grad_beta_, false});
}

// --- ReluLayer -------------------------------------------------------------

SparseGrid ReluLayer::forward(const SparseGrid& x, ForwardContext&) {
  return relu_forward(x, &tape_);
}

Matrix ReluLayer::backward(const Matrix& grad_out) { return relu_backward(tape_, grad_out); }

// --- PoolLayer -------------------------------------------------------------

PoolLayer::PoolLayer(std::string name, ConvKind kind, int f, int s)
    : Layer(std::move(name)), kind_(kind), f_(f), s_(s) {
  if (kind != ConvKind::MP && kind != ConvKind::AP) {
    throw Error(ErrorCode::kInvalidArgument, "pool layer kind must be MP or AP");
  }
  if (f < 1 || s < 1) throw Error(ErrorCode::kInvalidArgument, "pool f and s must be >= 1");
}

SparseGrid PoolLayer::forward(const SparseGrid& x, ForwardContext& ctx) {
  ConvSpec spec{.kind = kind_, .m = static_cast<int>(x.num_features()),
                .n = static_cast<int>(x.num_features()), .f = f_, .s = s_, .d = x.dim()};
  RuleBookPtr rb = fetch_book(ctx, x.site_map(), spec);
  SparseGrid y = kind_ == ConvKind::MP ? maxpool_forward(x, rb, &tape_)
                                       : avgpool_forward(x, rb, &tape_);
  if (ctx.ledger) {
    const auto n = static_cast<std::int64_t>(x.num_features());
    const GridShape& out_shape = rb->output_sites->shape();
    ctx.ledger->add(LedgerEntry{
        .layer = name(),
        .kind = std::string(conv_kind_name(kind_)),
        .flops = 0,
        .hidden_states = count_hidden(*rb, n),
        .dense_flops = 0,
        .dense_hidden_states = count_dense_hidden(n, out_shape, x.batch_size()),
    });
  }
  return y;
}

Matrix PoolLayer::backward(const Matrix& grad_out) {
  return kind_ == ConvKind::MP ? maxpool_backward(tape_, grad_out)
                               : avgpool_backward(tape_, grad_out);
}

// --- Sequential ------------------------------------------------------------

Sequential::Sequential(std::string name, LayerList layers)
    : Layer(std::move(name)), layers_(std::move(layers)) {}

void Sequential::append(LayerList layers) {
  for (auto& l : layers) layers_.push_back(std::move(l));
}

SparseGrid Sequential::forward(const SparseGrid& x, ForwardContext& ctx) {
  SparseGrid h = x;
  for (auto& l : layers_) h = l->forward(h, ctx);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_params(std::vector<ParamRef>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  for (auto& l : layers_) l->visit(fn);
}

// --- ResidualBlock ---------------------------------------------------------

ResidualBlock::ResidualBlock(std::string name, std::unique_ptr<Sequential> trunk,
                             std::unique_ptr<Sequential> shortcut)
    : Layer(std::move(name)), trunk_(std::move(trunk)), shortcut_(std::move(shortcut)) {}

SparseGrid ResidualBlock::forward(const SparseGrid& x, ForwardContext& ctx) {
  trunk_out_ = trunk_->forward(x, ctx);
  shortcut_out_ = (shortcut_ && !shortcut_->empty()) ? shortcut_->forward(x, ctx) : x;
  return add_grids(trunk_out_, shortcut_out_);
}

Matrix ResidualBlock::backward(const Matrix& grad_out) {
  Matrix g = trunk_->backward(grad_out);
  if (shortcut_ && !shortcut_->empty()) {
    Matrix s = shortcut_->backward(grad_out);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += s.data()[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += grad_out.data()[i];
  }
  return g;
}

void ResidualBlock::collect_params(std::vector<ParamRef>& out) {
  trunk_->collect_params(out);
  if (shortcut_) shortcut_->collect_params(out);
}

void ResidualBlock::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  trunk_->visit(fn);
  if (shortcut_) shortcut_->visit(fn);
}

// --- DenseBlock ------------------------------------------------------------

DenseBlock::DenseBlock(std::string name, std::vector<std::unique_ptr<Sequential>> units)
    : Layer(std::move(name)), units_(std::move(units)) {}

SparseGrid DenseBlock::forward(const SparseGrid& x, ForwardContext& ctx) {
  widths_.clear();
  SparseGrid state = x;
  for (auto& u : units_) {
    widths_.push_back(state.num_features());
    state = concat_grids(state, u->forward(state, ctx));
  }
  return state;
}

// The gradient reaching the running state after unit k splits into the part
// for its input columns and the part for the unit's own output; the latter
// flows back through the unit and lands on the same input columns.
Matrix DenseBlock::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (std::size_t k = units_.size(); k-- > 0;) {
    Matrix g_in, g_unit;
    hsplit(g, widths_[k], g_in, g_unit);
    Matrix through = units_[k]->backward(g_unit);
    for (std::size_t i = 0; i < g_in.size(); ++i) g_in.data()[i] += through.data()[i];
    g = std::move(g_in);
  }
  return g;
}

void DenseBlock::collect_params(std::vector<ParamRef>& out) {
  for (auto& u : units_) u->collect_params(out);
}

void DenseBlock::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  for (auto& u : units_) u->visit(fn);
}

}  // namespace subm
