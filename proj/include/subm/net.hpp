#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "subm/cost.hpp"
#include "subm/grid.hpp"
#include "subm/ops.hpp"
#include "subm/rulebook.hpp"

namespace subm {

// ---------------------------------------------------------------------------
// Rule-book cache

/// Books keyed by (input site table, operator geometry). Because VSC output
/// shares its input's site table, consecutive VSC layers at one resolution
/// resolve to the same book until a pooling or strided layer produces a new
/// table. The cache holds its site tables alive, so keys cannot be recycled.
class RuleBookCache {
 public:
  RuleBookPtr get(const SiteMapPtr& sites, const ConvSpec& spec);

  std::size_t builds() const { return builds_; }
  std::size_t hits() const { return hits_; }
  std::size_t builds_of(ConvKind kind) const;
  // Distinct input site tables that books were built on.
  std::size_t families() const { return families_.size(); }
  void clear();

 private:
  using Key = std::tuple<const SiteMap*, ConvKind, int, int, int>;
  std::map<Key, RuleBookPtr> books_;
  std::set<const SiteMap*> families_;
  std::map<ConvKind, std::size_t> builds_by_kind_;
  std::size_t builds_ = 0;
  std::size_t hits_ = 0;
};

// ---------------------------------------------------------------------------
// Layers

/// kSubmanifold runs the plan as built. kFull replaces every VSC by a padded,
/// dilating SC of the same size (regular sparse convolution semantics), used
/// for cost comparisons.
enum class ConvMode { kSubmanifold, kFull };

struct ForwardContext {
  bool training = false;
  ConvMode mode = ConvMode::kSubmanifold;
  RuleBookCache* cache = nullptr;
  CostLedger* ledger = nullptr;
};

struct ParamRef {
  std::string name;
  std::span<Real> value;
  std::span<Real> grad;
  bool decay = true;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view type() const = 0;

  virtual SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) = 0;
  // Gradient w.r.t. the input of the most recent forward; parameter
  // gradients accumulate into the layer's grad buffers.
  virtual Matrix backward(const Matrix& grad_out) = 0;

  virtual void collect_params(std::vector<ParamRef>&) {}
  // Depth-first visit of this layer and any children.
  virtual void visit(const std::function<void(Layer&)>& fn) { fn(*this); }

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;
using LayerList = std::vector<LayerPtr>;

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::string name, const ConvSpec& spec, std::mt19937_64& rng);

  std::string_view type() const override { return "conv"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;

  const ConvSpec& spec() const { return params_.spec; }
  ConvParams& params() { return params_; }
  const ConvParams& params() const { return params_; }
  // Book used by the last forward.
  const RuleBookPtr& last_rulebook() const { return tape_.rulebook; }

 private:
  ConvParams params_;
  std::vector<Real> grad_w_, grad_b_;
  ConvTape tape_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::size_t planes);

  std::string_view type() const override { return "bn"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;

  BatchNormParams& params() { return params_; }
  const BatchNormParams& params() const { return params_; }

 private:
  BatchNormParams params_;
  std::vector<Real> grad_gamma_, grad_beta_;
  BatchNormTape tape_;
};

class ReluLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string_view type() const override { return "relu"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  ReluTape tape_;
};

class PoolLayer final : public Layer {
 public:
  PoolLayer(std::string name, ConvKind kind, int f, int s);

  std::string_view type() const override { return kind_ == ConvKind::MP ? "mp" : "ap"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  ConvKind kind() const { return kind_; }
  int f() const { return f_; }
  int s() const { return s_; }

 private:
  ConvKind kind_;
  int f_, s_;
  PoolTape tape_;
};

class Sequential final : public Layer {
 public:
  explicit Sequential(std::string name, LayerList layers = {});

  std::string_view type() const override { return "seq"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void visit(const std::function<void(Layer&)>& fn) override;

  void append(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  void append(LayerList layers);
  const LayerList& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  LayerList layers_;
};

/// trunk(x) + shortcut(x); an empty shortcut is the identity. Both branches
/// must end on the same active-site table.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::string name, std::unique_ptr<Sequential> trunk,
                std::unique_ptr<Sequential> shortcut);

  std::string_view type() const override { return "residual"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void visit(const std::function<void(Layer&)>& fn) override;

  const Sequential& trunk() const { return *trunk_; }
  const Sequential* shortcut() const { return shortcut_.get(); }
  // Outputs of the two branches on the last forward.
  const SparseGrid& last_trunk_output() const { return trunk_out_; }
  const SparseGrid& last_shortcut_output() const { return shortcut_out_; }

 private:
  std::unique_ptr<Sequential> trunk_, shortcut_;
  SparseGrid trunk_out_, shortcut_out_;
};

/// Each unit sees the concatenation of the block input and all previous
/// unit outputs; its own output is appended column-wise.
class DenseBlock final : public Layer {
 public:
  DenseBlock(std::string name, std::vector<std::unique_ptr<Sequential>> units);

  std::string_view type() const override { return "dense"; }
  SparseGrid forward(const SparseGrid& x, ForwardContext& ctx) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void visit(const std::function<void(Layer&)>& fn) override;

 private:
  std::vector<std::unique_ptr<Sequential>> units_;
  std::vector<std::size_t> widths_;  // input width of each unit on last forward
};

// ---------------------------------------------------------------------------
// Block configuration and builders

enum class BlockKind {
  kVgg,
  kResNetSame,
  kResNetDown,
  kDenseSame,
  kDenseDown,  // transition
  kConv,       // single VSC/SC + BN + ReLU
  kPool,
  kBnRelu,
};

struct BlockConfig {
  BlockKind kind = BlockKind::kVgg;
  int n_in = 0;
  int n_out = 0;
  int growth = 0;         // dense: planes added per unit
  int units = 2;          // dense: number of BC units
  double compress = 1.0;  // transition: output planes = ceil(compress * n_in)
  ConvKind conv = ConvKind::VSC;  // kConv: VSC or SC; kPool: MP or AP
  int f = 3;
  int s = 1;
  int pool_f = 2;  // vgg / transition pooling; 0 disables the vgg pool
  int pool_s = 2;

  void validate() const;
};

struct InputSpec {
  int dim = 2;
  std::int32_t size = 1;
  int planes = 1;
};

/// Parsed architecture file.
struct ArchConfig {
  std::optional<InputSpec> input;
  std::vector<BlockConfig> blocks;
  int classes = 0;  // 0: no classifier head

  int input_planes() const;
  int output_planes() const;
};

ArchConfig parse_arch(std::istream& is);
ArchConfig parse_arch_string(const std::string& text);
ArchConfig load_arch_file(const std::string& path);
// Canonical text form; parse_arch_string(format_arch(a)) reproduces `a`.
std::string format_arch(const ArchConfig& arch);

// Builders return the layer list of one block. `prefix` names its layers.
LayerList build_vgg_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                          std::mt19937_64& rng);
LayerList build_resnet_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                             std::mt19937_64& rng);
LayerList build_densenet_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                               std::mt19937_64& rng);
LayerList build_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                      std::mt19937_64& rng);
// Plane count a block emits for a given input plane count.
int block_out_planes(const BlockConfig& cfg);
// Spatial shape a block emits; throws IndivisibleExtent / InvalidArgument
// when a strided stage does not tile the input extent.
GridShape block_out_shape(const BlockConfig& cfg, const GridShape& in);

// ---------------------------------------------------------------------------
// Network plan

struct ForwardOptions {
  bool training = false;
  ConvMode mode = ConvMode::kSubmanifold;
};

struct ForwardResult {
  Matrix logits;  // batch x classes (empty when the plan has no head)
  SparseGrid features;  // body output
  CostLedger ledger;
  std::vector<std::string> warnings;
};

class NetworkPlan {
 public:
  NetworkPlan(ArchConfig arch, std::uint64_t seed);
  NetworkPlan(NetworkPlan&&) = default;
  NetworkPlan& operator=(NetworkPlan&&) = default;

  ForwardResult forward(const SparseGrid& g, const ForwardOptions& opts = {});
  // Backpropagates d(loss)/d(logits) through the last forward, accumulating
  // into parameter gradients.
  void backward(const Matrix& grad_logits);

  std::vector<ParamRef> params();
  void zero_grad();

  const ArchConfig& arch() const { return arch_; }
  int classes() const { return arch_.classes; }
  Sequential& body() { return *body_; }
  const RuleBookCache& cache() const { return cache_; }

  std::vector<Real>& head_weights() { return head_w_; }
  std::vector<Real>& head_bias() { return head_b_; }

 private:
  ArchConfig arch_;
  std::unique_ptr<Sequential> body_;
  int head_planes_ = 0;
  std::vector<Real> head_w_, head_b_, head_gw_, head_gb_;
  HeadTape head_tape_;
  RuleBookCache cache_;
};

// Versioned text checkpoint: embedded architecture followed by every
// parameter tensor in layer order.
void save_checkpoint(NetworkPlan& plan, std::ostream& os);
void save_checkpoint(NetworkPlan& plan, const std::string& path);
NetworkPlan load_checkpoint(std::istream& is);
NetworkPlan load_checkpoint(const std::string& path);

}  // namespace subm
