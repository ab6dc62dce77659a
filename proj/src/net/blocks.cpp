#include <algorithm>
#include <cmath>

#include "subm/net.hpp"

namespace subm {
namespace {

ConvSpec conv_spec(ConvKind kind, int m, int n, int f, int s, int d) {
  return ConvSpec{.kind = kind, .m = m, .n = n, .f = f, .s = s, .d = d};
}

void add_conv_bn_relu(LayerList& out, const std::string& name, const ConvSpec& spec,
                      std::mt19937_64& rng) {
  out.push_back(std::make_unique<ConvLayer>(name, spec, rng));
  out.push_back(std::make_unique<BatchNormLayer>(name + ".bn", static_cast<std::size_t>(spec.n)));
  out.push_back(std::make_unique<ReluLayer>(name + ".relu"));
}

void add_bn_relu(LayerList& out, const std::string& name, int planes) {
  out.push_back(std::make_unique<BatchNormLayer>(name + ".bn", static_cast<std::size_t>(planes)));
  out.push_back(std::make_unique<ReluLayer>(name + ".relu"));
}

int transition_planes(const BlockConfig& cfg) {
  return std::max(1, static_cast<int>(std::ceil(cfg.compress * cfg.n_in - 1e-9)));
}

void require(BlockKind want, const BlockConfig& cfg, const char* builder) {
  if (cfg.kind != want) {
    throw Error(ErrorCode::kInvalidArgument, std::string(builder) + " got the wrong block kind");
  }
}

}  // namespace

void BlockConfig::validate() const {
  if (n_in < 1) throw Error(ErrorCode::kPlaneMismatch, "block input planes must be >= 1");
  switch (kind) {
    case BlockKind::kVgg:
    case BlockKind::kResNetSame:
    case BlockKind::kResNetDown:
    case BlockKind::kConv:
      if (n_out < 1) throw Error(ErrorCode::kPlaneMismatch, "block output planes must be >= 1");
      break;
    case BlockKind::kDenseSame:
      if (growth < 1) throw Error(ErrorCode::kInvalidArgument, "dense growth must be > 0");
      if (units < 1) throw Error(ErrorCode::kInvalidArgument, "dense unit count must be > 0");
      break;
    case BlockKind::kDenseDown:
      if (!(compress > 0.0 && compress <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "transition compression must be in (0, 1]");
      }
      break;
    case BlockKind::kPool:
      if (conv != ConvKind::MP && conv != ConvKind::AP) {
        throw Error(ErrorCode::kInvalidArgument, "pool block must be mp or ap");
      }
      break;
    case BlockKind::kBnRelu:
      break;
  }
  if (kind == BlockKind::kConv && conv != ConvKind::VSC && conv != ConvKind::SC) {
    throw Error(ErrorCode::kInvalidArgument, "conv block must be vsc or sc");
  }
}

int block_out_planes(const BlockConfig& cfg) {
  switch (cfg.kind) {
    case BlockKind::kVgg:
    case BlockKind::kResNetSame:
    case BlockKind::kResNetDown:
    case BlockKind::kConv:
      return cfg.n_out;
    case BlockKind::kDenseSame:
      return cfg.n_in + cfg.units * cfg.growth;
    case BlockKind::kDenseDown:
      return transition_planes(cfg);
    case BlockKind::kPool:
    case BlockKind::kBnRelu:
      return cfg.n_in;
  }
  return cfg.n_in;
}

GridShape block_out_shape(const BlockConfig& cfg, const GridShape& in) {
  auto strided = [&](int f, int s) {
    GridShape out = in;
    for (int k = 0; k < in.dim; ++k) {
      auto& l = out.size[static_cast<std::size_t>(k)];
      l = output_extent(l, f, s);
    }
    return out;
  };
  switch (cfg.kind) {
    case BlockKind::kVgg:
      return cfg.pool_f > 0 ? strided(cfg.pool_f, cfg.pool_s) : in;
    case BlockKind::kResNetDown:
      return strided(3, 2);
    case BlockKind::kDenseDown:
      return strided(cfg.pool_f, cfg.pool_s);
    case BlockKind::kConv:
      return cfg.conv == ConvKind::SC ? strided(cfg.f, cfg.s) : in;
    case BlockKind::kPool:
      return strided(cfg.f, cfg.s);
    case BlockKind::kResNetSame:
    case BlockKind::kDenseSame:
    case BlockKind::kBnRelu:
      return in;
  }
  return in;
}

LayerList build_vgg_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                          std::mt19937_64& rng) {
  require(BlockKind::kVgg, cfg, "build_vgg_block");
  cfg.validate();
  LayerList out;
  add_conv_bn_relu(out, prefix + ".vsc1", conv_spec(ConvKind::VSC, cfg.n_in, cfg.n_out, 3, 1, dim),
                   rng);
  add_conv_bn_relu(out, prefix + ".vsc2",
                   conv_spec(ConvKind::VSC, cfg.n_out, cfg.n_out, 3, 1, dim), rng);
  if (cfg.pool_f > 0) {
    out.push_back(std::make_unique<PoolLayer>(prefix + ".mp", ConvKind::MP, cfg.pool_f, cfg.pool_s));
  }
  return out;
}

// Pre-activation residual units. The strided variant applies the same
// SC(3,2) geometry to the block input on both branches, so both resolve to
// one cached rule book and produce one output site table.
LayerList build_resnet_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                             std::mt19937_64& rng) {
  if (cfg.kind != BlockKind::kResNetSame && cfg.kind != BlockKind::kResNetDown) {
    throw Error(ErrorCode::kInvalidArgument, "build_resnet_block got the wrong block kind");
  }
  cfg.validate();
  const bool down = cfg.kind == BlockKind::kResNetDown;
  auto trunk = std::make_unique<Sequential>(prefix + ".trunk");
  auto shortcut = std::make_unique<Sequential>(prefix + ".shortcut");

  LayerList t;
  add_bn_relu(t, prefix + ".pre1", cfg.n_in);
  t.push_back(std::make_unique<ConvLayer>(
      prefix + (down ? ".sc1" : ".vsc1"),
      down ? conv_spec(ConvKind::SC, cfg.n_in, cfg.n_out, 3, 2, dim)
           : conv_spec(ConvKind::VSC, cfg.n_in, cfg.n_out, 3, 1, dim),
      rng));
  add_bn_relu(t, prefix + ".pre2", cfg.n_out);
  t.push_back(std::make_unique<ConvLayer>(
      prefix + ".vsc2", conv_spec(ConvKind::VSC, cfg.n_out, cfg.n_out, 3, 1, dim), rng));
  trunk->append(std::move(t));

  if (down) {
    shortcut->append(std::make_unique<ConvLayer>(
        prefix + ".proj", conv_spec(ConvKind::SC, cfg.n_in, cfg.n_out, 3, 2, dim), rng));
  } else if (cfg.n_in != cfg.n_out) {
    shortcut->append(std::make_unique<ConvLayer>(
        prefix + ".proj", conv_spec(ConvKind::VSC, cfg.n_in, cfg.n_out, 1, 1, dim), rng));
  }

  LayerList out;
  out.push_back(std::make_unique<ResidualBlock>(prefix, std::move(trunk), std::move(shortcut)));
  return out;
}

LayerList build_densenet_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                               std::mt19937_64& rng) {
  if (cfg.kind != BlockKind::kDenseSame && cfg.kind != BlockKind::kDenseDown) {
    throw Error(ErrorCode::kInvalidArgument, "build_densenet_block got the wrong block kind");
  }
  cfg.validate();
  LayerList out;
  if (cfg.kind == BlockKind::kDenseDown) {
    const int n_out = transition_planes(cfg);
    add_bn_relu(out, prefix + ".pre", cfg.n_in);
    out.push_back(std::make_unique<ConvLayer>(
        prefix + ".vsc", conv_spec(ConvKind::VSC, cfg.n_in, n_out, cfg.f, 1, dim), rng));
    out.push_back(std::make_unique<PoolLayer>(prefix + ".ap", ConvKind::AP, cfg.pool_f, cfg.pool_s));
    return out;
  }
  std::vector<std::unique_ptr<Sequential>> units;
  int acc = cfg.n_in;
  for (int u = 0; u < cfg.units; ++u) {
    const std::string name = prefix + ".bc" + std::to_string(u + 1);
    auto unit = std::make_unique<Sequential>(name);
    LayerList l;
    add_bn_relu(l, name, acc);
    l.push_back(std::make_unique<ConvLayer>(
        name + ".vsc", conv_spec(ConvKind::VSC, acc, cfg.growth, 3, 1, dim), rng));
    unit->append(std::move(l));
    units.push_back(std::move(unit));
    acc += cfg.growth;
  }
  out.push_back(std::make_unique<DenseBlock>(prefix, std::move(units)));
  return out;
}

LayerList build_block(const BlockConfig& cfg, int dim, const std::string& prefix,
                      std::mt19937_64& rng) {
  switch (cfg.kind) {
    case BlockKind::kVgg:
      return build_vgg_block(cfg, dim, prefix, rng);
    case BlockKind::kResNetSame:
    case BlockKind::kResNetDown:
      return build_resnet_block(cfg, dim, prefix, rng);
    case BlockKind::kDenseSame:
    case BlockKind::kDenseDown:
      return build_densenet_block(cfg, dim, prefix, rng);
    case BlockKind::kConv: {
      cfg.validate();
      LayerList out;
      add_conv_bn_relu(out, prefix + (cfg.conv == ConvKind::SC ? ".sc" : ".vsc"),
                       conv_spec(cfg.conv, cfg.n_in, cfg.n_out, cfg.f, cfg.s, dim), rng);
      return out;
    }
    case BlockKind::kPool: {
      cfg.validate();
      LayerList out;
      out.push_back(std::make_unique<PoolLayer>(
          prefix + (cfg.conv == ConvKind::MP ? ".mp" : ".ap"), cfg.conv, cfg.f, cfg.s));
      return out;
    }
    case BlockKind::kBnRelu: {
      cfg.validate();
      LayerList out;
      add_bn_relu(out, prefix, cfg.n_in);
      return out;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown block kind");
}

}  // namespace subm
