#include <random>
#include <sstream>

#include "helpers.hpp"
#include "subm/checks.hpp"
#include "subm/data.hpp"
#include "subm/net.hpp"
#include "subm/train.hpp"

namespace subm {
namespace {

using test::make_grid;

struct Counts {
  int conv_vsc = 0, conv_sc = 0, mp = 0, ap = 0, bn = 0;
};

Counts count_layers(Layer& root) {
  Counts c;
  root.visit([&](Layer& l) {
    if (auto* conv = dynamic_cast<ConvLayer*>(&l)) {
      (conv->spec().kind == ConvKind::VSC ? c.conv_vsc : c.conv_sc)++;
    } else if (auto* pool = dynamic_cast<PoolLayer*>(&l)) {
      (pool->kind() == ConvKind::MP ? c.mp : c.ap)++;
    } else if (dynamic_cast<BatchNormLayer*>(&l)) {
      c.bn++;
    }
  });
  return c;
}

SparseGrid random_input(std::uint64_t seed, int dim, std::int32_t extent, std::size_t active,
                        std::int32_t batch = 2) {
  std::mt19937_64 rng(seed);
  return checks::random_grid(rng, {.dim = dim, .extent = extent, .max_active = active, .planes = 1,
                                   .batch = batch});
}

TEST(VggBlock, TwoConvsAndPool) {
  std::mt19937_64 rng(1);
  Sequential s("s", build_vgg_block({.kind = BlockKind::kVgg, .n_in = 16, .n_out = 16}, 2, "b", rng));
  Counts c = count_layers(s);
  EXPECT_EQ(c.conv_vsc, 2);
  EXPECT_EQ(c.mp, 1);
  EXPECT_EQ(c.bn, 2);
}

TEST(VggBlock, VggAChain) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  Counts c = count_layers(plan.body());
  EXPECT_EQ(c.conv_vsc, 10);
  EXPECT_EQ(c.mp, 4);
  EXPECT_EQ(c.conv_sc, 1);
  const auto& last = dynamic_cast<const ConvLayer&>(*plan.body().layers()[plan.body().layers().size() - 3]);
  EXPECT_EQ(last.spec().n, 128);
  EXPECT_EQ(last.spec().f, 4);
}

TEST(VggBlock, OnePlaneDegenerateRuns) {
  NetworkPlan plan(parse_arch_string("input d=2 size=8 m=1\nvgg 1 1\nsc 1 1 f=4 s=1\nclassifier 2\n"), 3);
  ForwardResult r = plan.forward(random_input(2, 2, 8, 10), {.training = true});
  EXPECT_EQ(r.logits.rows(), 2u);
}

TEST(ResNetBlock, ZeroTrunkIsIdentity) {
  std::mt19937_64 rng(1);
  auto layers = build_resnet_block({.kind = BlockKind::kResNetSame, .n_in = 4, .n_out = 4}, 2, "r", rng);
  ASSERT_EQ(layers.size(), 1u);
  layers[0]->visit([](Layer& l) {
    if (auto* conv = dynamic_cast<ConvLayer*>(&l)) {
      std::fill(conv->params().weights.begin(), conv->params().weights.end(), Real(0));
      std::fill(conv->params().bias.begin(), conv->params().bias.end(), Real(0));
    }
  });
  std::mt19937_64 g_rng(5);
  SparseGrid x = checks::random_grid(g_rng, {.dim = 2, .extent = 8, .max_active = 12, .planes = 4});
  ForwardContext ctx;
  SparseGrid y = layers[0]->forward(x, ctx);
  EXPECT_EQ(y.site_map(), x.site_map());
  EXPECT_EQ(y.features(), x.features());
}

TEST(ResNetBlock, DownBranchesShareOneSiteTable) {
  std::mt19937_64 rng(1);
  auto layers = build_resnet_block({.kind = BlockKind::kResNetDown, .n_in = 2, .n_out = 4}, 2, "r", rng);
  auto& block = dynamic_cast<ResidualBlock&>(*layers[0]);
  RuleBookCache cache;
  ForwardContext ctx{.training = true, .cache = &cache};
  std::mt19937_64 g_rng(7);
  for (int t = 0; t < 10; ++t) {
    SparseGrid x = checks::random_grid(g_rng, {.dim = 2, .extent = 9, .max_active = 20, .planes = 2,
                                               .batch = 2});
    if (x.active_count() < 2) continue;
    cache.clear();
    block.forward(x, ctx);
    EXPECT_EQ(block.last_trunk_output().site_map(), block.last_shortcut_output().site_map());
    EXPECT_TRUE(block.last_trunk_output().sites().same_sites(block.last_shortcut_output().sites()));
  }
}

TEST(ResNetBlock, PlaneChangeUsesOneByOneProjection) {
  std::mt19937_64 rng(1);
  auto layers = build_resnet_block({.kind = BlockKind::kResNetSame, .n_in = 4, .n_out = 8}, 2, "r", rng);
  auto& block = dynamic_cast<ResidualBlock&>(*layers[0]);
  ASSERT_NE(block.shortcut(), nullptr);
  ASSERT_EQ(block.shortcut()->layers().size(), 1u);
  const auto& proj = dynamic_cast<const ConvLayer&>(*block.shortcut()->layers()[0]);
  EXPECT_EQ(proj.spec().f, 1);
  EXPECT_EQ(proj.spec().kind, ConvKind::VSC);
}

TEST(ResNetBlock, ResNetALadder) {
  ArchConfig arch = load_arch_file(std::string(SUBM_CONFIG_DIR) + "/resnet_a_63.arch");
  std::vector<int> ladder;
  for (const auto& b : arch.blocks) {
    if (ladder.empty() || ladder.back() != b.n_out) ladder.push_back(b.n_out);
  }
  EXPECT_EQ(ladder, (std::vector<int>{16, 32, 48, 96, 128}));
  EXPECT_EQ(arch.blocks[1].n_in, 16);
  NetworkPlan plan(arch, 1);
  ForwardResult r = plan.forward(random_input(3, 2, 63, 200), {.training = true});
  EXPECT_EQ(r.logits.cols(), 10u);
}

TEST(DenseBlock, PlaneArithmetic) {
  BlockConfig cfg{.kind = BlockKind::kDenseSame, .n_in = 16, .growth = 16, .units = 2};
  EXPECT_EQ(block_out_planes(cfg), 48);
  std::mt19937_64 rng(1);
  auto layers = build_densenet_block(cfg, 2, "d", rng);
  std::mt19937_64 g_rng(9);
  SparseGrid x = checks::random_grid(g_rng, {.dim = 2, .extent = 8, .max_active = 12, .planes = 16});
  ForwardContext ctx;
  SparseGrid y = layers[0]->forward(x, ctx);
  EXPECT_EQ(y.num_features(), 48u);
  EXPECT_EQ(y.site_map(), x.site_map());
  // The block's input passes through unchanged as the leading planes.
  for (std::size_t r = 0; r < x.active_count(); ++r) {
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(y.features()(r, c), x.features()(r, c));
  }
}

TEST(DenseBlock, TransitionCompression) {
  BlockConfig cfg{.kind = BlockKind::kDenseDown, .n_in = 64, .compress = 0.5};
  EXPECT_EQ(block_out_planes(cfg), 32);
  std::mt19937_64 rng(1);
  Sequential s("t", build_densenet_block(cfg, 2, "t", rng));
  Counts c = count_layers(s);
  EXPECT_EQ(c.ap, 1);
  EXPECT_EQ(c.conv_vsc, 1);
}

TEST(DenseBlock, GrowthOneBuilds) {
  std::mt19937_64 rng(1);
  BlockConfig cfg{.kind = BlockKind::kDenseSame, .n_in = 3, .growth = 1, .units = 1};
  EXPECT_EQ(build_densenet_block(cfg, 2, "d", rng).size(), 1u);
  EXPECT_EQ(block_out_planes(cfg), 4);
  cfg.growth = 0;
  EXPECT_THROW_CODE(build_densenet_block(cfg, 2, "d", rng), ErrorCode::kInvalidArgument);
}

TEST(DenseBlock, DenseNetAPlanRuns) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/densenet_a_64.arch"), 1);
  ForwardResult r = plan.forward(random_input(4, 2, 64, 300), {.training = true});
  EXPECT_EQ(r.logits.rows(), 2u);
  Matrix g(2, 10, 0.1);
  EXPECT_NO_THROW(plan.backward(g));
}

TEST(RuleBookCache, SecondVscReusesFirstBook) {
  NetworkPlan plan(parse_arch_string("input d=2 size=8 m=1\nvsc 1 2\nvsc 2 2\n"), 1);
  plan.forward(random_input(1, 2, 8, 20, 1));
  const auto& layers = plan.body().layers();
  const auto& c1 = dynamic_cast<const ConvLayer&>(*layers[0]);
  const auto& c2 = dynamic_cast<const ConvLayer&>(*layers[3]);
  EXPECT_EQ(c1.last_rulebook().get(), c2.last_rulebook().get());
  EXPECT_EQ(plan.cache().hits(), 1u);
  EXPECT_EQ(plan.cache().builds(), 1u);
}

TEST(RuleBookCache, VggAFamilies) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  Dataset ds = gen_strokes(2, 1, 64, 3);
  plan.forward(ds.samples[0].grid);
  EXPECT_EQ(plan.cache().families(), 5u);
  EXPECT_EQ(plan.cache().builds_of(ConvKind::VSC), 5u);
  EXPECT_EQ(plan.cache().builds_of(ConvKind::MP), 4u);
  EXPECT_EQ(plan.cache().hits(), 5u);
}

TEST(NetworkPlan, EmptyInputGivesZeroLedgerAndWarnings) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  SparseGrid g = make_grid({64, 64}, 1, {}, 3);
  ForwardResult r = plan.forward(g);
  EXPECT_EQ(r.ledger.total_flops(), 0);
  EXPECT_EQ(r.warnings.size(), 3u);
  EXPECT_EQ(r.logits.rows(), 3u);
}

TEST(NetworkPlan, OneLayerLedgerOnTwoSites) {
  NetworkPlan plan(parse_arch_string("input d=2 size=4 m=1\nvsc 1 4\n"), 1);
  SparseGrid g = make_grid({4, 4}, 1, {{{1, 1}, {1.0}}, {{1, 2}, {1.0}}});
  ForwardResult r = plan.forward(g);
  ASSERT_EQ(r.ledger.entries.size(), 1u);
  EXPECT_EQ(r.ledger.entries[0].flops, 4 * 1 * 4);
  EXPECT_EQ(r.ledger.entries[0].hidden_states, 2 * 4);
}

TEST(NetworkPlan, GeometryMismatch) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  EXPECT_THROW_CODE(plan.forward(make_grid({32, 32}, 1, {})), ErrorCode::kGeometryMismatch);
  EXPECT_THROW_CODE(plan.forward(make_grid({64, 64}, 2, {})), ErrorCode::kGeometryMismatch);
}

TEST(NetworkPlan, FullModeOnResidualReportsActiveSetMismatch) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/resnet_a_63.arch"), 1);
  EXPECT_THROW_CODE(plan.forward(random_input(5, 2, 63, 50), {.mode = ConvMode::kFull}),
                    ErrorCode::kActiveSetMismatch);
}

TEST(NetworkPlan, BnParamsExemptFromDecay) {
  NetworkPlan plan(parse_arch_string("vsc 1 2\nclassifier 2\n"), 1);
  for (const auto& p : plan.params()) {
    const bool bn = p.name.find("gamma") != std::string::npos || p.name.find("beta") != std::string::npos;
    EXPECT_EQ(p.decay, !bn) << p.name;
  }
}

TEST(Arch, ParsesAndFormatsRoundTrip) {
  const std::string text = "input d=2 size=64 m=1\nvgg 1 16\ndense 16 g=8 n=2\ntransition 0.5\n"
                           "resnet 16 16\nresnet_down 16 32\nsc 32 64 f=4 s=1\nclassifier 10\n";
  ArchConfig a = parse_arch_string(text);
  ArchConfig b = parse_arch_string(format_arch(a));
  EXPECT_EQ(format_arch(a), format_arch(b));
  EXPECT_EQ(a.classes, 10);
  EXPECT_EQ(a.output_planes(), 64);
  EXPECT_EQ(a.blocks[2].n_in, 32);  // transition planes follow the dense block
}

TEST(Arch, ParseErrors) {
  auto code = [](const std::string& text) {
    try {
      parse_arch_string(text);
    } catch (const Error& e) {
      return std::pair(e.code(), std::string(e.what()));
    }
    return std::pair(ErrorCode::kIoError, std::string("no error"));
  };
  auto [c1, m1] = code("vgg 1 16\nfrobnicate 3\n");
  EXPECT_EQ(c1, ErrorCode::kParseError);
  EXPECT_NE(m1.find("line 2"), std::string::npos);
  EXPECT_EQ(code("vgg 1 16\nvgg 32 64\n").first, ErrorCode::kPlaneMismatch);
  EXPECT_EQ(code("vgg 1\n").first, ErrorCode::kParseError);
  EXPECT_EQ(code("vgg 1 x\n").first, ErrorCode::kParseError);
  EXPECT_EQ(code("vsc 1 2 q=3\n").first, ErrorCode::kParseError);
  EXPECT_EQ(code("# nothing\n").first, ErrorCode::kParseError);
}

TEST(Arch, CommentsAndBlankLinesIgnored) {
  ArchConfig a = parse_arch_string("# header\n\nvgg 1 4   # trailing\nclassifier 3\n");
  EXPECT_EQ(a.blocks.size(), 1u);
  EXPECT_EQ(a.classes, 3);
}

TEST(Checkpoint, RoundTripPreservesLogits) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_63.arch"), 7);
  Dataset ds = gen_strokes(10, 2, 63, 5);
  TrainOptions opts;
  opts.epochs = 1;
  opts.batch = 10;
  OptimizerState state;
  run_epochs(plan, ds, state, opts);

  std::stringstream ss;
  save_checkpoint(plan, ss);
  NetworkPlan back = load_checkpoint(ss);
  std::vector<const Sample*> members{&ds.samples[0], &ds.samples[7]};
  SparseGrid batch = make_batch(members);
  EXPECT_EQ(plan.forward(batch).logits, back.forward(batch).logits);
}

TEST(Checkpoint, CorruptInputRejected) {
  std::stringstream a("not a checkpoint\n");
  EXPECT_THROW_CODE(load_checkpoint(a), ErrorCode::kParseError);
  NetworkPlan plan(parse_arch_string("vsc 1 2\nclassifier 2\n"), 1);
  std::stringstream ss;
  save_checkpoint(plan, ss);
  std::string text = ss.str();
  text.resize(text.size() / 2);
  std::stringstream cut(text);
  EXPECT_THROW_CODE(load_checkpoint(cut), ErrorCode::kParseError);
}

}  // namespace
}  // namespace subm
