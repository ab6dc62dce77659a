#include <sstream>

#include "helpers.hpp"
#include "subm/cost.hpp"
#include "subm/data.hpp"
#include "subm/net.hpp"

namespace subm {
namespace {

TEST(SiteCost, SingleSiteExample) {
  EXPECT_EQ(site_cost(CostColumn::kDense, 3, 2, 16, 16, 5, true), (SiteCost{2304, 16}));
  EXPECT_EQ(site_cost(CostColumn::kSparse, 3, 2, 16, 16, 5, true), (SiteCost{1280, 16}));
  EXPECT_EQ(site_cost(CostColumn::kValid, 3, 2, 16, 16, 5, true), (SiteCost{1280, 16}));
}

TEST(SiteCost, InactiveSite) {
  EXPECT_EQ(site_cost(CostColumn::kDense, 3, 2, 16, 16, 0, false), (SiteCost{2304, 16}));
  EXPECT_EQ(site_cost(CostColumn::kSparse, 3, 2, 16, 16, 0, false).flops, 0);
  EXPECT_EQ(site_cost(CostColumn::kValid, 3, 2, 16, 16, 3, false), (SiteCost{0, 0}));
}

TEST(DenseCost, Formulas) {
  GridShape s = make_shape(std::vector<std::int32_t>{4, 4});
  EXPECT_EQ(count_dense_flops(3, 2, 2, 5, s, 3), 9 * 2 * 5 * 16 * 3);
  EXPECT_EQ(count_dense_hidden(5, s, 3), 5 * 16 * 3);
}

TEST(Ledger, EmptyTotalsZero) {
  CostLedger l;
  EXPECT_EQ(l.total_flops(), 0);
  EXPECT_EQ(l.total_hidden(), 0);
  EXPECT_EQ(l.total_dense_flops(), 0);
}

TEST(Ledger, TotalsAreSums) {
  CostLedger l;
  l.add({"a", "vsc", 10, 2, 100, 20});
  l.add({"b", "mp", 0, 3, 0, 30});
  EXPECT_EQ(l.total_flops(), 10);
  EXPECT_EQ(l.total_hidden(), 5);
  EXPECT_EQ(l.total_dense_flops(), 100);
  EXPECT_EQ(l.total_dense_hidden(), 50);
}

TEST(Ledger, CsvAndTable) {
  CostLedger l;
  l.add({"b0.vsc1", "vsc", 1280, 16, 2304, 16});
  std::ostringstream csv, table;
  write_ledger_csv(csv, l);
  write_ledger_table(table, l);
  EXPECT_EQ(csv.str(), "layer,kind,flops,hidden_states\nb0.vsc1,vsc,1280,16\n");
  EXPECT_NE(table.str().find("b0.vsc1"), std::string::npos);
  EXPECT_NE(table.str().find("1280"), std::string::npos);
}

TEST(Ledger, ValidLeSparseLeDenseLayerwise) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  Dataset ds = gen_strokes(3, 2, 64, 4);
  for (const auto& s : ds.samples) {
    CostLedger vsc = plan.forward(s.grid).ledger;
    CostLedger sc = plan.forward(s.grid, {.mode = ConvMode::kFull}).ledger;
    ASSERT_EQ(vsc.entries.size(), sc.entries.size());
    for (std::size_t i = 0; i < vsc.entries.size(); ++i) {
      EXPECT_LE(vsc.entries[i].flops, sc.entries[i].flops) << vsc.entries[i].layer;
      EXPECT_LE(sc.entries[i].flops, sc.entries[i].dense_flops) << vsc.entries[i].layer;
      EXPECT_LE(vsc.entries[i].hidden_states, sc.entries[i].hidden_states);
      EXPECT_LE(sc.entries[i].hidden_states, sc.entries[i].dense_hidden_states);
    }
  }
}

TEST(Ledger, ConvFlopsEqualRuleCountTimesPlanes) {
  NetworkPlan plan(load_arch_file(std::string(SUBM_CONFIG_DIR) + "/vgg_a_64.arch"), 1);
  Dataset ds = gen_strokes(2, 1, 64, 8);
  CostLedger ledger = plan.forward(ds.samples[0].grid).ledger;
  std::size_t checked = 0;
  plan.body().visit([&](Layer& l) {
    auto* conv = dynamic_cast<ConvLayer*>(&l);
    if (!conv) return;
    for (const auto& e : ledger.entries) {
      if (e.layer != conv->name()) continue;
      EXPECT_EQ(e.flops, count_flops(*conv->last_rulebook(), conv->spec().m, conv->spec().n));
      ++checked;
    }
  });
  EXPECT_EQ(checked, 11u);
}

}  // namespace
}  // namespace subm
