#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "subm/rulebook.hpp"

namespace subm {

// One multiply-accumulate counts as one FLOP. Bias, batch-norm and ReLU work
// is not counted.

/// Which column of the per-location cost table to evaluate.
enum class CostColumn { kDense, kSparse, kValid };

struct SiteCost {
  std::int64_t flops = 0;
  std::int64_t memory = 0;
  friend bool operator==(const SiteCost&, const SiteCost&) = default;
};

/// Cost of one f^d convolution at one output location with `active_inputs`
/// active sites in its receptive field. `centre_active` only matters for the
/// valid column: a valid convolution computes nothing where the centre input
/// is inactive.
SiteCost site_cost(CostColumn column, int f, int d, std::int64_t m, std::int64_t n,
                   std::int64_t active_inputs, bool centre_active);

/// m * n * sum_i k_i over a rule book.
std::int64_t count_flops(const RuleBook& rb, std::int64_t m, std::int64_t n);
/// n per stored output site.
std::int64_t count_hidden(const RuleBook& rb, std::int64_t n);
/// Regular dense convolution over the full output extent of every sample.
std::int64_t count_dense_flops(int f, int d, std::int64_t m, std::int64_t n,
                               const GridShape& out_shape, std::int64_t batch);
std::int64_t count_dense_hidden(std::int64_t n, const GridShape& out_shape, std::int64_t batch);

struct LedgerEntry {
  std::string layer;
  std::string kind;
  std::int64_t flops = 0;
  std::int64_t hidden_states = 0;
  std::int64_t dense_flops = 0;
  std::int64_t dense_hidden_states = 0;
};

struct CostLedger {
  std::vector<LedgerEntry> entries;

  void add(LedgerEntry e) { entries.push_back(std::move(e)); }
  void clear() { entries.clear(); }
  std::int64_t total_flops() const;
  std::int64_t total_hidden() const;
  std::int64_t total_dense_flops() const;
  std::int64_t total_dense_hidden() const;
};

// Aligned text table and CSV (layer,kind,flops,hidden_states).
void write_ledger_table(std::ostream& os, const CostLedger& ledger);
void write_ledger_csv(std::ostream& os, const CostLedger& ledger);

}  // namespace subm
