#include "subm/cost.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace subm {

SiteCost site_cost(CostColumn column, int f, int d, std::int64_t m, std::int64_t n,
                   std::int64_t active_inputs, bool centre_active) {
  switch (column) {
    case CostColumn::kDense:
      return {ipow(f, d) * m * n, n};
    case CostColumn::kSparse:
      // Any active input activates (and stores) the output.
      return {active_inputs * m * n, active_inputs > 0 ? n : 0};
    case CostColumn::kValid:
      if (!centre_active) return {0, 0};
      return {active_inputs * m * n, n};
  }
  return {};
}

std::int64_t count_flops(const RuleBook& rb, std::int64_t m, std::int64_t n) {
  return static_cast<std::int64_t>(rb.total_rules()) * m * n;
}

std::int64_t count_hidden(const RuleBook& rb, std::int64_t n) {
  return static_cast<std::int64_t>(rb.output_sites->size()) * n;
}

std::int64_t count_dense_flops(int f, int d, std::int64_t m, std::int64_t n,
                               const GridShape& out_shape, std::int64_t batch) {
  return ipow(f, d) * m * n * out_shape.volume() * batch;
}

std::int64_t count_dense_hidden(std::int64_t n, const GridShape& out_shape, std::int64_t batch) {
  return n * out_shape.volume() * batch;
}

std::int64_t CostLedger::total_flops() const {
  std::int64_t t = 0;
  for (const auto& e : entries) t += e.flops;
  return t;
}
std::int64_t CostLedger::total_hidden() const {
  std::int64_t t = 0;
  for (const auto& e : entries) t += e.hidden_states;
  return t;
}
std::int64_t CostLedger::total_dense_flops() const {
  std::int64_t t = 0;
  for (const auto& e : entries) t += e.dense_flops;
  return t;
}
std::int64_t CostLedger::total_dense_hidden() const {
  std::int64_t t = 0;
  for (const auto& e : entries) t += e.dense_hidden_states;
  return t;
}

void write_ledger_table(std::ostream& os, const CostLedger& ledger) {
  std::size_t w = 5;
  for (const auto& e : ledger.entries) w = std::max(w, e.layer.size());
  os << std::left << std::setw(static_cast<int>(w)) << "layer" << "  " << std::setw(4) << "kind"
     << std::right << std::setw(14) << "flops" << std::setw(14) << "hidden" << '\n';
  for (const auto& e : ledger.entries) {
    os << std::left << std::setw(static_cast<int>(w)) << e.layer << "  " << std::setw(4) << e.kind
       << std::right << std::setw(14) << e.flops << std::setw(14) << e.hidden_states << '\n';
  }
  os << std::left << std::setw(static_cast<int>(w)) << "total" << "  " << std::setw(4) << ""
     << std::right << std::setw(14) << ledger.total_flops() << std::setw(14)
     << ledger.total_hidden() << '\n';
}

void write_ledger_csv(std::ostream& os, const CostLedger& ledger) {
  os << "layer,kind,flops,hidden_states\n";
  for (const auto& e : ledger.entries) {
    os << e.layer << ',' << e.kind << ',' << e.flops << ',' << e.hidden_states << '\n';
  }
}

}  // namespace subm
