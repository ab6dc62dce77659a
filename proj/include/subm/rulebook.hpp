#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "subm/grid.hpp"

namespace subm {

enum class ConvKind { SC, VSC, MP, AP, DC };

std::string_view conv_kind_name(ConvKind kind);

/// Operator hyperparameters. m/n are plane counts (ignored by pooling),
/// f and s are uniform per axis. `pad` is zero for every operator except
/// the dilating same-size SC used by cost accounting; VSC always pads
/// (f-1)/2 implicitly.
struct ConvSpec {
  ConvKind kind = ConvKind::SC;
  int m = 1;
  int n = 1;
  int f = 3;
  int s = 1;
  int d = 2;
  int pad = 0;

  std::int64_t volume() const { return ipow(f, d); }
  void validate() const;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct Rule {
  std::int32_t in = 0;
  std::int32_t out = 0;
  friend bool operator==(const Rule&, const Rule&) = default;
};

/// Execution plan of one sparse operator: for each of the f^d filter offsets
/// a list of (input row, output row) pairs, sorted by (out, in).
struct RuleBook {
  ConvKind kind = ConvKind::SC;  // kind of the forward operator that built it
  int f = 1;
  int s = 1;
  int d = 2;
  int pad = 0;
  bool inverted = false;
  std::vector<std::vector<Rule>> rules;
  SiteMapPtr input_sites;
  SiteMapPtr output_sites;

  // DC for inverted books, otherwise `kind`.
  ConvKind op_kind() const { return inverted ? ConvKind::DC : kind; }
  std::size_t num_offsets() const { return rules.size(); }
  std::size_t total_rules() const;
  const Extent& output_size() const { return output_sites->shape().size; }
  // Lattice offset of index i in row-major order over {0..f-1}^d.
  std::array<std::int32_t, kMaxDim> offset(std::size_t i) const;
};

using RuleBookPtr = std::shared_ptr<const RuleBook>;

/// (l - f + s) / s, requiring l >= f and (l - f) divisible by s.
std::int32_t output_extent(std::int32_t l, int f, int s);

RuleBook build_sc(const SiteMapPtr& sites, const ConvSpec& spec);
RuleBook build_vsc(const SiteMapPtr& sites, const ConvSpec& spec);
RuleBook build_pool(const SiteMapPtr& sites, const ConvSpec& spec);
// Dispatches on spec.kind (SC/MP/AP -> full, VSC -> submanifold).
RuleBook build_rulebook(const SiteMapPtr& sites, const ConvSpec& spec);

inline RuleBook build_sc(const SparseGrid& g, const ConvSpec& spec) {
  return build_sc(g.site_map(), spec);
}
inline RuleBook build_vsc(const SparseGrid& g, const ConvSpec& spec) {
  return build_vsc(g.site_map(), spec);
}
inline RuleBook build_pool(const SparseGrid& g, const ConvSpec& spec) {
  return build_pool(g.site_map(), spec);
}

/// Transposed book: outputs become the original input sites and every rule
/// (in, out) at offset i becomes (out, in) at the mirrored offset f^d-1-i.
RuleBook invert(const RuleBook& rb);

// One line per rule: "offset_index input_row output_row".
void dump_rulebook(std::ostream& os, const RuleBook& rb);

}  // namespace subm
