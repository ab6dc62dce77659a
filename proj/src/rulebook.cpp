#include "subm/rulebook.hpp"

#include <algorithm>
#include <ostream>

namespace subm {
namespace {

using Offset = std::array<std::int32_t, kMaxDim>;

std::vector<Offset> offset_table(int f, int d) {
  std::vector<Offset> table(static_cast<std::size_t>(ipow(f, d)));
  for (std::size_t i = 0; i < table.size(); ++i) {
    Offset o{};
    auto rem = static_cast<std::int64_t>(i);
    for (int k = d - 1; k >= 0; --k) {
      o[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(rem % f);
      rem /= f;
    }
    table[i] = o;
  }
  return table;
}

struct TaggedRule {
  std::int32_t offset;
  Rule rule;
};

// Stable counting sort on the output row. Within one offset an output row
// occurs at most once, so each list comes out ordered by (out, in).
void bucket_by_output(const std::vector<TaggedRule>& emitted, std::size_t n_out,
                      std::vector<std::vector<Rule>>& rules) {
  std::vector<std::uint32_t> start(n_out + 1, 0);
  std::vector<std::size_t> per_offset(rules.size(), 0);
  for (const auto& e : emitted) {
    ++start[static_cast<std::size_t>(e.rule.out) + 1];
    ++per_offset[static_cast<std::size_t>(e.offset)];
  }
  for (std::size_t i = 0; i < n_out; ++i) start[i + 1] += start[i];
  std::vector<std::uint32_t> ordered(emitted.size());
  for (std::size_t k = 0; k < emitted.size(); ++k) {
    ordered[start[static_cast<std::size_t>(emitted[k].rule.out)]++] = static_cast<std::uint32_t>(k);
  }
  for (std::size_t i = 0; i < rules.size(); ++i) rules[i].reserve(per_offset[i]);
  for (std::uint32_t k : ordered) {
    rules[static_cast<std::size_t>(emitted[k].offset)].push_back(emitted[k].rule);
  }
}

void sort_rules(std::vector<Rule>& rules) {
  std::sort(rules.begin(), rules.end(), [](const Rule& a, const Rule& b) {
    return a.out != b.out ? a.out < b.out : a.in < b.in;
  });
}

void check_sites(const SiteMapPtr& sites, const ConvSpec& spec) {
  if (!sites) throw Error(ErrorCode::kInvalidArgument, "null site map");
  if (sites->dim() != spec.d) {
    throw Error(ErrorCode::kShapeMismatch, "spec dimension " + std::to_string(spec.d) +
                                               " != grid dimension " +
                                               std::to_string(sites->dim()));
  }
}

// Full (dilating) sparse convolution geometry shared by SC and pooling.
// Every active input at p feeds output q at offset i whenever
// p + pad = q*s + i with q inside the output extent.
RuleBook build_full(const SiteMapPtr& sites, const ConvSpec& spec, ConvKind kind) {
  spec.validate();
  check_sites(sites, spec);
  const int d = spec.d, f = spec.f, s = spec.s, pad = spec.pad;
  const auto& in_shape = sites->shape();

  GridShape out_shape = in_shape;
  for (int k = 0; k < d; ++k) {
    auto& sz = out_shape.size[static_cast<std::size_t>(k)];
    sz = output_extent(sz + 2 * pad, f, s);
  }

  RuleBook rb;
  rb.kind = kind;
  rb.f = f;
  rb.s = s;
  rb.d = d;
  rb.pad = pad;
  rb.rules.resize(static_cast<std::size_t>(spec.volume()));
  rb.input_sites = sites;

  auto out_sites = std::make_shared<SiteMap>(out_shape, sites->batch_size());
  std::size_t fan_out = 1, volume = static_cast<std::size_t>(sites->batch_size());
  for (int k = 0; k < d; ++k) {
    fan_out *= static_cast<std::size_t>((f + s - 1) / s);
    volume *= static_cast<std::size_t>(out_shape.size[static_cast<std::size_t>(k)]);
  }
  out_sites->reserve(std::min(sites->size() * fan_out, volume));
  std::vector<TaggedRule> emitted;
  emitted.reserve(sites->size() * fan_out);

  // Per-axis candidate (offset component, output component) pairs.
  struct AxisHit {
    std::int32_t offset;
    std::int32_t out;
  };
  std::array<std::vector<AxisHit>, kMaxDim> hits;
  std::array<std::size_t, kMaxDim> pos{};

  for (std::size_t row = 0; row < sites->size(); ++row) {
    const Coordinate& p = sites->coord(row);
    bool any = true;
    for (int k = 0; k < d; ++k) {
      auto& h = hits[static_cast<std::size_t>(k)];
      h.clear();
      const std::int32_t lim = out_shape.size[static_cast<std::size_t>(k)];
      for (int i = 0; i < f; ++i) {
        std::int32_t t = p.spatial[static_cast<std::size_t>(k)] + pad - i;
        if (t < 0 || t % s != 0) continue;
        std::int32_t q = t / s;
        if (q < lim) h.push_back({i, q});
      }
      if (h.empty()) any = false;
    }
    if (!any) continue;

    // Odometer over the cartesian product of per-axis hits.
    pos.fill(0);
    while (true) {
      Coordinate q;
      q.batch = p.batch;
      std::size_t off = 0;
      for (int k = 0; k < d; ++k) {
        const auto& hit = hits[static_cast<std::size_t>(k)][pos[static_cast<std::size_t>(k)]];
        q.spatial[static_cast<std::size_t>(k)] = hit.out;
        off = off * static_cast<std::size_t>(f) + static_cast<std::size_t>(hit.offset);
      }
      emitted.push_back({static_cast<std::int32_t>(off),
                         {static_cast<std::int32_t>(row), out_sites->insert(q).first}});

      int k = d - 1;
      while (k >= 0) {
        auto kk = static_cast<std::size_t>(k);
        if (++pos[kk] < hits[kk].size()) break;
        pos[kk] = 0;
        --k;
      }
      if (k < 0) break;
    }
  }
  bucket_by_output(emitted, out_sites->size(), rb.rules);
  rb.output_sites = std::move(out_sites);
  return rb;
}

}  // namespace

std::string_view conv_kind_name(ConvKind kind) {
  switch (kind) {
    case ConvKind::SC: return "SC";
    case ConvKind::VSC: return "VSC";
    case ConvKind::MP: return "MP";
    case ConvKind::AP: return "AP";
    case ConvKind::DC: return "DC";
  }
  return "?";
}

void ConvSpec::validate() const {
  if (d < 1 || d > kMaxDim) throw Error(ErrorCode::kInvalidArgument, "dimension must be 1..4");
  if (f < 1) throw Error(ErrorCode::kInvalidArgument, "filter size must be >= 1");
  if (s < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  if (m < 1 || n < 1) throw Error(ErrorCode::kInvalidArgument, "plane counts must be >= 1");
  if (pad < 0) throw Error(ErrorCode::kInvalidArgument, "padding must be >= 0");
  if (kind == ConvKind::VSC) {
    if (f % 2 == 0) throw Error(ErrorCode::kEvenFilterForVSC, "f=" + std::to_string(f));
    if (s != 1) throw Error(ErrorCode::kStridedVSC, "s=" + std::to_string(s));
  }
}

std::size_t RuleBook::total_rules() const {
  std::size_t n = 0;
  for (const auto& list : rules) n += list.size();
  return n;
}

std::array<std::int32_t, kMaxDim> RuleBook::offset(std::size_t i) const {
  std::array<std::int32_t, kMaxDim> o{};
  auto rem = static_cast<std::int64_t>(i);
  for (int k = d - 1; k >= 0; --k) {
    o[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(rem % f);
    rem /= f;
  }
  return o;
}

std::int32_t output_extent(std::int32_t l, int f, int s) {
  if (f < 1 || s < 1) throw Error(ErrorCode::kInvalidArgument, "f and s must be >= 1");
  if (l < f) {
    throw Error(ErrorCode::kInvalidArgument,
                "extent " + std::to_string(l) + " smaller than filter " + std::to_string(f));
  }
  if ((l - f) % s != 0) {
    throw Error(ErrorCode::kIndivisibleExtent, "(" + std::to_string(l) + " - " +
                                                   std::to_string(f) + ") not divisible by " +
                                                   std::to_string(s));
  }
  return (l - f + s) / s;
}

RuleBook build_sc(const SiteMapPtr& sites, const ConvSpec& spec) {
  return build_full(sites, spec, ConvKind::SC);
}

RuleBook build_pool(const SiteMapPtr& sites, const ConvSpec& spec) {
  if (spec.kind != ConvKind::MP && spec.kind != ConvKind::AP) {
    throw Error(ErrorCode::kInvalidArgument, "build_pool needs an MP or AP spec");
  }
  return build_full(sites, spec, spec.kind);
}

RuleBook build_vsc(const SiteMapPtr& sites, const ConvSpec& spec) {
  ConvSpec v = spec;
  v.kind = ConvKind::VSC;
  v.validate();
  check_sites(sites, v);
  const int d = v.d;
  const std::int32_t centre = (v.f - 1) / 2;
  const auto& shape = sites->shape();
  const auto table = offset_table(v.f, d);

  RuleBook rb;
  rb.kind = ConvKind::VSC;
  rb.f = v.f;
  rb.s = 1;
  rb.d = d;
  rb.pad = centre;
  rb.rules.resize(table.size());
  rb.input_sites = sites;
  rb.output_sites = sites;  // output hash table is the input's
  for (auto& list : rb.rules) list.reserve(sites->size() / 2 + 1);

  for (std::size_t row = 0; row < sites->size(); ++row) {
    const Coordinate& p = sites->coord(row);
    for (std::size_t i = 0; i < table.size(); ++i) {
      Coordinate q = p;
      bool inside = true;
      for (int k = 0; k < d; ++k) {
        auto kk = static_cast<std::size_t>(k);
        std::int32_t x = p.spatial[kk] + table[i][kk] - centre;
        if (x < 0 || x >= shape.size[kk]) {
          inside = false;
          break;
        }
        q.spatial[kk] = x;
      }
      if (!inside) continue;
      if (auto in_row = sites->find(q)) {
        rb.rules[i].push_back({*in_row, static_cast<std::int32_t>(row)});
      }
    }
  }
  return rb;
}

RuleBook build_rulebook(const SiteMapPtr& sites, const ConvSpec& spec) {
  switch (spec.kind) {
    case ConvKind::VSC: return build_vsc(sites, spec);
    case ConvKind::SC: return build_sc(sites, spec);
    case ConvKind::MP:
    case ConvKind::AP: return build_pool(sites, spec);
    case ConvKind::DC: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "DC books are built with invert()");
}

RuleBook invert(const RuleBook& rb) {
  RuleBook out;
  out.kind = rb.kind;
  out.f = rb.f;
  out.s = rb.s;
  out.d = rb.d;
  out.pad = rb.pad;
  out.inverted = !rb.inverted;
  out.input_sites = rb.output_sites;
  out.output_sites = rb.input_sites;
  const std::size_t n = rb.rules.size();
  out.rules.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = out.rules[n - 1 - i];
    dst.reserve(rb.rules[i].size());
    for (const Rule& r : rb.rules[i]) dst.push_back({r.out, r.in});
    sort_rules(dst);
  }
  return out;
}

void dump_rulebook(std::ostream& os, const RuleBook& rb) {
  for (std::size_t i = 0; i < rb.rules.size(); ++i) {
    for (const Rule& r : rb.rules[i]) os << i << ' ' << r.in << ' ' << r.out << '\n';
  }
}

}  // namespace subm
