#include "subm/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace subm::oracle {
namespace {

GridShape strided_shape(const GridShape& in, int f, int s, int pad) {
  GridShape out = in;
  for (int k = 0; k < in.dim; ++k) {
    auto& sz = out.size[static_cast<std::size_t>(k)];
    const std::int32_t l = sz + 2 * pad;
    if (l < f || (l - f) % s != 0) {
      throw Error(ErrorCode::kIndivisibleExtent, "oracle extent");
    }
    sz = (l - f + s) / s;
  }
  return out;
}

// Calls fn(offset_index, input_coord) for every in-bounds receptive-field
// cell of output `q`.
template <typename Fn>
void for_each_window_cell(const GridShape& in_shape, const Coordinate& q, int f, int s, int pad,
                          Fn&& fn) {
  const int d = in_shape.dim;
  const auto count = ipow(f, d);
  for (std::int64_t off = 0; off < count; ++off) {
    Coordinate p;
    p.batch = q.batch;
    std::int64_t rem = off;
    bool inside = true;
    for (int k = d - 1; k >= 0; --k) {
      auto kk = static_cast<std::size_t>(k);
      std::int32_t i = static_cast<std::int32_t>(rem % f);
      rem /= f;
      std::int32_t x = q.spatial[kk] * s - pad + i;
      if (x < 0 || x >= in_shape.size[kk]) inside = false;
      p.spatial[kk] = x;
    }
    if (inside) fn(off, p);
  }
}

}  // namespace

bool coord_less(const Coordinate& a, const Coordinate& b) {
  if (a.batch != b.batch) return a.batch < b.batch;
  return a.spatial < b.spatial;
}

DenseVolume dense_conv(const DenseVolume& v, const ConvParams& p, int stride, int pad) {
  const int f = p.spec.f;
  const auto m = static_cast<std::size_t>(p.spec.m);
  const auto n = static_cast<std::size_t>(p.spec.n);
  if (v.channels != m) throw Error(ErrorCode::kShapeMismatch, "oracle conv input planes");
  DenseVolume out(v.batch, strided_shape(v.shape, f, stride, pad), n);
  const std::int64_t sites = static_cast<std::int64_t>(out.batch) * out.shape.volume();
  for (std::int64_t s = 0; s < sites; ++s) {
    Coordinate q = out.site_coord(s);
    auto dst = out.at_index(s);
    for (std::size_t b = 0; b < n; ++b) dst[b] = p.bias[b];
    for_each_window_cell(v.shape, q, f, stride, pad, [&](std::int64_t off, const Coordinate& c) {
      auto src = v.at(c);
      for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          dst[b] += src[a] * p.weights[(static_cast<std::size_t>(off) * m + a) * n + b];
        }
      }
    });
  }
  return out;
}

DenseVolume dense_maxpool(const DenseVolume& v, int f, int stride) {
  DenseVolume out(v.batch, strided_shape(v.shape, f, stride, 0), v.channels);
  const std::int64_t sites = static_cast<std::int64_t>(out.batch) * out.shape.volume();
  for (std::int64_t s = 0; s < sites; ++s) {
    auto dst = out.at_index(s);  // starts at zero: max includes the zero vector
    for_each_window_cell(v.shape, out.site_coord(s), f, stride, 0,
                         [&](std::int64_t, const Coordinate& c) {
                           auto src = v.at(c);
                           for (std::size_t ch = 0; ch < v.channels; ++ch) {
                             dst[ch] = std::max(dst[ch], src[ch]);
                           }
                         });
  }
  return out;
}

DenseVolume dense_avgpool(const DenseVolume& v, int f, int stride) {
  DenseVolume out(v.batch, strided_shape(v.shape, f, stride, 0), v.channels);
  const std::int64_t sites = static_cast<std::int64_t>(out.batch) * out.shape.volume();
  const double window = static_cast<double>(ipow(f, v.shape.dim));
  for (std::int64_t s = 0; s < sites; ++s) {
    auto dst = out.at_index(s);
    for_each_window_cell(v.shape, out.site_coord(s), f, stride, 0,
                         [&](std::int64_t, const Coordinate& c) {
                           auto src = v.at(c);
                           for (std::size_t ch = 0; ch < v.channels; ++ch) dst[ch] += src[ch];
                         });
    for (auto& x : dst) x = static_cast<Real>(x / window);
  }
  return out;
}

DenseVolume dense_relu(const DenseVolume& v) {
  DenseVolume out = v;
  for (auto& x : out.values) x = std::max(x, Real(0));
  return out;
}

DenseVolume dense_batchnorm(const DenseVolume& v, const std::vector<bool>& mask,
                            std::span<const Real> gamma, std::span<const Real> beta, Real eps) {
  const std::int64_t sites = static_cast<std::int64_t>(v.batch) * v.shape.volume();
  const std::size_t c = v.channels;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  double count = 0;
  for (std::int64_t s = 0; s < sites; ++s) {
    if (!mask[static_cast<std::size_t>(s)]) continue;
    count += 1;
    auto x = v.at_index(s);
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[ch];
  }
  for (auto& mu : mean) mu /= count;
  for (std::int64_t s = 0; s < sites; ++s) {
    if (!mask[static_cast<std::size_t>(s)]) continue;
    auto x = v.at_index(s);
    for (std::size_t ch = 0; ch < c; ++ch) var[ch] += (x[ch] - mean[ch]) * (x[ch] - mean[ch]);
  }
  for (auto& s2 : var) s2 /= count;
  DenseVolume out(v.batch, v.shape, c);
  for (std::int64_t s = 0; s < sites; ++s) {
    if (!mask[static_cast<std::size_t>(s)]) continue;
    auto x = v.at_index(s);
    auto y = out.at_index(s);
    for (std::size_t ch = 0; ch < c; ++ch) {
      y[ch] = static_cast<Real>(gamma[ch] * (x[ch] - mean[ch]) / std::sqrt(var[ch] + eps) +
                                beta[ch]);
    }
  }
  return out;
}

std::vector<bool> active_mask(const SparseGrid& g) {
  DenseVolume probe;
  probe.batch = g.batch_size();
  probe.shape = g.shape();
  probe.channels = 1;
  std::vector<bool> mask(static_cast<std::size_t>(probe.batch * probe.shape.volume()), false);
  for (const auto& c : g.sites().coords()) mask[static_cast<std::size_t>(probe.site_index(c))] = true;
  return mask;
}

std::vector<Coordinate> active_set(const SiteMap& sites) {
  std::vector<Coordinate> out(sites.coords().begin(), sites.coords().end());
  std::sort(out.begin(), out.end(), coord_less);
  return out;
}

std::vector<Coordinate> propagate_active(std::span<const Coordinate> active, const GridShape& shape,
                                         std::int32_t batch_size, int f, int s, int pad) {
  // Dense occupancy bitmap of the input, then every output site checks its
  // whole receptive field.
  DenseVolume in_index;
  in_index.batch = batch_size;
  in_index.shape = shape;
  in_index.channels = 1;
  std::vector<bool> occupied(static_cast<std::size_t>(batch_size * shape.volume()), false);
  for (const auto& c : active) occupied[static_cast<std::size_t>(in_index.site_index(c))] = true;

  DenseVolume out_index;
  out_index.batch = batch_size;
  out_index.shape = strided_shape(shape, f, s, pad);
  out_index.channels = 1;
  std::vector<Coordinate> out;
  const std::int64_t sites = static_cast<std::int64_t>(batch_size) * out_index.shape.volume();
  for (std::int64_t site = 0; site < sites; ++site) {
    Coordinate q = out_index.site_coord(site);
    bool hit = false;
    for_each_window_cell(shape, q, f, s, pad, [&](std::int64_t, const Coordinate& c) {
      if (occupied[static_cast<std::size_t>(in_index.site_index(c))]) hit = true;
    });
    if (hit) out.push_back(q);
  }
  std::sort(out.begin(), out.end(), coord_less);
  return out;
}

Real max_abs_diff_at_active(const SparseGrid& g, const DenseVolume& dense) {
  if (dense.channels != g.num_features()) {
    throw Error(ErrorCode::kShapeMismatch, "oracle comparison plane count");
  }
  Real worst = 0;
  for (std::size_t r = 0; r < g.active_count(); ++r) {
    auto a = g.features().row(r);
    auto b = dense.at(g.sites().coord(r));
    for (std::size_t c = 0; c < a.size(); ++c) worst = std::max(worst, std::abs(a[c] - b[c]));
  }
  return worst;
}

}  // namespace subm::oracle
