#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "subm/data.hpp"

namespace subm {
namespace {

struct Pt {
  double x, y;
};
using Polyline = std::vector<Pt>;
using Template = std::vector<Polyline>;

constexpr double kPi = std::numbers::pi;

Polyline parametric(int steps, double t0, double t1, auto&& fn) {
  Polyline out;
  for (int i = 0; i <= steps; ++i) out.push_back(fn(t0 + (t1 - t0) * i / steps));
  return out;
}

Polyline circle(double r) {
  return parametric(48, 0, 2 * kPi, [r](double t) { return Pt{r * std::cos(t), r * std::sin(t)}; });
}

// Templates live in [-1, 1]^2.
Template make_template(int c) {
  switch (c) {
    case 0:
      return {circle(0.85)};
    case 1:
      return {{{-0.75, -0.75}, {0.75, -0.75}, {0.75, 0.75}, {-0.75, 0.75}, {-0.75, -0.75}}};
    case 2:
      return {{{0.0, -0.85}, {0.8, 0.65}, {-0.8, 0.65}, {0.0, -0.85}}};
    case 3:
      return {{{-0.8, -0.8}, {0.8, 0.8}}, {{-0.8, 0.8}, {0.8, -0.8}}};
    case 4:
      return {circle(0.8), {{-0.8, 0.0}, {0.8, 0.0}}, {{0.0, -0.8}, {0.0, 0.8}}};
    case 5:
      return {parametric(48, -0.9, 0.9,
                         [](double x) { return Pt{x, 0.55 * std::sin(3 * kPi * (x + 0.9) / 1.8)}; })};
    case 6:
      return {parametric(96, 0, 5 * kPi, [](double t) {
        const double r = 0.1 + 0.8 * t / (5 * kPi);
        return Pt{r * std::cos(t), r * std::sin(t)};
      })};
    case 7:
      return {parametric(64, 0, 2 * kPi,
                         [](double t) { return Pt{0.7 * std::sin(2 * t), 0.85 * std::sin(t)}; })};
    case 8:
      return {{{-0.8, -0.8}, {0.8, -0.8}, {-0.8, 0.8}, {0.8, 0.8}}};
    case 9: {
      Polyline star;
      for (int k = 0; k <= 5; ++k) {
        const double a = kPi / 2 + k * 4 * kPi / 5;
        star.push_back({0.85 * std::cos(a), 0.85 * std::sin(a)});
      }
      return {star};
    }
    default:
      throw Error(ErrorCode::kInvalidArgument, "stroke template index out of range");
  }
}

// Pen half-width in pixels; every segment is traced at +-kPen across its
// direction so the stroke is roughly two pixels wide.
constexpr double kPen = 0.35;

SparseGrid render_stroke(int c, std::int32_t extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-10.0, 10.0);
  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.03);

  const double theta = angle(rng) * kPi / 180.0;
  const double tx = shift(rng), ty = shift(rng);
  const double radius = 0.42 * extent;
  const double centre = extent / 2.0;
  const double hi = std::nextafter(static_cast<double>(extent), 0.0);
  auto to_pixel = [&](Pt p) {
    const double x = std::cos(theta) * p.x - std::sin(theta) * p.y;
    const double y = std::sin(theta) * p.x + std::cos(theta) * p.y;
    return Pt{std::clamp(centre + tx + radius * x, 0.0, hi),
              std::clamp(centre + ty + radius * y, 0.0, hi)};
  };

  std::set<std::array<std::int32_t, 2>> marked;
  for (Polyline line : make_template(c)) {
    for (auto& p : line) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      const Pt a = to_pixel(line[i]), b = to_pixel(line[i + 1]);
      double nx = -(b.y - a.y), ny = b.x - a.x;
      const double len = std::hypot(nx, ny);
      if (len > 0) {
        nx *= kPen / len;
        ny *= kPen / len;
      }
      for (double side : {-1.0, 1.0}) {
        auto clampc = [&](double v) { return std::clamp(v, 0.0, hi); };
        for (const auto& px : supercover_line(clampc(a.x + side * nx), clampc(a.y + side * ny),
                                              clampc(b.x + side * nx), clampc(b.y + side * ny))) {
          marked.insert(px);
        }
      }
    }
  }

  std::vector<Point> pts;
  pts.reserve(marked.size());
  for (const auto& px : marked) {
    Point p;
    p.coord.spatial[0] = px[0];
    p.coord.spatial[1] = px[1];
    p.features = {Real(1)};
    pts.push_back(std::move(p));
  }
  const std::array<std::int32_t, 2> size{extent, extent};
  return grid_from_points(pts, size, 1, 1);
}

}  // namespace

std::vector<std::array<std::int32_t, 2>> supercover_line(double x0, double y0, double x1,
                                                         double y1) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto ix = static_cast<std::int32_t>(std::floor(x0));
  auto iy = static_cast<std::int32_t>(std::floor(y0));
  const auto ex = static_cast<std::int32_t>(std::floor(x1));
  const auto ey = static_cast<std::int32_t>(std::floor(y1));
  const double dx = x1 - x0, dy = y1 - y0;
  const int sx = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int sy = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  double t_max_x = sx > 0 ? (ix + 1 - x0) / dx : sx < 0 ? (x0 - ix) / -dx : inf;
  double t_max_y = sy > 0 ? (iy + 1 - y0) / dy : sy < 0 ? (y0 - iy) / -dy : inf;
  const double t_dx = sx ? 1.0 / std::abs(dx) : inf;
  const double t_dy = sy ? 1.0 / std::abs(dy) : inf;

  std::vector<std::array<std::int32_t, 2>> out{{ix, iy}};
  const int steps = std::abs(ex - ix) + std::abs(ey - iy);
  for (int i = 0; i < steps; ++i) {
    if ((t_max_x < t_max_y && ix != ex) || iy == ey) {
      ix += sx;
      t_max_x += t_dx;
    } else {
      iy += sy;
      t_max_y += t_dy;
    }
    out.push_back({ix, iy});
  }
  return out;
}

Dataset gen_strokes(int classes, int per_class, std::int32_t extent, std::uint64_t seed) {
  if (extent < 16) throw Error(ErrorCode::kExtentTooSmall, "stroke extent must be >= 16");
  if (classes < 2 || classes > kStrokeTemplates) {
    throw Error(ErrorCode::kInvalidArgument,
                "stroke classes must be in [2, " + std::to_string(kStrokeTemplates) + "]");
  }
  if (per_class < 0) throw Error(ErrorCode::kInvalidArgument, "per_class must be >= 0");
  Dataset ds;
  ds.classes = classes;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         0x5354u, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(sseq);
      ds.samples.push_back({render_stroke(c, extent, rng), c});
    }
  }
  return ds;
}

double density(const SparseGrid& g) {
  const double sites = static_cast<double>(g.shape().volume()) * g.batch_size();
  return sites > 0 ? static_cast<double>(g.active_count()) / sites : 0.0;
}

double mean_density(const Dataset& ds) {
  if (ds.empty()) return 0.0;
  double s = 0;
  for (const auto& x : ds.samples) s += density(x.grid);
  return s / static_cast<double>(ds.size());
}

}  // namespace subm
