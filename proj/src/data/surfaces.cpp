#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "subm/data.hpp"

namespace subm {
namespace {

struct Vec3 {
  double x, y, z;
};

double length(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

// Signed distances in voxel units for solids centred at the origin and sized
// for a 30^3 grid at scale 1.
double sdf(int shape, Vec3 p) {
  switch (shape) {
    case 0:  // sphere
      return length(p) - 10.0;
    case 1: {  // box
      const Vec3 q{std::abs(p.x) - 8.0, std::abs(p.y) - 6.0, std::abs(p.z) - 5.0};
      const Vec3 o{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
      return length(o) + std::min(std::max({q.x, q.y, q.z}), 0.0);
    }
    case 2: {  // torus in the xy plane
      const double ring = std::hypot(p.x, p.y) - 8.0;
      return std::hypot(ring, p.z) - 3.0;
    }
    case 3: {  // capped cylinder along z
      const double dr = std::hypot(p.x, p.y) - 6.0;
      const double dz = std::abs(p.z) - 8.0;
      return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    }
    case 4:  // octahedron (bound)
      return (std::abs(p.x) + std::abs(p.y) + std::abs(p.z) - 11.0) / std::numbers::sqrt3;
    case 5: {  // capsule along x
      const double t = std::clamp(p.x, -6.0, 6.0);
      return length({p.x - t, p.y, p.z}) - 5.0;
    }
    case 6: {  // flat disc along z
      const double outer = std::hypot(p.x, p.y) - 8.0;
      const double dz = std::abs(p.z) - 3.0;
      return std::min(std::max(outer, dz), 0.0) +
             std::hypot(std::max(outer, 0.0), std::max(dz, 0.0));
    }
    default:
      throw Error(ErrorCode::kInvalidArgument, "surface template index out of range");
  }
}

struct Rotation {
  double m[3][3];
  Vec3 apply(Vec3 v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

// Rz(c) * Ry(b) * Rx(a), transposed (the inverse) so world points map into
// the solid's frame.
Rotation inverse_rotation(double a, double b, double c) {
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b),
               cc = std::cos(c), sc = std::sin(c);
  const double r[3][3] = {{cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa},
                          {sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa},
                          {-sb, cb * sa, cb * ca}};
  Rotation inv{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) inv.m[i][j] = r[j][i];
  }
  return inv;
}

// Marks every voxel whose centre lies within half a voxel of the surface.
template <typename Fn>
SparseGrid voxelize_band(std::int32_t extent, Fn&& distance) {
  std::vector<Point> pts;
  for (std::int32_t x = 0; x < extent; ++x) {
    for (std::int32_t y = 0; y < extent; ++y) {
      for (std::int32_t z = 0; z < extent; ++z) {
        if (std::abs(distance(Vec3{double(x), double(y), double(z)})) <= 0.5) {
          Point pt;
          pt.coord.spatial = {x, y, z, 0};
          pt.features = {Real(1)};
          pts.push_back(std::move(pt));
        }
      }
    }
  }
  const std::array<std::int32_t, 3> size{extent, extent, extent};
  return grid_from_points(pts, size, 1, 1);
}

SparseGrid render_surface(int shape, std::int32_t extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale_d(0.8, 1.0);
  std::uniform_real_distribution<double> angle(-0.26, 0.26);  // about 15 degrees
  std::uniform_real_distribution<double> shift(-1.0, 1.0);

  const double k = scale_d(rng) * extent / 30.0;
  const Rotation rot = inverse_rotation(angle(rng), angle(rng), angle(rng));
  const Vec3 centre{(extent - 1) / 2.0 + shift(rng), (extent - 1) / 2.0 + shift(rng),
                    (extent - 1) / 2.0 + shift(rng)};
  return voxelize_band(extent, [&](Vec3 w) {
    const Vec3 p = rot.apply({w.x - centre.x, w.y - centre.y, w.z - centre.z});
    // Evaluated in the unit-scale frame and mapped back to voxels.
    return k * sdf(shape, {p.x / k, p.y / k, p.z / k});
  });
}

}  // namespace

SparseGrid sphere_shell(std::int32_t extent, double radius) {
  if (extent < 1) throw Error(ErrorCode::kExtentTooSmall, "extent must be >= 1");
  const double c = (extent - 1) / 2.0;
  return voxelize_band(extent, [&](Vec3 w) {
    return length({w.x - c, w.y - c, w.z - c}) - radius;
  });
}

Dataset gen_surfaces(int classes, int per_class, std::int32_t extent, std::uint64_t seed) {
  if (extent < 16) throw Error(ErrorCode::kExtentTooSmall, "surface extent must be >= 16");
  if (classes < 2 || classes > kSurfaceTemplates) {
    throw Error(ErrorCode::kInvalidArgument,
                "surface classes must be in [2, " + std::to_string(kSurfaceTemplates) + "]");
  }
  if (per_class < 0) throw Error(ErrorCode::kInvalidArgument, "per_class must be >= 0");
  Dataset ds;
  ds.classes = classes;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         0x5346u, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(sseq);
      ds.samples.push_back({render_surface(c, extent, rng), c});
    }
  }
  return ds;
}

}  // namespace subm
