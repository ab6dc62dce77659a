#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "subm/grid.hpp"

namespace subm {

struct Sample {
  SparseGrid grid;  // batch size 1
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int classes = 0;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

// Fraction of lattice sites that are active.
double density(const SparseGrid& g);
double mean_density(const Dataset& ds);

inline constexpr int kStrokeTemplates = 10;
inline constexpr int kSurfaceTemplates = 7;

/// 2D pen strokes: class c is template c rasterized with seeded jitter
/// (rotation, translation, vertex noise). One feature plane, 1.0 on every
/// pixel the curve passes through. Sample order is class-major.
Dataset gen_strokes(int classes, int per_class, std::int32_t extent, std::uint64_t seed);

/// 3D hollow shells of parametric solids with jittered scale and rotation,
/// one voxel thick. Sample order is class-major.
Dataset gen_surfaces(int classes, int per_class, std::int32_t extent, std::uint64_t seed);

/// Voxels whose centre is within half a voxel of the sphere of `radius`
/// about the grid centre.
SparseGrid sphere_shell(std::int32_t extent, double radius);

/// Pixels crossed by the segment (x0,y0)-(x1,y1) in continuous pixel
/// coordinates (pixel (i,j) covers [i,i+1) x [j,j+1)), in traversal order.
std::vector<std::array<std::int32_t, 2>> supercover_line(double x0, double y0, double x1,
                                                         double y1);

// Directory layout <root>/<split>/<label>/<id>.grid.
void save_dataset(const Dataset& ds, const std::string& root, const std::string& split);
Dataset load_dataset(const std::string& root, const std::string& split);

}  // namespace subm
