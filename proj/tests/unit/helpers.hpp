#pragma once

#include <gtest/gtest.h>

#include <initializer_list>
#include <vector>

#include "subm/grid.hpp"

namespace subm::test {

struct Site {
  std::vector<std::int32_t> at;
  std::vector<Real> features;
  std::int32_t batch = 0;
};

inline SparseGrid make_grid(std::vector<std::int32_t> size, std::size_t m,
                            std::initializer_list<Site> sites, std::int32_t batch_size = 1) {
  std::vector<Point> pts;
  for (const auto& s : sites) {
    Point p;
    p.coord.batch = s.batch;
    for (std::size_t k = 0; k < s.at.size(); ++k) p.coord.spatial[k] = s.at[k];
    p.features = s.features;
    pts.push_back(std::move(p));
  }
  return grid_from_points(pts, size, m, batch_size);
}

inline Coordinate at(std::initializer_list<std::int32_t> xs, std::int32_t batch = 0) {
  Coordinate c;
  c.batch = batch;
  std::size_t k = 0;
  for (auto x : xs) c.spatial[k++] = x;
  return c;
}

#define EXPECT_THROW_CODE(stmt, expected)                     \
  do {                                                        \
    try {                                                     \
      stmt;                                                   \
      ADD_FAILURE() << "no exception from " #stmt;            \
    } catch (const ::subm::Error& e) {                        \
      EXPECT_EQ(e.code(), expected) << e.what();              \
    }                                                         \
  } while (0)

}  // namespace subm::test
