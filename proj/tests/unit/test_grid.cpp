#include <random>
#include <sstream>

#include "helpers.hpp"
#include "subm/checks.hpp"
#include "subm/oracle.hpp"

namespace subm {
namespace {

using test::at;
using test::make_grid;

TEST(Grid, EmptyPointListGivesEmptyGrid) {
  SparseGrid g = make_grid({5, 5}, 1, {});
  EXPECT_EQ(active_count(g), 0u);
  EXPECT_TRUE(g.features().empty());
}

TEST(Grid, Singleton) {
  SparseGrid g = make_grid({5, 5}, 1, {{{2, 2}, {1.0}}});
  ASSERT_EQ(active_count(g), 1u);
  EXPECT_EQ(g.features()(0, 0), 1.0);
  EXPECT_EQ(lookup(g, at({2, 2})), 0);
  EXPECT_FALSE(lookup(g, at({0, 0})).has_value());
}

TEST(Grid, RejectsDuplicateCoordinates) {
  EXPECT_THROW_CODE(make_grid({5, 5}, 1, {{{1, 1}, {1.0}}, {{1, 1}, {2.0}}}),
                    ErrorCode::kDuplicateCoordinate);
}

TEST(Grid, SameSpatialSiteInTwoBatchesIsNotADuplicate) {
  SparseGrid g = make_grid({5, 5}, 1, {{{1, 1}, {1.0}, 0}, {{1, 1}, {2.0}, 1}}, 2);
  EXPECT_EQ(active_count(g), 2u);
  EXPECT_EQ(lookup(g, at({1, 1}, 1)), 1);
}

TEST(Grid, RejectsOutOfBoundsAndBadFeatureLength) {
  EXPECT_THROW_CODE(make_grid({5, 5}, 1, {{{5, 0}, {1.0}}}), ErrorCode::kOutOfBounds);
  EXPECT_THROW_CODE(make_grid({5, 5}, 1, {{{-1, 0}, {1.0}}}), ErrorCode::kOutOfBounds);
  EXPECT_THROW_CODE(make_grid({5, 5}, 2, {{{0, 0}, {1.0}}}), ErrorCode::kFeatureLengthMismatch);
}

TEST(Grid, RowsFollowInsertionOrder) {
  SparseGrid g = make_grid({4, 4}, 1, {{{3, 3}, {1.0}}, {{0, 0}, {2.0}}, {{2, 1}, {3.0}}});
  EXPECT_EQ(g.sites().coord(0), at({3, 3}));
  EXPECT_EQ(g.sites().coord(1), at({0, 0}));
  EXPECT_EQ(g.sites().coord(2), at({2, 1}));
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(lookup(g, g.sites().coord(r)), static_cast<int>(r));
}

TEST(SiteMap, GrowsWithoutReserveAndKeepsRows) {
  SiteMap m(make_shape(std::vector<std::int32_t>{300, 300}), 2);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::int32_t> u(0, 299);
  std::vector<Coordinate> seen;
  for (int i = 0; i < 20000; ++i) {
    Coordinate c;
    c.batch = i % 2;
    c.spatial = {u(rng), u(rng), 0, 0};
    auto [row, inserted] = m.insert(c);
    if (inserted) {
      EXPECT_EQ(row, static_cast<std::int32_t>(seen.size()));
      seen.push_back(c);
    } else {
      EXPECT_EQ(m.coord(static_cast<std::size_t>(row)), c);
    }
  }
  ASSERT_EQ(m.size(), seen.size());
  for (std::size_t r = 0; r < seen.size(); ++r) EXPECT_EQ(m.find(seen[r]), static_cast<std::int32_t>(r));
  Coordinate absent;
  absent.batch = 2;
  EXPECT_FALSE(m.find(absent).has_value());
}

TEST(Grid, EmptyGridToDenseIsZero) {
  SparseGrid g = make_grid({3, 3}, 2, {});
  DenseVolume v = grid_to_dense(g);
  EXPECT_EQ(v.values.size(), 18u);
  for (Real x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(Grid, SingletonToDense) {
  DenseVolume v = grid_to_dense(make_grid({5, 5}, 1, {{{2, 2}, {1.0}}}));
  for (std::int64_t i = 0; i < v.sites_per_sample(); ++i) {
    const Coordinate c = v.site_coord(i);
    EXPECT_EQ(v.at_index(i)[0], c == at({2, 2}) ? 1.0 : 0.0);
  }
}

TEST(Grid, DenseTooLarge) {
  SparseGrid g = make_grid({4000, 4000}, 1, {});
  EXPECT_THROW_CODE(grid_to_dense(g), ErrorCode::kDenseTooLarge);
}

TEST(Grid, FromDenseThreshold) {
  DenseVolume v(1, make_shape(std::vector<std::int32_t>{3, 3}), 2);
  EXPECT_EQ(active_count(grid_from_dense(v, 0)), 0u);
  v.at(at({1, 2}))[1] = 0.5;
  EXPECT_EQ(active_count(grid_from_dense(v, 0.4)), 1u);
  EXPECT_EQ(active_count(grid_from_dense(v, 0.6)), 0u);
  EXPECT_THROW_CODE(grid_from_dense(v, -1), ErrorCode::kInvalidArgument);
}

TEST(Grid, DenseRoundTripKeepsActiveSetAndFeatures) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    SparseGrid g = checks::random_grid(rng, {.dim = 2, .extent = 8, .max_active = 20, .planes = 2});
    SparseGrid back = grid_from_dense(grid_to_dense(g), 0);
    // Random features are nonzero with probability one.
    ASSERT_EQ(back.active_count(), g.active_count());
    for (std::size_t r = 0; r < g.active_count(); ++r) {
      auto row = back.lookup(g.sites().coord(r));
      ASSERT_TRUE(row.has_value());
      for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(back.features()(static_cast<std::size_t>(*row), j), g.features()(r, j));
      }
    }
  }
}

TEST(GridText, RoundTrip) {
  std::mt19937_64 rng(9);
  SparseGrid g = checks::random_grid(rng, {.dim = 3, .extent = 6, .max_active = 30, .planes = 3,
                                           .batch = 2});
  std::stringstream ss;
  write_grid_text(ss, g);
  SparseGrid back = read_grid_text(ss);
  EXPECT_EQ(back.shape(), g.shape());
  EXPECT_TRUE(back.sites().same_sites(g.sites()));
  EXPECT_EQ(back.features(), g.features());
}

TEST(GridText, HeaderFormat) {
  std::stringstream ss;
  write_grid_text(ss, make_grid({5, 4}, 1, {{{2, 1}, {0.5}}}));
  EXPECT_EQ(ss.str(), "# d=2 size=5,4 m=1\n0 2 1 | 0.5\n");
}

TEST(GridText, MissingBarIsParseErrorWithLine) {
  std::stringstream ss("# d=2 size=5,5 m=1\n0 1 1 | 1\n0 2 2 1\n");
  try {
    read_grid_text(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(GridText, WrongCoordinateCount) {
  std::stringstream ss("# d=2 size=5,5 m=1\n0 1 1 1 | 1\n");
  EXPECT_THROW_CODE(read_grid_text(ss), ErrorCode::kParseError);
}

TEST(GridText, BadHeader) {
  std::stringstream a("0 1 1 | 1\n");
  EXPECT_THROW_CODE(read_grid_text(a), ErrorCode::kHeaderMismatch);
  std::stringstream b("# d=3 size=5,5 m=1\n");
  EXPECT_THROW_CODE(read_grid_text(b), ErrorCode::kHeaderMismatch);
  std::stringstream c("");
  EXPECT_THROW_CODE(read_grid_text(c), ErrorCode::kHeaderMismatch);
}

TEST(GridText, OutOfBoundsCoordinateRejected) {
  std::stringstream ss("# d=2 size=5,5 m=1\n0 7 1 | 1\n");
  EXPECT_THROW_CODE(read_grid_text(ss), ErrorCode::kOutOfBounds);
}

}  // namespace
}  // namespace subm
