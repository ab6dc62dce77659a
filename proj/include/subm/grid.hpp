#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_set.h>
#include <absl/hash/hash.h>

#include "subm/matrix.hpp"
#include "subm/types.hpp"

namespace subm {

using Extent = std::array<std::int32_t, kMaxDim>;

/// A lattice location within one batch sample. Axes beyond the grid's
/// dimension are held at zero so the key is always comparable and hashable.
struct Coordinate {
  std::int32_t batch = 0;
  std::array<std::int32_t, kMaxDim> spatial{};

  friend bool operator==(const Coordinate&, const Coordinate&) = default;

  template <typename H>
  friend H AbslHashValue(H h, const Coordinate& c) {
    return H::combine(std::move(h), c.batch, c.spatial[0], c.spatial[1], c.spatial[2],
                      c.spatial[3]);
  }
};

std::string to_string(const Coordinate& c, int dim);

/// Geometry shared by every grid at one resolution.
struct GridShape {
  int dim = 2;
  Extent size{1, 1, 1, 1};

  std::int64_t volume() const;
  bool contains(const Coordinate& c) const;
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

GridShape make_shape(std::span<const std::int32_t> size);

/// The active-site hash table: coordinate -> row, with rows numbered in
/// insertion order. Immutable once published behind a shared_ptr; any number
/// of feature matrices (one per layer) can share one SiteMap.
///
/// The table holds row numbers only and reads keys back from coords(). The
/// hasher points into this object, so it is neither copyable nor movable.
class SiteMap {
 public:
  SiteMap(GridShape shape, std::int32_t batch_size);
  SiteMap(const SiteMap&) = delete;
  SiteMap& operator=(const SiteMap&) = delete;

  const GridShape& shape() const noexcept { return shape_; }
  int dim() const noexcept { return shape_.dim; }
  std::int32_t batch_size() const noexcept { return batch_size_; }
  std::size_t size() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }

  std::optional<std::int32_t> find(const Coordinate& c) const {
    auto it = rows_.find(c);
    if (it == rows_.end()) return std::nullopt;
    return *it;
  }
  const Coordinate& coord(std::size_t row) const noexcept { return coords_[row]; }
  std::span<const Coordinate> coords() const noexcept { return coords_; }

  // Construction only. Returns (row, inserted).
  std::pair<std::int32_t, bool> insert(const Coordinate& c);
  void reserve(std::size_t n);
  void set_batch_size(std::int32_t b) { batch_size_ = b; }

  // Same coordinates in the same row order.
  bool same_sites(const SiteMap& other) const;

 private:
  GridShape shape_;
  std::int32_t batch_size_;
  std::vector<Coordinate> coords_;
  struct RowHash {
    using is_transparent = void;
    const std::vector<Coordinate>* coords;
    std::size_t operator()(const Coordinate& c) const { return absl::Hash<Coordinate>{}(c); }
    std::size_t operator()(std::int32_t row) const {
      return (*this)((*coords)[static_cast<std::size_t>(row)]);
    }
  };
  struct RowEq {
    using is_transparent = void;
    const std::vector<Coordinate>* coords;
    const Coordinate& key(std::int32_t row) const { return (*coords)[static_cast<std::size_t>(row)]; }
    const Coordinate& key(const Coordinate& c) const { return c; }
    template <typename A, typename B>
    bool operator()(const A& a, const B& b) const { return key(a) == key(b); }
  };

  absl::flat_hash_set<std::int32_t, RowHash, RowEq> rows_;
};

using SiteMapPtr = std::shared_ptr<const SiteMap>;

/// Batch of sparse feature grids: active-site table plus an a x m feature
/// matrix whose row r belongs to coordinate sites().coord(r).
class SparseGrid {
 public:
  SparseGrid() = default;
  SparseGrid(SiteMapPtr sites, Matrix features);

  const SiteMapPtr& site_map() const noexcept { return sites_; }
  const SiteMap& sites() const noexcept { return *sites_; }
  const GridShape& shape() const noexcept { return sites_->shape(); }
  int dim() const noexcept { return sites_->dim(); }
  std::int32_t batch_size() const noexcept { return sites_->batch_size(); }
  std::size_t num_features() const noexcept { return features_.cols(); }
  std::size_t active_count() const noexcept { return features_.rows(); }

  const Matrix& features() const noexcept { return features_; }

  std::optional<std::int32_t> lookup(const Coordinate& c) const { return sites_->find(c); }

  // New grid on the same site table with different features.
  SparseGrid with_features(Matrix features) const;

 private:
  SiteMapPtr sites_;
  Matrix features_;
};

struct Point {
  Coordinate coord;
  std::vector<Real> features;
};

/// Builds a grid from points. batch_size defaults to one past the largest
/// batch index seen (or 1 when empty).
SparseGrid grid_from_points(std::span<const Point> points, std::span<const std::int32_t> size,
                            std::size_t num_features,
                            std::optional<std::int32_t> batch_size = std::nullopt);

inline std::size_t active_count(const SparseGrid& g) { return g.active_count(); }
inline std::optional<std::int32_t> lookup(const SparseGrid& g, const Coordinate& c) {
  return g.lookup(c);
}

/// Dense batch x spatial x m tensor. Used by the brute-force oracle only.
struct DenseVolume {
  static constexpr std::int64_t kMaxElements = 10'000'000;

  std::int32_t batch = 1;
  GridShape shape;
  std::size_t channels = 1;
  std::vector<Real> values;

  DenseVolume() = default;
  DenseVolume(std::int32_t batch, GridShape shape, std::size_t channels);

  std::int64_t sites_per_sample() const { return shape.volume(); }
  // Flat site index of an in-bounds coordinate.
  std::int64_t site_index(const Coordinate& c) const;
  Coordinate site_coord(std::int64_t index) const;
  std::span<Real> at(const Coordinate& c);
  std::span<const Real> at(const Coordinate& c) const;
  std::span<Real> at_index(std::int64_t site);
  std::span<const Real> at_index(std::int64_t site) const;
};

DenseVolume grid_to_dense(const SparseGrid& g);
SparseGrid grid_from_dense(const DenseVolume& v, Real threshold);

// Text format: header "# d=<d> size=<l1,..,ld> m=<m>", then one site per
// line "batch x1 .. xd | f1 .. fm" in row order.
void write_grid_text(std::ostream& os, const SparseGrid& g);
SparseGrid read_grid_text(std::istream& is);
void save_grid_file(const SparseGrid& g, const std::string& path);
SparseGrid load_grid_file(const std::string& path);

}  // namespace subm
