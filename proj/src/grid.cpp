#include "subm/grid.hpp"

#include <algorithm>
#include <cmath>

namespace subm {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kDuplicateCoordinate: return "DuplicateCoordinate";
    case ErrorCode::kFeatureLengthMismatch: return "FeatureLengthMismatch";
    case ErrorCode::kDenseTooLarge: return "DenseTooLarge";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIndivisibleExtent: return "IndivisibleExtent";
    case ErrorCode::kEvenFilterForVSC: return "EvenFilterForVSC";
    case ErrorCode::kStridedVSC: return "StridedVSC";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kStaleRuleBook: return "StaleRuleBook";
    case ErrorCode::kTooFewActiveSites: return "TooFewActiveSites";
    case ErrorCode::kMissingSample: return "MissingSample";
    case ErrorCode::kMultipleSites: return "MultipleSites";
    case ErrorCode::kActiveSetMismatch: return "ActiveSetMismatch";
    case ErrorCode::kPlaneMismatch: return "PlaneMismatch";
    case ErrorCode::kGeometryMismatch: return "GeometryMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kExtentTooSmall: return "ExtentTooSmall";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kHeaderMismatch: return "HeaderMismatch";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch, "matrix data length does not match rows*cols");
  }
}

void Matrix::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::kShapeMismatch, "hconcat row count");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

void hsplit(const Matrix& m, std::size_t left_cols, Matrix& left, Matrix& right) {
  if (left_cols > m.cols()) throw Error(ErrorCode::kShapeMismatch, "hsplit column count");
  left = Matrix(m.rows(), left_cols);
  right = Matrix(m.rows(), m.cols() - left_cols);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(left_cols), left.row(r).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(left_cols), src.end(), right.row(r).begin());
  }
}

// ---------------------------------------------------------------------------
// Coordinates and shapes

std::string to_string(const Coordinate& c, int dim) {
  std::string s = "(" + std::to_string(c.batch) + ";";
  for (int k = 0; k < dim; ++k) {
    if (k) s += ",";
    s += std::to_string(c.spatial[static_cast<std::size_t>(k)]);
  }
  return s + ")";
}

std::int64_t GridShape::volume() const {
  std::int64_t v = 1;
  for (int k = 0; k < dim; ++k) v *= size[static_cast<std::size_t>(k)];
  return v;
}

bool GridShape::contains(const Coordinate& c) const {
  for (int k = 0; k < dim; ++k) {
    auto x = c.spatial[static_cast<std::size_t>(k)];
    if (x < 0 || x >= size[static_cast<std::size_t>(k)]) return false;
  }
  for (int k = dim; k < kMaxDim; ++k) {
    if (c.spatial[static_cast<std::size_t>(k)] != 0) return false;
  }
  return true;
}

GridShape make_shape(std::span<const std::int32_t> size) {
  if (size.empty() || size.size() > static_cast<std::size_t>(kMaxDim)) {
    throw Error(ErrorCode::kInvalidArgument, "grid dimension must be in 1..4");
  }
  GridShape s;
  s.dim = static_cast<int>(size.size());
  s.size = {1, 1, 1, 1};
  for (std::size_t k = 0; k < size.size(); ++k) {
    if (size[k] <= 0) throw Error(ErrorCode::kInvalidArgument, "spatial size must be positive");
    s.size[k] = size[k];
  }
  return s;
}

// ---------------------------------------------------------------------------
// SiteMap

SiteMap::SiteMap(GridShape shape, std::int32_t batch_size)
    : shape_(shape), batch_size_(batch_size), rows_(0, RowHash{&coords_}, RowEq{&coords_}) {}

std::pair<std::int32_t, bool> SiteMap::insert(const Coordinate& c) {
  const auto next = static_cast<std::int32_t>(coords_.size());
  bool inserted = false;
  auto it = rows_.lazy_emplace(c, [&](const auto& construct) {
    coords_.push_back(c);
    construct(next);
    inserted = true;
  });
  return {*it, inserted};
}

void SiteMap::reserve(std::size_t n) {
  coords_.reserve(n);
  rows_.reserve(n);
}

bool SiteMap::same_sites(const SiteMap& other) const {
  return this == &other || (shape_ == other.shape_ && coords_ == other.coords_);
}

// ---------------------------------------------------------------------------
// SparseGrid

SparseGrid::SparseGrid(SiteMapPtr sites, Matrix features)
    : sites_(std::move(sites)), features_(std::move(features)) {
  if (!sites_) throw Error(ErrorCode::kInvalidArgument, "null site map");
  if (features_.rows() != sites_->size()) {
    throw Error(ErrorCode::kShapeMismatch, "feature rows (" + std::to_string(features_.rows()) +
                                               ") != active sites (" +
                                               std::to_string(sites_->size()) + ")");
  }
}

SparseGrid SparseGrid::with_features(Matrix features) const {
  return SparseGrid(sites_, std::move(features));
}

SparseGrid grid_from_points(std::span<const Point> points, std::span<const std::int32_t> size,
                            std::size_t num_features, std::optional<std::int32_t> batch_size) {
  GridShape shape = make_shape(size);
  std::int32_t max_batch = -1;
  for (const auto& p : points) max_batch = std::max(max_batch, p.coord.batch);
  std::int32_t batches = batch_size.value_or(std::max(max_batch + 1, 1));

  auto sites = std::make_shared<SiteMap>(shape, batches);
  sites->reserve(points.size());
  std::vector<Real> feats;
  feats.reserve(points.size() * num_features);
  for (const auto& p : points) {
    if (p.features.size() != num_features) {
      throw Error(ErrorCode::kFeatureLengthMismatch,
                  "expected " + std::to_string(num_features) + " features, got " +
                      std::to_string(p.features.size()));
    }
    if (!shape.contains(p.coord) || p.coord.batch < 0 || p.coord.batch >= batches) {
      throw Error(ErrorCode::kOutOfBounds, to_string(p.coord, shape.dim));
    }
    if (!sites->insert(p.coord).second) {
      throw Error(ErrorCode::kDuplicateCoordinate, to_string(p.coord, shape.dim));
    }
    feats.insert(feats.end(), p.features.begin(), p.features.end());
  }
  Matrix m(points.size(), num_features, std::move(feats));
  return SparseGrid(std::move(sites), std::move(m));
}

// ---------------------------------------------------------------------------
// DenseVolume

DenseVolume::DenseVolume(std::int32_t batch_, GridShape shape_, std::size_t channels_)
    : batch(batch_), shape(shape_), channels(channels_) {
  std::int64_t n = static_cast<std::int64_t>(batch) * shape.volume() *
                   static_cast<std::int64_t>(channels);
  if (n > kMaxElements) {
    throw Error(ErrorCode::kDenseTooLarge, std::to_string(n) + " elements");
  }
  values.assign(static_cast<std::size_t>(n), Real(0));
}

std::int64_t DenseVolume::site_index(const Coordinate& c) const {
  std::int64_t idx = c.batch;
  for (int k = 0; k < shape.dim; ++k) {
    idx = idx * shape.size[static_cast<std::size_t>(k)] + c.spatial[static_cast<std::size_t>(k)];
  }
  return idx;
}

Coordinate DenseVolume::site_coord(std::int64_t index) const {
  Coordinate c;
  for (int k = shape.dim - 1; k >= 0; --k) {
    auto n = shape.size[static_cast<std::size_t>(k)];
    c.spatial[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(index % n);
    index /= n;
  }
  c.batch = static_cast<std::int32_t>(index);
  return c;
}

std::span<Real> DenseVolume::at_index(std::int64_t site) {
  return {values.data() + site * static_cast<std::int64_t>(channels), channels};
}
std::span<const Real> DenseVolume::at_index(std::int64_t site) const {
  return {values.data() + site * static_cast<std::int64_t>(channels), channels};
}
std::span<Real> DenseVolume::at(const Coordinate& c) { return at_index(site_index(c)); }
std::span<const Real> DenseVolume::at(const Coordinate& c) const {
  return at_index(site_index(c));
}

DenseVolume grid_to_dense(const SparseGrid& g) {
  DenseVolume v(g.batch_size(), g.shape(), g.num_features());
  for (std::size_t r = 0; r < g.active_count(); ++r) {
    auto src = g.features().row(r);
    std::copy(src.begin(), src.end(), v.at(g.sites().coord(r)).begin());
  }
  return v;
}

SparseGrid grid_from_dense(const DenseVolume& v, Real threshold) {
  if (!(threshold >= 0)) throw Error(ErrorCode::kInvalidArgument, "threshold must be >= 0");
  auto sites = std::make_shared<SiteMap>(v.shape, v.batch);
  std::vector<Real> feats;
  std::int64_t n_sites = static_cast<std::int64_t>(v.batch) * v.shape.volume();
  for (std::int64_t s = 0; s < n_sites; ++s) {
    auto f = v.at_index(s);
    Real mx = 0;
    for (Real x : f) mx = std::max(mx, std::abs(x));
    if (mx > threshold) {
      sites->insert(v.site_coord(s));
      feats.insert(feats.end(), f.begin(), f.end());
    }
  }
  std::size_t a = sites->size();
  return SparseGrid(std::move(sites), Matrix(a, v.channels, std::move(feats)));
}

}  // namespace subm
