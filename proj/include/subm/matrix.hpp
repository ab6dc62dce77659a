#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "subm/types.hpp"

namespace subm {

/// Dense row-major matrix used for per-site feature rows and gradients.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  void fill(Real v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// Column-wise concatenation [a | b]; row counts must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);

// Splits columns [0, left_cols) and [left_cols, cols).
void hsplit(const Matrix& m, std::size_t left_cols, Matrix& left, Matrix& right);

}  // namespace subm
