#pragma once

// Dense brute-force references. Deliberately naive: every routine walks the
// full dense extent with nested loops and never touches a rule book.

#include <span>
#include <vector>

#include "subm/grid.hpp"
#include "subm/ops.hpp"

namespace subm::oracle {

/// Cross-correlation of a dense volume with f^d (m x n) kernels laid out like
/// ConvParams::weights. Zero padding `pad` on every side, stride `stride`.
/// Bias is added at every output site.
DenseVolume dense_conv(const DenseVolume& v, const ConvParams& p, int stride, int pad = 0);

/// max(0, window values) per channel, no padding.
DenseVolume dense_maxpool(const DenseVolume& v, int f, int stride);
/// f^-d times the window sum per channel, no padding.
DenseVolume dense_avgpool(const DenseVolume& v, int f, int stride);
DenseVolume dense_relu(const DenseVolume& v);

/// Batch norm whose statistics are taken over the sites flagged in `mask`
/// (one flag per dense site); unflagged sites are left at zero.
DenseVolume dense_batchnorm(const DenseVolume& v, const std::vector<bool>& mask,
                            std::span<const Real> gamma, std::span<const Real> beta, Real eps);

std::vector<bool> active_mask(const SparseGrid& g);

/// Sorted list of active coordinates.
std::vector<Coordinate> active_set(const SiteMap& sites);

/// Active sites after a full convolution: an output site is active iff any
/// input in its f^d receptive field (anchored at out*s - pad) is active.
std::vector<Coordinate> propagate_active(std::span<const Coordinate> active, const GridShape& shape,
                                         std::int32_t batch_size, int f, int s, int pad = 0);

/// Largest |sparse - dense| over the sparse grid's active sites.
Real max_abs_diff_at_active(const SparseGrid& g, const DenseVolume& dense);

bool coord_less(const Coordinate& a, const Coordinate& b);

}  // namespace subm::oracle
