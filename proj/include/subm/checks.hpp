#pragma once

// Property and oracle suites shared by the test binaries and `subm check`.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "subm/grid.hpp"
#include "subm/ops.hpp"

namespace subm::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

// --- random instances ------------------------------------------------------

struct GridSpec {
  int dim = 2;
  std::int32_t extent = 8;   // per axis
  std::size_t max_active = 20;
  std::size_t planes = 1;
  std::int32_t batch = 1;
};

/// Up to max_active distinct sites (at least one) with features in [-1, 1].
SparseGrid random_grid(std::mt19937_64& rng, const GridSpec& spec);

/// Random ConvParams with weights and bias in [-1, 1].
ConvParams random_params(std::mt19937_64& rng, const ConvSpec& spec);

// --- gradient checking -----------------------------------------------------

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradFloor = 1e-3;

/// |a - n| / max(|a|, |n|, kGradFloor).
double relative_error(double analytic, double numeric);

/// Largest relative error between `analytic` and central differences of
/// `loss` with respect to every entry of `x` (restored afterwards).
double max_grad_error(std::span<Real> x, std::span<const Real> analytic,
                      const std::function<double()>& loss, double h = kGradStep);

// --- suites ----------------------------------------------------------------

CheckResult check_dilation();
CheckResult check_vsc_invariance(std::uint64_t seed, int grids);
CheckResult check_sc_matches_propagation(std::uint64_t seed, int instances);
CheckResult check_dense_equivalence(std::uint64_t seed, int instances, double tol);
CheckResult check_gradients(std::uint64_t seed, int instances, double tol);
CheckResult check_cost_identities(std::uint64_t seed, int instances);
CheckResult check_dc_inversion(std::uint64_t seed, int instances);
CheckResult check_kernel_equivalence(std::uint64_t seed, int instances);

/// Every suite at its default size.
std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace subm::checks
