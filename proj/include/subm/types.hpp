#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace subm {

#ifdef SUBM_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Grid dimensions are capped at 4; Coordinate stores a fixed-size array.
inline constexpr int kMaxDim = 4;

enum class ErrorCode {
  kOutOfBounds,
  kDuplicateCoordinate,
  kFeatureLengthMismatch,
  kDenseTooLarge,
  kInvalidArgument,
  kIndivisibleExtent,
  kEvenFilterForVSC,
  kStridedVSC,
  kShapeMismatch,
  kStaleRuleBook,
  kTooFewActiveSites,
  kMissingSample,
  kMultipleSites,
  kActiveSetMismatch,
  kPlaneMismatch,
  kGeometryMismatch,
  kLabelOutOfRange,
  kEmptyDataset,
  kExtentTooSmall,
  kParseError,
  kHeaderMismatch,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Integer power for small exponents (f^d offset counts, cost formulas).
constexpr std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace subm
