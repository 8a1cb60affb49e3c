#pragma once

#include <cstddef>
#include <span>

#include "streamvc/error.hpp"
#include "streamvc/pitch.hpp"

namespace streamvc {

// Correlation is undefined: fewer than two usable points or a constant
// series.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

// Pearson correlation of two equal-length series.
double pearson(std::span<const double> a, std::span<const double> b);

struct PccResult {
  double pcc = 0.0;
  std::size_t jointly_voiced = 0;
};

// Pearson correlation of two f0 contours over the frames voiced in both.
// Throws ArgumentError on length mismatch and UndefinedCorrelationError
// with fewer than two jointly voiced frames.
PccResult f0_pcc(std::span<const F0Point> a, std::span<const F0Point> b);

// Index of the Yin track the f0 consistency metric reads (threshold 0.10).
inline constexpr std::size_t kPccTrack = 1;

}  // namespace streamvc
