#include "streamvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace streamvc {

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("pearson: series lengths differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw UndefinedCorrelationError("pearson: need at least two points");
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) throw UndefinedCorrelationError("pearson: constant series");
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

PccResult f0_pcc(std::span<const F0Point> a, std::span<const F0Point> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("f0 contours differ in length (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + " frames)");
  }
  std::vector<double> xa;
  std::vector<double> xb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].voiced && b[i].voiced) {
      xa.push_back(a[i].hz);
      xb.push_back(b[i].hz);
    }
  }
  if (xa.size() < 2) {
    throw UndefinedCorrelationError("f0 PCC undefined: " + std::to_string(xa.size()) +
                                    " jointly voiced frames (need at least 2)");
  }
  return {pearson(xa, xb), xa.size()};
}

}  // namespace streamvc
