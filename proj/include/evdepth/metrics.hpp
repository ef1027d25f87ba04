#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "evdepth/export.hpp"
#include "evdepth/fusion.hpp"
#include "evdepth/image.hpp"

namespace evdepth {

// Depth-domain errors against ground truth. relative_error_pct is
// 100 * mean_error / depth_range.
struct ErrorReport {
  double mean_error = 0.0;    // meters
  double median_error = 0.0;  // meters
  double relative_error_pct = 0.0;
  double depth_range = 0.0;  // meters
  std::size_t pixels = 0;
};

// max - min depth over pixels with ground truth (> 0).
inline double depth_range(const Image<double>& gt_inverse_depth) {
  double zmin = std::numeric_limits<double>::infinity(), zmax = 0.0;
  for (double rho : gt_inverse_depth.data()) {
    if (!(rho > 0.0)) continue;
    zmin = std::min(zmin, 1.0 / rho);
    zmax = std::max(zmax, 1.0 / rho);
  }
  return zmax > zmin ? zmax - zmin : 0.0;
}

inline ErrorReport compute_metrics(std::span<const DepthRow> estimates, const Image<double>& gt_inverse_depth,
                                   double range) {
  if (!(range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "depth range must be positive");
  std::vector<double> errors;
  errors.reserve(estimates.size());
  for (const DepthRow& r : estimates) {
    if (!gt_inverse_depth.contains(r.pixel.u, r.pixel.v) || !(r.rho > 0.0)) continue;
    const double gt = gt_inverse_depth(r.pixel.u, r.pixel.v);
    if (!(gt > 0.0)) continue;
    errors.push_back(std::abs(1.0 / r.rho - 1.0 / gt));
  }
  if (errors.empty()) throw Error(ErrorCode::kNoCoverage, "no estimate overlaps the ground truth");

  ErrorReport report;
  report.pixels = errors.size();
  report.depth_range = range;
  double sum = 0.0;
  for (double e : errors) sum += e;
  report.mean_error = sum / static_cast<double>(errors.size());
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  report.median_error = n % 2 == 1 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  report.relative_error_pct = 100.0 * report.mean_error / range;
  return report;
}

inline ErrorReport compute_metrics(const FusionGrid& grid, const Image<double>& gt_inverse_depth, double range) {
  const auto rows = depth_rows(grid);
  return compute_metrics(rows, gt_inverse_depth, range);
}

inline ErrorReport compute_metrics(const FusionGrid& grid, const Image<double>& gt_inverse_depth) {
  return compute_metrics(grid, gt_inverse_depth, depth_range(gt_inverse_depth));
}

}  // namespace evdepth
