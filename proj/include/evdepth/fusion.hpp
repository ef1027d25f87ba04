#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "evdepth/depth_estimation.hpp"
#include "evdepth/geometry.hpp"
#include "evdepth/image.hpp"

namespace evdepth {

// 95% quantile of chi-square with two degrees of freedom.
inline constexpr double kChi2Threshold95 = 5.99;
inline constexpr double kDefaultConfidenceFactor = 0.8;

struct GaussianInverseDepth {
  double rho = 0.0;
  double sigma2 = 0.0;

  bool valid() const { return rho > 0.0 && sigma2 > 0.0 && std::isfinite(rho) && std::isfinite(sigma2); }
  friend bool operator==(const GaussianInverseDepth&, const GaussianInverseDepth&) = default;
};

struct Reprojection {
  Vec2 xf;  // subpixel location in the target view
  GaussianInverseDepth estimate;
};

namespace detail {

inline double transferred_inverse_depth(const Vec2& x, double rho, const SE3& target_from_source,
                                        const RectifiedCamera& cam) {
  return 1.0 / (target_from_source * back_project(x, rho, cam)).z();
}

}  // namespace detail

// Moves an estimate at pixel x of a source view into the target view. The
// variance follows the first-order sensitivity of the transferred inverse
// depth, taken by central difference.
inline std::optional<Reprojection> reproject_estimate(const Vec2& x, const GaussianInverseDepth& est,
                                                      const SE3& target_from_source, const RectifiedCamera& cam) {
  const Vec3 p = target_from_source * back_project(x, est.rho, cam);
  if (!(p.z() > kDegenerateWarpThreshold)) return std::nullopt;
  const Vec2 xf = project(cam, p);
  if (!cam.contains(xf)) return std::nullopt;

  const double h = 1e-6 * est.rho;
  const double zp = (target_from_source * back_project(x, est.rho + h, cam)).z();
  const double zm = (target_from_source * back_project(x, est.rho - h, cam)).z();
  if (!(zp > 0.0) || !(zm > 0.0)) return std::nullopt;
  const double slope = (1.0 / zp - 1.0 / zm) / (2.0 * h);
  return Reprojection{xf, {1.0 / p.z(), slope * slope * est.sigma2}};
}

// Integer pixels of the unit cell containing xf (floor/ceil per axis, so an
// integer coordinate collapses that axis), clipped to the image, row-major.
inline std::vector<PixelCoord> neighbor_targets(const Vec2& xf, int width, int height) {
  const int u0 = static_cast<int>(std::floor(xf.x()));
  const int v0 = static_cast<int>(std::floor(xf.y()));
  const int u1 = static_cast<int>(std::ceil(xf.x()));
  const int v1 = static_cast<int>(std::ceil(xf.y()));
  std::vector<PixelCoord> out;
  out.reserve(4);
  for (int v : {v0, v1}) {
    for (int u : {u0, u1}) {
      if (u < 0 || v < 0 || u >= width || v >= height) continue;
      const PixelCoord p{u, v};
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
  }
  return out;
}

inline double chi2_statistic(const GaussianInverseDepth& a, const GaussianInverseDepth& b) {
  const double d2 = (a.rho - b.rho) * (a.rho - b.rho);
  return d2 / a.sigma2 + d2 / b.sigma2;
}

inline bool chi2_compatible(const GaussianInverseDepth& a, const GaussianInverseDepth& b) {
  return chi2_statistic(a, b) < kChi2Threshold95;
}

// Product of the two Gaussians. Only defined for compatible pairs.
inline GaussianInverseDepth fuse(const GaussianInverseDepth& a, const GaussianInverseDepth& b) {
  if (!chi2_compatible(a, b)) {
    throw Error(ErrorCode::kContractViolation, "fuse called on chi-square incompatible estimates");
  }
  // Canonical operand order plus the ratio form k = lo / hi keep the result
  // bitwise symmetric and make self-fusion halve the variance exactly.
  const bool a_first = a.sigma2 < b.sigma2 || (a.sigma2 == b.sigma2 && a.rho <= b.rho);
  const GaussianInverseDepth& lo = a_first ? a : b;
  const GaussianInverseDepth& hi = a_first ? b : a;
  const double k = lo.sigma2 / hi.sigma2;
  return {lo.rho + (hi.rho - lo.rho) * (k / (1.0 + k)), lo.sigma2 / (1.0 + k)};
}

struct FusionStats {
  std::size_t assigned = 0;  // empty cell received a distribution
  std::size_t fused = 0;
  std::size_t replaced = 0;  // incompatible, incoming had smaller variance
  std::size_t kept = 0;      // incompatible, existing had smaller variance
  std::size_t dropped = 0;   // estimates that did not reproject into the view

  FusionStats& operator+=(const FusionStats& o) {
    assigned += o.assigned;
    fused += o.fused;
    replaced += o.replaced;
    kept += o.kept;
    dropped += o.dropped;
    return *this;
  }
};

struct ScenePoint {
  Vec3 position;  // world frame, meters
  PixelCoord pixel;
  double rho = 0.0;
  double sigma2 = 0.0;
};

// Inverse-depth beliefs accumulated in the chosen reference view.
class FusionGrid {
 public:
  FusionGrid(int width, int height) : cells_(width, height) {}

  int width() const { return cells_.width(); }
  int height() const { return cells_.height(); }

  const std::optional<GaussianInverseDepth>& at(int u, int v) const { return cells_(u, v); }
  const std::optional<GaussianInverseDepth>& at(PixelCoord p) const { return cells_(p.u, p.v); }

  // Assign / fuse / keep-smaller-variance update of one cell.
  void update(PixelCoord p, const GaussianInverseDepth& incoming, FusionStats& stats) {
    auto& cell = cells_(p.u, p.v);
    if (!cell) {
      cell = incoming;
      ++stats.assigned;
    } else if (chi2_compatible(incoming, *cell)) {
      cell = fuse(incoming, *cell);
      ++stats.fused;
    } else if (incoming.sigma2 < cell->sigma2) {
      cell = incoming;
      ++stats.replaced;
    } else {
      ++stats.kept;
    }
  }

  // Transfers a view's estimates (row-major) into the grid.
  FusionStats fuse_view(std::span<const InverseDepthEstimate> estimates, const SE3& target_from_source,
                        const RectifiedCamera& cam) {
    FusionStats stats;
    for (const InverseDepthEstimate& e : estimates) {
      const GaussianInverseDepth g{e.rho, e.sigma2};
      if (!g.valid()) {
        ++stats.dropped;
        continue;
      }
      const auto r = reproject_estimate(Vec2(e.pixel.u, e.pixel.v), g, target_from_source, cam);
      if (!r || !r->estimate.valid()) {
        ++stats.dropped;
        continue;
      }
      for (const PixelCoord& p : neighbor_targets(r->xf, width(), height())) update(p, r->estimate, stats);
    }
    return stats;
  }

  std::size_t assigned_count() const {
    return static_cast<std::size_t>(std::count_if(cells_.data().begin(), cells_.data().end(),
                                                  [](const auto& c) { return c.has_value(); }));
  }

  // Largest variance among assigned cells; 0 for an empty grid.
  double max_variance() const {
    double m = 0.0;
    for (const auto& c : cells_.data())
      if (c) m = std::max(m, c->sigma2);
    return m;
  }

  double mean_variance() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells_.data()) {
      if (c) {
        s += c->sigma2;
        ++n;
      }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  }

  template <typename Fn>
  void for_each_assigned(Fn&& fn) const {
    for (int v = 0; v < height(); ++v)
      for (int u = 0; u < width(); ++u)
        if (const auto& c = cells_(u, v)) fn(PixelCoord{u, v}, *c);
  }

 private:
  Image<std::optional<GaussianInverseDepth>> cells_;
};

// Cells with sigma^2 < factor * max sigma^2, back-projected to the world.
inline std::vector<ScenePoint> filter_confident(const FusionGrid& grid, const RectifiedCamera& cam,
                                                const SE3& world_from_cam,
                                                double factor = kDefaultConfidenceFactor) {
  std::vector<ScenePoint> points;
  const double limit = factor * grid.max_variance();
  grid.for_each_assigned([&](PixelCoord p, const GaussianInverseDepth& g) {
    if (!(g.sigma2 < limit)) return;
    const Vec3 world = world_from_cam * back_project(Vec2(p.u, p.v), g.rho, cam);
    points.push_back({world, p, g.rho, g.sigma2});
  });
  return points;
}

}  // namespace evdepth
