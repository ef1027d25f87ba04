#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <vector>

#include "evdepth/geometry.hpp"
#include "evdepth/image.hpp"
#include "evdepth/rectification.hpp"

namespace evdepth {

inline constexpr double kTimeSurfaceScale = 255.0;
inline constexpr Timestamp kDefaultDecay = 30'000;        // 30 ms
inline constexpr Timestamp kDefaultEventWindow = 10'000;  // 10 ms
inline constexpr int kDefaultPatchWidth = 25;

// Per-pixel timestamp of the most recent event.
class LastSpikeMap {
 public:
  static constexpr Timestamp kUnset = std::numeric_limits<Timestamp>::min();

  LastSpikeMap(int width, int height) : t_last_(width, height, kUnset) {}

  int width() const { return t_last_.width(); }
  int height() const { return t_last_.height(); }

  // In strict mode an event older than the pixel's current t_last is an
  // error; otherwise it is ignored so t_last never decreases.
  void consume(const RectifiedEvent& e, bool strict = true) {
    if (!t_last_.contains(e.u, e.v)) {
      throw Error(ErrorCode::kOutOfRange, "rectified event outside the map");
    }
    Timestamp& slot = t_last_(e.u, e.v);
    if (e.t < slot) {
      if (strict) throw Error(ErrorCode::kOutOfOrder, "event older than pixel's last spike");
      return;
    }
    slot = e.t;
    latest_ = std::max(latest_, e.t);
  }

  bool is_set(int u, int v) const { return t_last_(u, v) != kUnset; }
  Timestamp at(int u, int v) const { return t_last_(u, v); }
  Timestamp latest() const { return latest_; }

  std::size_t count_set() const {
    return static_cast<std::size_t>(
        std::count_if(t_last_.data().begin(), t_last_.data().end(), [](Timestamp t) { return t != kUnset; }));
  }

  const Image<Timestamp>& raw() const { return t_last_; }

 private:
  Image<Timestamp> t_last_;
  Timestamp latest_ = kUnset;
};

// Exponentially decayed time map, continuous values in [0, 255].
struct TimeSurface {
  Image<double> values;
  Timestamp t = 0;
  Timestamp decay = kDefaultDecay;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  double operator()(int u, int v) const { return values(u, v); }
};

inline TimeSurface render(const LastSpikeMap& map, Timestamp t, Timestamp decay = kDefaultDecay) {
  if (decay <= 0) throw Error(ErrorCode::kInvalidArgument, "decay must be positive");
  TimeSurface ts{Image<double>(map.width(), map.height(), 0.0), t, decay};
  const auto& last = map.raw().data();
  auto& out = ts.values.data();
  const double inv_decay = 1.0 / static_cast<double>(decay);
  for (std::size_t i = 0; i < last.size(); ++i) {
    if (last[i] == LastSpikeMap::kUnset) continue;
    const Timestamp age = t - last[i];
    if (age < 0) throw Error(ErrorCode::kNegativeAge, "render time precedes a pixel's last spike");
    out[i] = kTimeSurfaceScale * std::exp(-static_cast<double>(age) * inv_decay);
  }
  return ts;
}

// Bilinear weights shared by every sample of a patch: all samples sit on the
// integer offset grid around the center, so they have the same fractional
// position inside their cells.
struct PatchStencil {
  int u0 = 0;  // top-left cell of the patch footprint
  int v0 = 0;
  double a = 0.0;  // fractional offsets
  double b = 0.0;
  int width = 0;

  // Requires every sample's 2x2 cell to be inside the image.
  static std::optional<PatchStencil> make(const Vec2& center, int patch_width, int image_width, int image_height) {
    if (!center.allFinite()) return std::nullopt;
    const int half = patch_width / 2;
    const double fu = std::floor(center.x());
    const double fv = std::floor(center.y());
    if (fu - half < 0.0 || fv - half < 0.0 || fu + half + 1 > image_width - 1 || fv + half + 1 > image_height - 1) {
      return std::nullopt;
    }
    PatchStencil s;
    s.u0 = static_cast<int>(fu) - half;
    s.v0 = static_cast<int>(fv) - half;
    s.a = center.x() - fu;
    s.b = center.y() - fv;
    s.width = patch_width;
    return s;
  }
};

namespace detail {

inline void check_patch_width(int w) {
  if (w <= 0 || w % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "patch width must be odd and positive");
}

inline PatchStencil require_stencil(const TimeSurface& ts, const Vec2& center, int w) {
  check_patch_width(w);
  auto s = PatchStencil::make(center, w, ts.width(), ts.height());
  if (!s) throw Error(ErrorCode::kBoundary, "patch footprint leaves the image");
  return *s;
}

}  // namespace detail

// w*w bilinear samples around center, row-major.
inline std::vector<double> sample_patch(const TimeSurface& ts, const Vec2& center, int w = kDefaultPatchWidth) {
  const PatchStencil s = detail::require_stencil(ts, center, w);
  const double w00 = (1 - s.a) * (1 - s.b), w10 = s.a * (1 - s.b), w01 = (1 - s.a) * s.b, w11 = s.a * s.b;
  std::vector<double> out(static_cast<std::size_t>(w) * w);
  for (int i = 0; i < w; ++i) {
    const double* r0 = ts.values.row(s.v0 + i) + s.u0;
    const double* r1 = ts.values.row(s.v0 + i + 1) + s.u0;
    for (int j = 0; j < w; ++j) {
      out[static_cast<std::size_t>(i * w + j)] = w00 * r0[j] + w10 * r0[j + 1] + w01 * r1[j] + w11 * r1[j + 1];
    }
  }
  return out;
}

struct PatchGradient {
  std::vector<double> du;
  std::vector<double> dv;
};

// Derivative of the bilinear interpolant at each sample of sample_patch.
// At integer positions the cell to the right/below is used.
inline PatchGradient sample_patch_gradient(const TimeSurface& ts, const Vec2& center, int w = kDefaultPatchWidth) {
  const PatchStencil s = detail::require_stencil(ts, center, w);
  PatchGradient g{std::vector<double>(static_cast<std::size_t>(w) * w),
                  std::vector<double>(static_cast<std::size_t>(w) * w)};
  for (int i = 0; i < w; ++i) {
    const double* r0 = ts.values.row(s.v0 + i) + s.u0;
    const double* r1 = ts.values.row(s.v0 + i + 1) + s.u0;
    for (int j = 0; j < w; ++j) {
      const auto k = static_cast<std::size_t>(i * w + j);
      g.du[k] = (1 - s.b) * (r0[j + 1] - r0[j]) + s.b * (r1[j + 1] - r1[j]);
      g.dv[k] = (1 - s.a) * (r1[j] - r0[j]) + s.a * (r1[j + 1] - r0[j + 1]);
    }
  }
  return g;
}

struct StereoObservation {
  TimeSurface left;
  TimeSurface right;
  Timestamp t = 0;
  SE3 pose_world_from_cam;  // left camera
};

inline StereoObservation make_observation(const LastSpikeMap& left_map, const LastSpikeMap& right_map, Timestamp t,
                                          Timestamp decay, const SE3& pose_world_from_cam) {
  return StereoObservation{render(left_map, t, decay), render(right_map, t, decay), t, pose_world_from_cam};
}

struct ReferenceView {
  std::vector<PixelCoord> mask;  // row-major, unique
  Timestamp t = 0;
  SE3 pose_world_from_cam;
  int width = 0;
  int height = 0;
};

// Pixels that received at least one event in (t - window, t].
inline ReferenceView make_reference_view(std::span<const RectifiedEvent> events, Timestamp t, Timestamp window,
                                         const SE3& pose_world_from_cam, int width, int height) {
  if (window <= 0) throw Error(ErrorCode::kInvalidArgument, "event window must be positive");
  Image<std::uint8_t> hit(width, height, 0);
  const Timestamp start = t - window;
  auto first = std::upper_bound(events.begin(), events.end(), start,
                                [](Timestamp value, const RectifiedEvent& e) { return value < e.t; });
  for (auto it = first; it != events.end() && it->t <= t; ++it) {
    if (hit.contains(it->u, it->v)) hit(it->u, it->v) = 1;
  }
  ReferenceView rv;
  rv.t = t;
  rv.pose_world_from_cam = pose_world_from_cam;
  rv.width = width;
  rv.height = height;
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      if (hit(u, v)) rv.mask.push_back({u, v});
  return rv;
}

// 8-bit PGM for inspection; values are rounded for display only.
inline void write_pgm(const std::filesystem::path& path, const Image<double>& img, double scale = 1.0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (double value : img.data()) {
    const double s = std::clamp(std::round(value * scale), 0.0, 255.0);
    out.put(static_cast<char>(static_cast<std::uint8_t>(s)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace evdepth
