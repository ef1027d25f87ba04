#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "evdepth/calibration.hpp"
#include "evdepth/events.hpp"
#include "evdepth/geometry.hpp"
#include "evdepth/image.hpp"
#include "evdepth/trajectory.hpp"

namespace evdepth::synthetic {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Binary texture on a square cell lattice in plane coordinates (X, Y).
struct PlaneTexture {
  enum class Pattern {
    kRandomCells,   // each cell bright with probability `density`
    kVerticalStep,  // bright for X >= 0, a single vertical edge
  };

  Pattern pattern = Pattern::kRandomCells;
  double cell_size = 0.025;  // meters
  double density = 0.5;
  std::uint64_t seed = 0;

  bool value(std::int64_t i, std::int64_t j) const {
    if (pattern == Pattern::kVerticalStep) return i >= 0;
    const std::uint64_t h = splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(i)) ^
                                       (static_cast<std::uint64_t>(j) * 0xD1B54A32D192ED03ull));
    return static_cast<double>(h >> 11) * 0x1.0p-53 < density;
  }
};

// Plane z = depth in the world frame, restricted to y in [y_min, y_max).
struct FrontalPlane {
  double depth = 1.0;
  double y_min = -std::numeric_limits<double>::infinity();
  double y_max = std::numeric_limits<double>::infinity();
  PlaneTexture texture;
};

struct PlaneScene {
  std::vector<FrontalPlane> planes;
  StereoRig rig;
  std::vector<PoseSample> trajectory;  // left camera, world_from_cam

  double min_depth() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : planes) m = std::min(m, p.depth);
    return m;
  }
  double max_depth() const {
    double m = 0.0;
    for (const auto& p : planes) m = std::max(m, p.depth);
    return m;
  }

  void validate(double rho_min, double rho_max) const {
    if (planes.empty()) throw Error(ErrorCode::kInvalidArgument, "scene has no planes");
    for (const auto& p : planes) {
      if (!(p.depth >= 1.0 / rho_max && p.depth <= 1.0 / rho_min)) {
        throw Error(ErrorCode::kInvalidArgument, "plane depth outside the inverse depth range");
      }
      if (!(p.texture.cell_size > 0.0)) throw Error(ErrorCode::kInvalidArgument, "texture cell size must be positive");
    }
    if (!(rig.left_to_right.translation().norm() > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "stereo baseline must be positive");
    }
    if (!rig.left.has_zero_fourth_column() || !rig.right.has_zero_fourth_column()) {
      throw Error(ErrorCode::kInvalidArgument, "simulated cameras carry the baseline in left_to_right only");
    }
  }
};

struct RayHit {
  int plane = -1;  // -1: no hit
  double depth = 0.0;  // camera-frame z
  double X = 0.0;
  double Y = 0.0;
};

// Nearest plane hit by the ray through `direction` (camera frame, z = 1).
inline RayHit cast_ray(const PlaneScene& scene, const SE3& world_from_cam, const Vec3& direction) {
  const Vec3 dir = world_from_cam.rotation() * direction;
  const Vec3& origin = world_from_cam.translation();
  RayHit hit;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < scene.planes.size(); ++k) {
    const FrontalPlane& plane = scene.planes[k];
    if (std::abs(dir.z()) < 1e-15) continue;
    const double s = (plane.depth - origin.z()) / dir.z();
    if (!(s > 0.0) || s >= best) continue;
    const double Y = origin.y() + s * dir.y();
    if (Y < plane.y_min || Y >= plane.y_max) continue;
    best = s;
    hit = {static_cast<int>(k), s, origin.x() + s * dir.x(), Y};
  }
  return hit;
}

inline Vec3 pixel_direction(const RectifiedCamera& cam, double u, double v) {
  return Vec3((u - cam.cu) / cam.fu, (v - cam.cv) / cam.fv, 1.0);
}

// Exact inverse of the camera-frame depth of the first plane hit.
inline std::optional<double> ground_truth_inverse_depth(const PlaneScene& scene, const SE3& world_from_cam,
                                                        const RectifiedCamera& cam, const Vec2& pixel) {
  const RayHit hit = cast_ray(scene, world_from_cam, pixel_direction(cam, pixel.x(), pixel.y()));
  if (hit.plane < 0) return std::nullopt;
  return 1.0 / hit.depth;
}

// Inverse depth per pixel, 0 where the ray misses every plane.
inline Image<double> ground_truth_map(const PlaneScene& scene, const SE3& world_from_cam, const RectifiedCamera& cam) {
  Image<double> map(cam.width, cam.height, 0.0);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u)
      if (auto rho = ground_truth_inverse_depth(scene, world_from_cam, cam, Vec2(u, v))) map(u, v) = *rho;
  return map;
}

struct SimulationOptions {
  int substeps = 20;               // per trajectory segment
  double jitter_sigma_us = 0.0;    // zero-mean Gaussian timestamp jitter
  std::uint64_t seed = 1;
  bool ground_truth_maps = false;  // also render a GT map per pose sample
};

struct SimulationOutput {
  std::vector<Event> left;
  std::vector<Event> right;
  Trajectory trajectory;
  Calibration calibration;
  std::vector<Image<double>> ground_truth;  // per pose sample when requested
};

namespace detail {

struct PixelState {
  int plane = -1;
  double X = 0.0;
  double Y = 0.0;
  bool value = false;
};

inline bool texture_value(const PlaneScene& scene, int plane, double X, double Y) {
  if (plane < 0) return false;
  const PlaneTexture& tex = scene.planes[static_cast<std::size_t>(plane)].texture;
  return tex.value(static_cast<std::int64_t>(std::floor(X / tex.cell_size)),
                   static_cast<std::int64_t>(std::floor(Y / tex.cell_size)));
}

inline PixelState pixel_state(const PlaneScene& scene, const SE3& pose, const Vec3& direction) {
  const RayHit hit = cast_ray(scene, pose, direction);
  return {hit.plane, hit.X, hit.Y, texture_value(scene, hit.plane, hit.X, hit.Y)};
}

// Emits one event per texture boundary crossed by the pixel's footprint
// between two substeps, with the crossing time interpolated linearly.
inline void emit_crossings(const PlaneScene& scene, const PixelState& a, const PixelState& b, double t0_us,
                           double t1_us, int u, int v, std::vector<double>& alphas, std::vector<Event>& out) {
  auto push = [&](double t_us, bool rising) {
    out.push_back(Event{static_cast<Timestamp>(std::llround(t_us)), u, v, rising ? 1 : -1});
  };
  if (a.plane != b.plane || a.plane < 0) {
    if (a.value != b.value) push(0.5 * (t0_us + t1_us), b.value);
    return;
  }
  const double cell = scene.planes[static_cast<std::size_t>(a.plane)].texture.cell_size;
  if (std::floor(a.X / cell) == std::floor(b.X / cell) && std::floor(a.Y / cell) == std::floor(b.Y / cell)) return;
  alphas.clear();
  auto collect = [&](double p0, double p1) {
    if (p0 == p1) return;
    const double lo = std::min(p0, p1), hi = std::max(p0, p1);
    for (double k = std::floor(lo / cell) + 1.0; k * cell <= hi; k += 1.0) {
      alphas.push_back((k * cell - p0) / (p1 - p0));
    }
  };
  collect(a.X, b.X);
  collect(a.Y, b.Y);
  std::sort(alphas.begin(), alphas.end());
  bool current = a.value;
  for (std::size_t n = 0; n < alphas.size(); ++n) {
    // Sample just past this crossing (midway to the next one).
    const double next = n + 1 < alphas.size() ? alphas[n + 1] : 1.0;
    const double mid = 0.5 * (alphas[n] + next);
    const bool value = texture_value(scene, a.plane, a.X + mid * (b.X - a.X), a.Y + mid * (b.Y - a.Y));
    if (value != current) {
      push(t0_us + alphas[n] * (t1_us - t0_us), value);
      current = value;
    }
  }
}

inline void simulate_camera(const PlaneScene& scene, const Trajectory& trajectory, const SE3& cam_from_left,
                            const RectifiedCamera& cam, int substeps, std::vector<Event>& out) {
  const SE3 left_from_cam = cam_from_left.inverse();
  std::vector<Vec3> directions;
  directions.reserve(static_cast<std::size_t>(cam.width) * cam.height);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) directions.push_back(pixel_direction(cam, u, v));

  const auto& samples = trajectory.samples();
  auto pose_at = [&](Timestamp t) { return trajectory.pose_at(t) * left_from_cam; };

  std::vector<PixelState> state(directions.size());
  std::vector<double> scratch;
  SE3 pose = pose_at(samples.front().t);
  for (std::size_t i = 0; i < directions.size(); ++i) state[i] = pixel_state(scene, pose, directions[i]);

  double t_prev = static_cast<double>(samples.front().t);
  for (std::size_t k = 1; k < samples.size(); ++k) {
    const double ta = static_cast<double>(samples[k - 1].t);
    const double tb = static_cast<double>(samples[k].t);
    for (int s = 1; s <= substeps; ++s) {
      const double t = ta + (tb - ta) * s / substeps;
      pose = pose_at(static_cast<Timestamp>(std::llround(t)));
      for (std::size_t i = 0; i < directions.size(); ++i) {
        const PixelState next = pixel_state(scene, pose, directions[i]);
        const int u = static_cast<int>(i % static_cast<std::size_t>(cam.width));
        const int v = static_cast<int>(i / static_cast<std::size_t>(cam.width));
        emit_crossings(scene, state[i], next, t_prev, t, u, v, scratch, out);
        state[i] = next;
      }
      t_prev = t;
    }
  }
}

inline void sort_events(std::vector<Event>& events) {
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.polarity < b.polarity;
  });
}

}  // namespace detail

// Simulates both cameras of the rig along the scene trajectory. Output is
// deterministic for a fixed scene and seed.
inline SimulationOutput generate(const PlaneScene& scene, const SimulationOptions& options = {}) {
  if (scene.trajectory.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory needs at least two samples");
  }
  if (options.substeps < 1) throw Error(ErrorCode::kInvalidArgument, "substeps must be positive");
  if (scene.planes.empty()) throw Error(ErrorCode::kInvalidArgument, "scene has no planes");

  SimulationOutput out;
  out.trajectory = Trajectory(scene.trajectory);
  out.calibration.rig = scene.rig;
  detail::simulate_camera(scene, out.trajectory, SE3(), scene.rig.left, options.substeps, out.left);
  detail::simulate_camera(scene, out.trajectory, scene.rig.left_to_right, scene.rig.right, options.substeps,
                          out.right);

  if (options.jitter_sigma_us > 0.0) {
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> noise(0.0, options.jitter_sigma_us);
    for (auto* stream : {&out.left, &out.right}) {
      for (Event& e : *stream) e.t = std::max<Timestamp>(0, e.t + static_cast<Timestamp>(std::llround(noise(rng))));
    }
  }
  detail::sort_events(out.left);
  detail::sort_events(out.right);

  if (options.ground_truth_maps) {
    for (const PoseSample& s : scene.trajectory) out.ground_truth.push_back(ground_truth_map(scene, s.pose, scene.rig.left));
  }
  return out;
}

struct ThreePlaneOptions {
  int width = 240;
  int height = 180;
  double focal = 200.0;
  double baseline = 0.147;                      // meters
  double depths[3] = {1.0, 2.0, 3.76};          // meters, near to far
  double speed = 1.5;                           // m/s along +x
  Timestamp pose_period = 10'000;               // 100 Hz
  int pose_samples = 41;
  double texel_px = 5.0;                        // texture cell size in image pixels
  double density = 0.5;
  int gap_rows = 15;                            // untextured rows between planes
  std::uint64_t seed = 7;
};

// Three frontal planes stacked in horizontal image bands, seen by a rig
// translating parallel to them.
inline PlaneScene three_plane_scene(const ThreePlaneOptions& o = {}) {
  PlaneScene scene;
  RectifiedCamera cam;
  cam.fu = cam.fv = o.focal;
  cam.cu = o.width / 2.0;
  cam.cv = o.height / 2.0;
  cam.width = o.width;
  cam.height = o.height;
  scene.rig.left = cam;
  scene.rig.right = cam;
  scene.rig.left_to_right = SE3::pure_translation(Vec3(-o.baseline, 0.0, 0.0));

  const double band = (o.height - 2.0 * o.gap_rows) / 3.0;
  for (int k = 0; k < 3; ++k) {
    const double row_begin = k * (band + o.gap_rows);
    const double row_end = row_begin + band;
    FrontalPlane plane;
    plane.depth = o.depths[k];
    plane.y_min = (row_begin - 0.5 - cam.cv) / cam.fv * plane.depth;
    plane.y_max = (row_end - 0.5 - cam.cv) / cam.fv * plane.depth;
    plane.texture.cell_size = o.texel_px * plane.depth / o.focal;
    plane.texture.density = o.density;
    plane.texture.seed = splitmix64(o.seed + static_cast<std::uint64_t>(k));
    scene.planes.push_back(plane);
  }
  for (int i = 0; i < o.pose_samples; ++i) {
    const Timestamp t = static_cast<Timestamp>(i) * o.pose_period;
    const double x = o.speed * static_cast<double>(t) * 1e-6;
    scene.trajectory.push_back({t, SE3::pure_translation(Vec3(x, 0.0, 0.0))});
  }
  return scene;
}

}  // namespace evdepth::synthetic
