#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "evdepth/calibration.hpp"
#include "evdepth/depth_estimation.hpp"
#include "evdepth/events.hpp"
#include "evdepth/export.hpp"
#include "evdepth/fusion.hpp"
#include "evdepth/metrics.hpp"
#include "evdepth/rectification.hpp"
#include "evdepth/synthetic.hpp"
#include "evdepth/time_surface.hpp"
#include "evdepth/trajectory.hpp"

namespace evdepth {

struct PipelineConfig {
  std::filesystem::path events_left;
  std::filesystem::path events_right;
  std::filesystem::path poses;
  std::filesystem::path calibration;
  std::filesystem::path output_dir;  // empty: nothing is written

  Timestamp decay = kDefaultDecay;
  Timestamp event_window = kDefaultEventWindow;
  Timestamp warmup = 2 * kDefaultDecay;   // history required before the first observation
  Timestamp observation_period = 0;       // > 0: fixed-rate observations instead of pose times
  DepthRangeConfig depth;
  int observation_neighbors = 2;  // S_RV spans RV +- this many observations
  int fusion_neighbors = 8;       // neighbouring RVs fused into RV*
  int rv_stride = 1;              // observation spacing between fused RVs
  double confidence_factor = kDefaultConfidenceFactor;
  double default_sigma_r = 10.0;
  bool sort_events = false;
  bool dump_time_surfaces = false;
  int threads = 1;
  std::uint64_t seed = 1;

  void validate(bool require_inputs = true) const {
    if (require_inputs) {
      for (const auto& [name, path] : {std::pair{"left events", &events_left}, std::pair{"right events", &events_right},
                                       std::pair{"poses", &poses}, std::pair{"calibration", &calibration}}) {
        if (path->empty() || !std::filesystem::is_regular_file(*path)) {
          throw Error(ErrorCode::kConfig, std::string(name) + " file not found: " + path->string());
        }
      }
    }
    depth.validate();
    if (decay <= 0 || event_window <= 0 || warmup < 0 || observation_period < 0) {
      throw Error(ErrorCode::kConfig, "time constants must be positive");
    }
    if (observation_neighbors < 0 || fusion_neighbors < 0 || rv_stride < 1) {
      throw Error(ErrorCode::kConfig, "neighbour counts must be non-negative and stride positive");
    }
    if (!(confidence_factor > 0.0) || !(default_sigma_r > 0.0)) {
      throw Error(ErrorCode::kConfig, "confidence factor and default sigma_r must be positive");
    }
    if (threads < 1) throw Error(ErrorCode::kConfig, "threads must be at least 1");
  }
};

// Ground-truth inverse depth for a left-camera pose and pixel, if known.
using GroundTruthFn = std::function<std::optional<double>(const SE3& world_from_cam, PixelCoord)>;

// Ordered key=value run summary.
class RunSummary {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) {
    std::ostringstream os;
    os << std::setprecision(12) << value;
    set(key, os.str());
  }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return std::nullopt;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
    return os.str();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << str();
  }

  static RunSummary parse(std::istream& in) {
    RunSummary s;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kParse, "summary line without '=': " + line);
      s.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return s;
  }

  static RunSummary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return parse(in);
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline void add_report(RunSummary& summary, const std::string& prefix, const ErrorReport& r) {
  summary.set(prefix + "mean_error_m", r.mean_error);
  summary.set(prefix + "median_error_m", r.median_error);
  summary.set(prefix + "relative_error_pct", r.relative_error_pct);
  summary.set(prefix + "depth_range_m", r.depth_range);
  summary.set(prefix + "pixels", r.pixels);
}

struct ReferenceViewResult {
  std::size_t observation_index = 0;
  Timestamp t = 0;
  SE3 pose;
  std::size_t mask_pixels = 0;
  ReconstructionResult reconstruction;
};

struct PipelineResult {
  StereoRig rig;
  std::vector<Timestamp> observation_times;
  std::size_t reference_index = 0;  // RV* among observations
  SE3 reference_pose;
  std::vector<ReferenceViewResult> views;  // chronological
  FusionGrid grid{1, 1};
  std::vector<ScenePoint> points;
  ResidualStats sigma_r;
  std::string sigma_r_source;
  std::optional<Image<double>> ground_truth;  // at RV*
  std::optional<ErrorReport> report;
  std::optional<ErrorReport> confident_report;
  RunSummary summary;
};

namespace detail {

inline std::vector<Timestamp> observation_times(const Trajectory& trajectory, Timestamp begin, Timestamp end,
                                                Timestamp period) {
  std::vector<Timestamp> times;
  if (period > 0) {
    for (Timestamp t = begin; t <= end; t += period) times.push_back(t);
  } else {
    for (const auto& s : trajectory.samples())
      if (s.t >= begin && s.t <= end) times.push_back(s.t);
  }
  return times;
}

inline RectificationMap load_or_identity(const std::optional<std::filesystem::path>& path, int width, int height) {
  if (!path) return RectificationMap::identity(width, height);
  RectificationMap map = RectificationMap::load(*path);
  if (map.width() != width || map.height() != height) {
    throw Error(ErrorCode::kConfig, "rectification map size differs from the calibration resolution");
  }
  return map;
}

inline std::string index_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

}  // namespace detail

// Ingestion, observation generation, per-RV reconstruction, fusion into the
// middle observation, export and (with ground truth) evaluation.
inline PipelineResult run_pipeline(const PipelineConfig& config, const GroundTruthFn& ground_truth = {}) {
  config.validate();
  PipelineResult result;
  RunSummary& summary = result.summary;

  const Calibration calib = load_calibration(config.calibration);
  const StereoRig& rig = calib.rig;
  result.rig = rig;
  const int width = rig.width(), height = rig.height();

  EventLoadOptions load_options;
  load_options.sort_out_of_order = config.sort_events;
  load_options.sensor_width = width;
  load_options.sensor_height = height;
  const auto raw_left = load_events(config.events_left, CameraSide::kLeft, load_options);
  const auto raw_right = load_events(config.events_right, CameraSide::kRight, load_options);
  const Trajectory trajectory = load_poses(config.poses);

  const RectificationMap map_left = detail::load_or_identity(calib.rectmap_left, width, height);
  const RectificationMap map_right = detail::load_or_identity(calib.rectmap_right, width, height);
  Rectifier rect_left(map_left), rect_right(map_right);
  const auto left = rect_left.apply(raw_left);
  const auto right = rect_right.apply(raw_right);
  if (left.empty() || right.empty()) throw Error(ErrorCode::kNoData, "no event survives rectification");

  const Timestamp begin = std::max({left.front().t, right.front().t, trajectory.begin_time()}) + config.warmup;
  const Timestamp end = std::min({left.back().t, right.back().t, trajectory.end_time()});
  result.observation_times = detail::observation_times(trajectory, begin, end, config.observation_period);
  const auto& times = result.observation_times;
  if (times.empty()) throw Error(ErrorCode::kNoData, "no observation time inside the event and pose coverage");

  const std::size_t n = times.size();
  const std::size_t center = n / 2;
  result.reference_index = center;

  // Reference views: RV* and up to fusion_neighbors around it.
  std::vector<std::size_t> rv_indices;
  const auto half = static_cast<std::ptrdiff_t>(config.fusion_neighbors / 2);
  const auto extra = static_cast<std::ptrdiff_t>(config.fusion_neighbors % 2);
  for (std::ptrdiff_t k = -half; k <= half + extra; ++k) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(center) + k * config.rv_stride;
    if (i >= 0 && i < static_cast<std::ptrdiff_t>(n)) rv_indices.push_back(static_cast<std::size_t>(i));
  }

  auto support = [&](std::size_t i) {
    const std::size_t k = static_cast<std::size_t>(config.observation_neighbors);
    return std::pair{i >= k ? i - k : 0, std::min(n - 1, i + k)};
  };
  std::size_t lo = n, hi = 0;
  for (std::size_t i : rv_indices) {
    lo = std::min(lo, support(i).first);
    hi = std::max(hi, support(i).second);
  }

  // Observations over [lo, hi], rendered in one pass over both streams.
  std::vector<std::optional<StereoObservation>> observations(n);
  {
    LastSpikeMap lmap(width, height), rmap(width, height);
    std::size_t li = 0, ri = 0;
    for (std::size_t j = 0; j <= hi; ++j) {
      while (li < left.size() && left[li].t <= times[j]) lmap.consume(left[li++]);
      while (ri < right.size() && right[ri].t <= times[j]) rmap.consume(right[ri++]);
      if (j >= lo) observations[j] = make_observation(lmap, rmap, times[j], config.decay, trajectory.pose_at(times[j]));
    }
  }

  result.reference_pose = observations[center]->pose_world_from_cam;
  auto support_of = [&](std::size_t i) {
    std::vector<const StereoObservation*> s;
    const auto [a, b] = support(i);
    for (std::size_t j = a; j <= b; ++j) s.push_back(&*observations[j]);
    return s;
  };

  // Estimates are computed with sigma_r = 1 (sigma^2 = 1 / gamma) and
  // rescaled once sigma_r is known.
  std::vector<double> converged_residuals;
  for (std::size_t i : rv_indices) {
    ReferenceViewResult view;
    view.observation_index = i;
    view.t = times[i];
    view.pose = observations[i]->pose_world_from_cam;
    const ReferenceView rv = make_reference_view(left, times[i], config.event_window, view.pose, width, height);
    view.mask_pixels = rv.mask.size();
    const auto s = support_of(i);
    view.reconstruction = reconstruct_reference_view(rv, s, rig, config.depth, 1.0, config.threads);
    converged_residuals.insert(converged_residuals.end(), view.reconstruction.residuals.begin(),
                               view.reconstruction.residuals.end());
    result.views.push_back(std::move(view));
  }

  if (ground_truth) {
    const ReferenceView rv_star =
        make_reference_view(left, times[center], config.event_window, result.reference_pose, width, height);
    const auto samples = sample_residuals(rv_star, support_of(center), rig, config.depth, [&](PixelCoord p) {
      return ground_truth(result.reference_pose, p);
    });
    result.sigma_r = estimate_sigma_r(samples, config.default_sigma_r);
    result.sigma_r_source = result.sigma_r.fallback ? "default" : "ground_truth";
  } else {
    result.sigma_r = estimate_sigma_r(converged_residuals, config.default_sigma_r);
    result.sigma_r_source = result.sigma_r.fallback ? "default" : "converged";
  }
  for (auto& view : result.views) apply_sigma_r(view.reconstruction.estimates, result.sigma_r.sigma);

  // Chronological fusion into RV*.
  result.grid = FusionGrid(width, height);
  FusionStats fusion;
  const SE3 ref_from_world = result.reference_pose.inverse();
  std::size_t estimates_total = 0;
  for (const auto& view : result.views) {
    fusion += result.grid.fuse_view(view.reconstruction.estimates, ref_from_world * view.pose, rig.left);
    estimates_total += view.reconstruction.estimates.size();
  }
  result.points = filter_confident(result.grid, rig.left, result.reference_pose, config.confidence_factor);

  summary.set("width", width);
  summary.set("height", height);
  summary.set("events_left", left.size());
  summary.set("events_right", right.size());
  summary.set("events_dropped", rect_left.dropped() + rect_right.dropped());
  summary.set("observations", n);
  summary.set("reference_index", center);
  summary.set("reference_time_s", format_timestamp(times[center]));
  summary.set("reference_views", result.views.size());
  summary.set("observations_per_view", 2 * config.observation_neighbors + 1);
  summary.set("mask_pixels_reference", result.views.empty() ? std::size_t{0} : [&] {
    for (const auto& v : result.views)
      if (v.observation_index == center) return v.mask_pixels;
    return std::size_t{0};
  }());
  summary.set("estimates_total", estimates_total);
  summary.set("sigma_r", result.sigma_r.sigma);
  summary.set("sigma_r_source", result.sigma_r_source);
  summary.set("sigma_r_samples", result.sigma_r.samples);
  summary.set("fusion_assigned", fusion.assigned);
  summary.set("fusion_fused", fusion.fused);
  summary.set("fusion_replaced", fusion.replaced);
  summary.set("fusion_kept", fusion.kept);
  summary.set("fusion_dropped", fusion.dropped);
  summary.set("fused_pixels", result.grid.assigned_count());
  summary.set("fused_mean_variance", result.grid.mean_variance());
  summary.set("fused_max_variance", result.grid.max_variance());
  summary.set("confident_points", result.points.size());

  if (ground_truth) {
    Image<double> gt(width, height, 0.0);
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u)
        if (auto rho = ground_truth(result.reference_pose, {u, v})) gt(u, v) = *rho;
    const double range = depth_range(gt);
    result.report = compute_metrics(result.grid, gt, range);
    add_report(summary, "", *result.report);
    std::vector<DepthRow> confident;
    for (const auto& p : result.points) confident.push_back({p.pixel, p.rho, p.sigma2});
    if (!confident.empty()) {
      result.confident_report = compute_metrics(confident, gt, range);
      add_report(summary, "confident_", *result.confident_report);
    }
    result.ground_truth = std::move(gt);
  }

  if (!config.output_dir.empty()) {
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir / "views");
    for (const auto& view : result.views) {
      write_depth_csv(dir / "views" / ("rv_" + detail::index_name(view.observation_index) + ".csv"),
                      depth_rows(view.reconstruction.estimates));
    }
    const auto rows = depth_rows(result.grid);
    write_depth_csv(dir / "fused_depth.csv", rows);
    write_depth_pgm(dir / "fused_depth.pgm", rows, width, height);
    write_uncertainty_pgm(dir / "uncertainty.pgm", rows, width, height);
    export_point_cloud(result.points, dir / "points.ply", result.grid.max_variance());
    if (result.ground_truth) write_inverse_depth_map_csv(dir / "ground_truth.csv", *result.ground_truth);
    if (config.dump_time_surfaces) {
      const auto& obs = *observations[center];
      write_pgm(dir / "time_surface_left.pgm", obs.left.values);
      write_pgm(dir / "time_surface_right.pgm", obs.right.values);
    }
    summary.write(dir / "summary.txt");
  }
  return result;
}

struct SynthConfig {
  synthetic::ThreePlaneOptions scene;
  synthetic::SimulationOptions simulation;
  PipelineConfig pipeline;  // input paths are filled in by run_synthetic
};

// Simulates the three-plane scene, writes it in the public file formats under
// <output_dir>/data and runs the pipeline on those files with ground truth.
inline PipelineResult run_synthetic(SynthConfig config) {
  if (config.pipeline.output_dir.empty()) throw Error(ErrorCode::kConfig, "synth needs an output directory");
  const auto scene = synthetic::three_plane_scene(config.scene);
  scene.validate(config.pipeline.depth.rho_min, config.pipeline.depth.rho_max);
  config.simulation.seed = config.pipeline.seed;  // one seed drives the whole run
  const auto sim = synthetic::generate(scene, config.simulation);

  const auto data = config.pipeline.output_dir / "data";
  std::filesystem::create_directories(data);
  PipelineConfig& p = config.pipeline;
  p.events_left = data / "events_left.txt";
  p.events_right = data / "events_right.txt";
  p.poses = data / "poses.txt";
  p.calibration = data / "calibration.txt";
  write_events(p.events_left, sim.left);
  write_events(p.events_right, sim.right);
  write_poses(p.poses, sim.trajectory.samples());
  write_calibration(p.calibration, sim.calibration);

  const RectifiedCamera cam = scene.rig.left;
  PipelineResult result = run_pipeline(p, [&scene, cam](const SE3& pose, PixelCoord px) {
    return synthetic::ground_truth_inverse_depth(scene, pose, cam, Vec2(px.u, px.v));
  });
  result.summary.set("scene_planes", scene.planes.size());
  result.summary.set("scene_min_depth_m", scene.min_depth());
  result.summary.set("scene_max_depth_m", scene.max_depth());
  result.summary.set("seed", static_cast<long long>(p.seed));
  result.summary.write(p.output_dir / "summary.txt");
  return result;
}

}  // namespace evdepth
