// evdepth: stereo event-camera inverse depth reconstruction.
//
//   evdepth reconstruct --events-left L --events-right R --poses P --calibration C -o out/
//   evdepth synth -o out/ [--seed N] [--threads N]
//   evdepth eval --estimates out/fused_depth.csv --ground-truth out/ground_truth.csv --calibration C

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "evdepth/calibration.hpp"
#include "evdepth/error.hpp"
#include "evdepth/export.hpp"
#include "evdepth/metrics.hpp"
#include "evdepth/pipeline.hpp"

namespace {

using namespace evdepth;

// Millisecond-valued flags, converted after parsing.
struct TimeFlags {
  double decay_ms = 30.0;
  double window_ms = 10.0;
  double warmup_ms = 60.0;
  double period_ms = 0.0;

  void apply(PipelineConfig& c) const {
    c.decay = milliseconds(decay_ms);
    c.event_window = milliseconds(window_ms);
    c.warmup = milliseconds(warmup_ms);
    c.observation_period = milliseconds(period_ms);
  }
};

void add_pipeline_flags(CLI::App* app, PipelineConfig& c, TimeFlags& t) {
  app->add_option("-o,--output", c.output_dir, "Output directory")->required();
  app->add_option("--decay-ms", t.decay_ms, "Time-surface decay constant delta")->capture_default_str();
  app->add_option("--window-ms", t.window_ms, "Event window defining the reference-view pixels")
      ->capture_default_str();
  app->add_option("--warmup-ms", t.warmup_ms, "Event history required before the first observation")
      ->capture_default_str();
  app->add_option("--observation-period-ms", t.period_ms,
                  "Fixed observation spacing; 0 uses the pose timestamps")
      ->capture_default_str();
  app->add_option("--rho-min", c.depth.rho_min, "Lower inverse depth bound (1/m)")->capture_default_str();
  app->add_option("--rho-max", c.depth.rho_max, "Upper inverse depth bound (1/m)")->capture_default_str();
  app->add_option("--coarse-step", c.depth.coarse_step, "Coarse search step in inverse depth, at most 0.1")
      ->capture_default_str();
  app->add_option("--patch-width", c.depth.patch_width, "Odd patch width w")->capture_default_str();
  app->add_option("--max-iterations", c.depth.max_iterations, "Gauss-Newton iteration cap")
      ->capture_default_str();
  app->add_option("--observation-neighbors", c.observation_neighbors,
                  "Observations on each side of a reference view used in its energy")
      ->capture_default_str();
  app->add_option("--fusion-views", c.fusion_neighbors, "Neighbouring reference views fused, typically 4, 8 or 16")
      ->capture_default_str();
  app->add_option("--rv-stride", c.rv_stride, "Observation spacing between fused reference views")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--confidence", c.confidence_factor,
                  "Keep fused cells with variance below this fraction of the maximum")
      ->capture_default_str();
  app->add_option("--sigma-r", c.default_sigma_r, "Residual noise used when it cannot be estimated")
      ->capture_default_str();
  app->add_option("-j,--threads", c.threads, "Worker threads")->capture_default_str();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_flag("--sort-events", c.sort_events, "Sort out-of-order input events instead of failing");
  app->add_flag("--dump-time-surfaces", c.dump_time_surfaces, "Also write the reference time surfaces as PGM");
}

int run(int argc, char** argv) {
  CLI::App app{"Semi-dense inverse depth from a stereo event camera with known poses"};
  app.require_subcommand(1);

  PipelineConfig rec_config;
  TimeFlags rec_time;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct from recorded events, poses and calibration");
  rec->add_option("--events-left", rec_config.events_left, "Left events, 't x y p' per line")->required();
  rec->add_option("--events-right", rec_config.events_right, "Right events, 't x y p' per line")->required();
  rec->add_option("--poses", rec_config.poses, "Left camera poses, 't tx ty tz qx qy qz qw'")->required();
  rec->add_option("--calibration", rec_config.calibration, "Stereo calibration file")->required();
  add_pipeline_flags(rec, rec_config, rec_time);

  SynthConfig synth_config;
  TimeFlags synth_time;
  auto* synth = app.add_subcommand("synth", "Simulate the three-plane scene, reconstruct it and evaluate");
  add_pipeline_flags(synth, synth_config.pipeline, synth_time);
  auto& scene = synth_config.scene;
  synth->add_option("--baseline", scene.baseline, "Stereo baseline (m)")->capture_default_str();
  synth->add_option("--speed", scene.speed, "Rig speed along x (m/s)")->capture_default_str();
  synth->add_option("--pose-samples", scene.pose_samples, "Pose samples at the pose period")
      ->capture_default_str();
  synth->add_option("--texel-px", scene.texel_px, "Texture cell size in pixels")->capture_default_str();
  synth->add_option("--scene-seed", scene.seed, "Texture seed")->capture_default_str();
  synth->add_option("--substeps", synth_config.simulation.substeps, "Simulation substeps per pose interval")
      ->capture_default_str();
  synth->add_option("--jitter-us", synth_config.simulation.jitter_sigma_us, "Timestamp noise sigma (us)")
      ->capture_default_str();

  std::string estimates, ground_truth, eval_calibration, eval_output;
  int eval_width = 0, eval_height = 0;
  double eval_range = 0.0;
  auto* eval = app.add_subcommand("eval", "Depth metrics of a depth CSV against a ground-truth CSV");
  eval->add_option("--estimates", estimates, "CSV with header u,v,rho,sigma2")->required();
  eval->add_option("--ground-truth", ground_truth, "CSV with header u,v,rho")->required();
  eval->add_option("--calibration", eval_calibration, "Calibration providing the image size");
  eval->add_option("--width", eval_width, "Image width when no calibration is given");
  eval->add_option("--height", eval_height, "Image height when no calibration is given");
  eval->add_option("--range", eval_range, "Depth range (m); default: from the ground truth");
  eval->add_option("-o,--output", eval_output, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*rec) {
    rec_time.apply(rec_config);
    const auto result = run_pipeline(rec_config);
    std::cout << result.summary.str();
  } else if (*synth) {
    synth_time.apply(synth_config.pipeline);
    const auto result = run_synthetic(synth_config);
    std::cout << result.summary.str();
  } else if (*eval) {
    if (!eval_calibration.empty()) {
      const auto calib = load_calibration(eval_calibration);
      eval_width = calib.rig.width();
      eval_height = calib.rig.height();
    }
    if (eval_width <= 0 || eval_height <= 0) {
      throw Error(ErrorCode::kConfig, "eval needs --calibration or a positive --width and --height");
    }
    const auto rows = read_depth_csv(estimates);
    const auto gt = read_inverse_depth_map_csv(ground_truth, eval_width, eval_height);
    const double range = eval_range > 0.0 ? eval_range : depth_range(gt);
    RunSummary report;
    add_report(report, "", compute_metrics(rows, gt, range));
    std::cout << report.str();
    if (!eval_output.empty()) report.write(eval_output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const evdepth::Error& e) {
    std::cerr << "error[" << evdepth::to_string(e.code()) << "]: " << e.what() << '\n';
    return evdepth::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
}
