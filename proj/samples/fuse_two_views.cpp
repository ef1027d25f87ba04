// Estimates the inverse depth of a few edge pixels of a simulated scene and
// fuses two reference views, using the library directly (no files).

#include <cmath>
#include <cstdio>
#include <vector>

#include "evdepth/depth_estimation.hpp"
#include "evdepth/fusion.hpp"
#include "evdepth/rectification.hpp"
#include "evdepth/synthetic.hpp"
#include "evdepth/time_surface.hpp"

using namespace evdepth;

int main() {
  synthetic::ThreePlaneOptions opts;
  opts.pose_samples = 21;
  const auto scene = synthetic::three_plane_scene(opts);
  const auto sim = synthetic::generate(scene);
  const StereoRig& rig = scene.rig;

  const auto identity = RectificationMap::identity(rig.width(), rig.height());
  Rectifier rl(identity), rr(identity);
  const auto left = rl.apply(sim.left);
  const auto right = rr.apply(sim.right);

  // Observations at every pose sample after 60 ms of history.
  std::vector<StereoObservation> obs;
  LastSpikeMap lmap(rig.width(), rig.height()), rmap(rig.width(), rig.height());
  std::size_t li = 0, ri = 0;
  for (const auto& s : sim.trajectory.samples()) {
    while (li < left.size() && left[li].t <= s.t) lmap.consume(left[li++]);
    while (ri < right.size() && right[ri].t <= s.t) rmap.consume(right[ri++]);
    if (s.t >= 60'000) obs.push_back(make_observation(lmap, rmap, s.t, kDefaultDecay, s.pose));
  }

  DepthRangeConfig cfg;
  FusionGrid grid(rig.width(), rig.height());
  const SE3 world_from_ref = obs[5].pose_world_from_cam;
  for (std::size_t c : {std::size_t{5}, std::size_t{7}}) {
    std::vector<const StereoObservation*> support;
    for (std::size_t j = c - 2; j <= c + 2; ++j) support.push_back(&obs[j]);
    const auto rv = make_reference_view(left, obs[c].t, kDefaultEventWindow, obs[c].pose_world_from_cam,
                                        rig.width(), rig.height());
    const auto result = reconstruct_reference_view(rv, support, rig, cfg, 10.0);
    const auto stats = grid.fuse_view(result.estimates, world_from_ref.inverse() * obs[c].pose_world_from_cam,
                                      rig.left);
    std::printf("view %zu: %zu estimates, %zu fused, %zu assigned\n", c, result.estimates.size(), stats.fused,
                stats.assigned);
  }

  int shown = 0;
  grid.for_each_assigned([&](PixelCoord p, const GaussianInverseDepth& g) {
    if (shown >= 5 || p.v % 20 != 0) return;
    const auto gt = synthetic::ground_truth_inverse_depth(scene, world_from_ref, rig.left, Vec2(p.u, p.v));
    std::printf("(%3d,%3d) depth %.3f m  sigma %.4f  truth %.3f m\n", p.u, p.v, 1.0 / g.rho, std::sqrt(g.sigma2),
                gt ? 1.0 / *gt : 0.0);
    ++shown;
  });
  return 0;
}
