#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "evdepth/calibration.hpp"
#include "evdepth/geometry.hpp"
#include "evdepth/parallel.hpp"
#include "evdepth/time_surface.hpp"

namespace evdepth {

struct DepthRangeConfig {
  double rho_min = 0.2;  // 1/m
  double rho_max = 2.0;
  double coarse_step = 0.05;
  int patch_width = kDefaultPatchWidth;
  double epsilon = 1e-6;  // added to the residual norm in the Jacobian
  int max_iterations = 10;
  double convergence = 1e-4;  // on |delta rho|
  // Only estimate pixels whose every coarse hypothesis is seen by at least
  // one observation. Otherwise the true match may lie out of view and the
  // search settles on the best wrong one (image borders).
  bool require_full_search_range = true;

  void validate() const {
    if (!(rho_min > 0.0) || !(rho_max > rho_min)) {
      throw Error(ErrorCode::kConfig, "inverse depth range must satisfy 0 < rho_min < rho_max");
    }
    // The convergence basin is at least 0.2 1/m wide; the grid must sample it.
    if (!(coarse_step > 0.0) || coarse_step > 0.1) {
      throw Error(ErrorCode::kConfig, "coarse_step must be in (0, 0.1]");
    }
    if (patch_width <= 0 || patch_width % 2 == 0) throw Error(ErrorCode::kConfig, "patch width must be odd");
    if (!(epsilon > 0.0)) throw Error(ErrorCode::kConfig, "epsilon must be positive");
    if (max_iterations < 1) throw Error(ErrorCode::kConfig, "max_iterations must be at least 1");
    if (!(convergence > 0.0)) throw Error(ErrorCode::kConfig, "convergence threshold must be positive");
  }

  std::vector<double> coarse_grid() const {
    std::vector<double> grid;
    const auto n = static_cast<std::size_t>(std::floor((rho_max - rho_min) / coarse_step + 1e-9));
    grid.reserve(n + 2);
    for (std::size_t k = 0; k <= n; ++k) grid.push_back(rho_min + static_cast<double>(k) * coarse_step);
    if (grid.back() < rho_max - 1e-12) grid.push_back(rho_max);
    return grid;
  }

  double clamp(double rho) const { return std::clamp(rho, rho_min, rho_max); }
};

// One stereo observation as seen from the reference view.
struct ObservationLink {
  const StereoObservation* observation = nullptr;
  SE3 obs_from_rv;  // T_sr
};

inline std::vector<ObservationLink> link_observations(const SE3& rv_world_from_cam,
                                                      std::span<const StereoObservation* const> observations) {
  std::vector<ObservationLink> links;
  links.reserve(observations.size());
  for (const StereoObservation* obs : observations) {
    links.push_back({obs, obs->pose_world_from_cam.inverse() * rv_world_from_cam});
  }
  return links;
}

// Warps of a reference pixel into both cameras of one observation.
struct StereoWarp {
  WarpCoefficients left;
  WarpCoefficients right;
};

inline StereoWarp stereo_warp(const Vec2& x, const SE3& obs_from_rv, const StereoRig& rig) {
  return {warp_coefficients(x, obs_from_rv, rig.left, rig.left),
          warp_coefficients(x, rig.left_to_right * obs_from_rv, rig.right, rig.left)};
}

namespace detail {

struct PatchPairSums {
  double sum_sq = 0.0;  // |tau_left - tau_right|^2
  double dot = 0.0;     // (tau_left - tau_right) . (dtau_left/drho - dtau_right/drho)
};

struct StencilWeights {
  double w00, w10, w01, w11;  // values
  double c00, c10, c01, c11;  // d(value)/drho through the warp

  StencilWeights(const PatchStencil& s, const Vec2& dx_drho) {
    const double a = s.a, b = s.b;
    w00 = (1 - a) * (1 - b);
    w10 = a * (1 - b);
    w01 = (1 - a) * b;
    w11 = a * b;
    const double du = dx_drho.x(), dv = dx_drho.y();
    c00 = -du * (1 - b) - dv * (1 - a);
    c10 = du * (1 - b) - dv * a;
    c01 = -du * b + dv * (1 - a);
    c11 = du * b + dv * a;
  }
};

// Both patches must already be known to be in bounds.
template <bool kWithDerivative>
PatchPairSums patch_pair_sums(const TimeSurface& left, const PatchStencil& sl, const Vec2& dl,
                              const TimeSurface& right, const PatchStencil& sr, const Vec2& dr, int w) {
  const StencilWeights L(sl, dl);
  const StencilWeights R(sr, dr);
  double sum_sq = 0.0;
  double dot = 0.0;
  for (int i = 0; i < w; ++i) {
    const double* l0 = left.values.row(sl.v0 + i) + sl.u0;
    const double* l1 = left.values.row(sl.v0 + i + 1) + sl.u0;
    const double* r0 = right.values.row(sr.v0 + i) + sr.u0;
    const double* r1 = right.values.row(sr.v0 + i + 1) + sr.u0;
    for (int j = 0; j < w; ++j) {
      const double lv = L.w00 * l0[j] + L.w10 * l0[j + 1] + L.w01 * l1[j] + L.w11 * l1[j + 1];
      const double rv = R.w00 * r0[j] + R.w10 * r0[j + 1] + R.w01 * r1[j] + R.w11 * r1[j + 1];
      const double d = lv - rv;
      sum_sq += d * d;
      if constexpr (kWithDerivative) {
        const double ld = L.c00 * l0[j] + L.c10 * l0[j + 1] + L.c01 * l1[j] + L.c11 * l1[j + 1];
        const double rd = R.c00 * r0[j] + R.c10 * r0[j + 1] + R.c01 * r1[j] + R.c11 * r1[j + 1];
        dot += d * (ld - rd);
      }
    }
  }
  return {sum_sq, dot};
}

}  // namespace detail

struct ResidualTerm {
  double residual = 0.0;  // r_s
  double jacobian = 0.0;  // J_s
};

// Accumulated Gauss-Newton quantities at one inverse depth.
struct Linearization {
  std::size_t usable = 0;  // observations whose patches are in bounds
  double energy = 0.0;     // mean of r_s^2 over usable observations
  double sum_jr = 0.0;     // sum J_s r_s
  double gamma = 0.0;      // sum J_s^2
};

// Residual model of one reference pixel against a set of observations.
class PixelProblem {
 public:
  PixelProblem(const Vec2& x, std::span<const ObservationLink> links, const StereoRig& rig,
               const DepthRangeConfig& config)
      : x_(x), config_(config) {
    terms_.reserve(links.size());
    for (const ObservationLink& link : links) {
      terms_.push_back({link.observation, stereo_warp(x, link.obs_from_rv, rig)});
    }
  }

  std::size_t size() const { return terms_.size(); }
  const Vec2& pixel() const { return x_; }
  const DepthRangeConfig& config() const { return config_; }

  std::optional<double> residual(std::size_t s, double rho) const {
    auto sums = evaluate<false>(terms_[s], rho);
    if (!sums) return std::nullopt;
    return std::sqrt(sums->sum_sq);
  }

  std::optional<ResidualTerm> residual_and_jacobian(std::size_t s, double rho) const {
    auto sums = evaluate<true>(terms_[s], rho);
    if (!sums) return std::nullopt;
    const double r = std::sqrt(sums->sum_sq);
    return ResidualTerm{r, sums->dot / (r + config_.epsilon)};
  }

  // Mean squared residual; empty when no observation is usable.
  std::optional<double> energy(double rho) const {
    double total = 0.0;
    std::size_t usable = 0;
    for (const Term& term : terms_) {
      if (auto sums = evaluate<false>(term, rho)) {
        total += sums->sum_sq;
        ++usable;
      }
    }
    if (usable == 0) return std::nullopt;
    return total / static_cast<double>(usable);
  }

  Linearization linearize(double rho) const {
    Linearization lin;
    for (std::size_t s = 0; s < terms_.size(); ++s) {
      auto term = residual_and_jacobian(s, rho);
      if (!term) continue;
      ++lin.usable;
      lin.energy += term->residual * term->residual;
      lin.sum_jr += term->jacobian * term->residual;
      lin.gamma += term->jacobian * term->jacobian;
    }
    if (lin.usable > 0) lin.energy /= static_cast<double>(lin.usable);
    return lin;
  }

  // Residuals of all usable observations at rho.
  std::vector<double> residuals(double rho) const {
    std::vector<double> out;
    for (std::size_t s = 0; s < terms_.size(); ++s) {
      if (auto r = residual(s, rho)) out.push_back(*r);
    }
    return out;
  }

 private:
  struct Term {
    const StereoObservation* observation;
    StereoWarp warp;
  };

  template <bool kWithDerivative>
  std::optional<detail::PatchPairSums> evaluate(const Term& term, double rho) const {
    const auto x1 = try_warp(term.warp.left, rho);
    const auto x2 = try_warp(term.warp.right, rho);
    if (!x1 || !x2) return std::nullopt;
    const TimeSurface& left = term.observation->left;
    const TimeSurface& right = term.observation->right;
    const int w = config_.patch_width;
    const auto sl = PatchStencil::make(*x1, w, left.width(), left.height());
    const auto sr = PatchStencil::make(*x2, w, right.width(), right.height());
    if (!sl || !sr) return std::nullopt;
    Vec2 d1 = Vec2::Zero(), d2 = Vec2::Zero();
    if constexpr (kWithDerivative) {
      d1 = warp_derivative(term.warp.left, rho);
      d2 = warp_derivative(term.warp.right, rho);
    }
    return detail::patch_pair_sums<kWithDerivative>(left, *sl, d1, right, *sr, d2, w);
  }

  Vec2 x_;
  DepthRangeConfig config_;
  std::vector<Term> terms_;
};

// r_s for a single observation; empty when a patch leaves the image.
inline std::optional<double> residual(const Vec2& x, double rho, const StereoObservation& obs, const SE3& obs_from_rv,
                                      const StereoRig& rig, int patch_width = kDefaultPatchWidth) {
  DepthRangeConfig cfg;
  cfg.patch_width = patch_width;
  const ObservationLink link{&obs, obs_from_rv};
  return PixelProblem(x, std::span(&link, 1), rig, cfg).residual(0, rho);
}

inline std::optional<double> jacobian(const Vec2& x, double rho, const StereoObservation& obs, const SE3& obs_from_rv,
                                      const StereoRig& rig, int patch_width = kDefaultPatchWidth,
                                      double epsilon = 1e-6) {
  DepthRangeConfig cfg;
  cfg.patch_width = patch_width;
  cfg.epsilon = epsilon;
  const ObservationLink link{&obs, obs_from_rv};
  auto term = PixelProblem(x, std::span(&link, 1), rig, cfg).residual_and_jacobian(0, rho);
  if (!term) return std::nullopt;
  return term->jacobian;
}

// Mean squared residual over the usable observations.
inline double energy(const Vec2& x, double rho, std::span<const ObservationLink> links, const StereoRig& rig,
                     int patch_width = kDefaultPatchWidth) {
  DepthRangeConfig cfg;
  cfg.patch_width = patch_width;
  auto e = PixelProblem(x, links, rig, cfg).energy(rho);
  if (!e) throw Error(ErrorCode::kNoData, "no usable observation for this pixel and inverse depth");
  return *e;
}

// argmin of the energy over the coarse grid, ties toward smaller rho. Empty
// when no grid point has a usable observation, or when any has none and the
// full range is required.
template <typename EnergyFn>
  requires std::invocable<EnergyFn&, double>
std::optional<double> coarse_search(EnergyFn&& energy_at, const DepthRangeConfig& config) {
  std::optional<double> best_rho;
  double best_energy = std::numeric_limits<double>::infinity();
  for (double rho : config.coarse_grid()) {
    const std::optional<double> e = energy_at(rho);
    if (!e && config.require_full_search_range) return std::nullopt;
    if (e && *e < best_energy) {
      best_energy = *e;
      best_rho = rho;
    }
  }
  return best_rho;
}

inline std::optional<double> coarse_search(const PixelProblem& problem) {
  return coarse_search([&](double rho) { return problem.energy(rho); }, problem.config());
}

enum class RefineStatus { kConverged, kMaxIterations, kDiverged, kTextureless, kNoData };

struct RefineResult {
  RefineStatus status = RefineStatus::kNoData;
  double rho = 0.0;
  double gamma = 0.0;
  double energy = 0.0;
  double initial_energy = 0.0;
  std::size_t usable = 0;
  int iterations = 0;

  bool accepted() const {
    return status != RefineStatus::kTextureless && status != RefineStatus::kNoData && gamma > 0.0;
  }
  bool diverged() const { return status == RefineStatus::kDiverged; }
};

template <typename Problem>
concept Linearizable = requires(const Problem& p, double rho) {
  { p.linearize(rho) } -> std::convertible_to<Linearization>;
};

// Gauss-Newton on the inverse depth: rho <- rho - sum(J r) / sum(J^2).
// Returns the lowest-energy iterate seen; two consecutive energy increases
// stop the iteration with kDiverged.
template <Linearizable Problem>
RefineResult gauss_newton_refine(const Problem& problem, double rho0, const DepthRangeConfig& config) {
  RefineResult result;
  double rho = config.clamp(rho0);
  double previous_energy = std::numeric_limits<double>::infinity();
  int increases = 0;
  bool converged = false;
  bool have_best = false;

  for (int iter = 0;; ++iter) {
    const Linearization lin = problem.linearize(rho);
    if (lin.usable == 0) {
      if (iter == 0) return result;
      break;
    }
    if (iter == 0) {
      result.initial_energy = lin.energy;
      if (!(lin.gamma > 0.0)) {
        result.status = RefineStatus::kTextureless;
        result.rho = rho;
        result.energy = lin.energy;
        result.usable = lin.usable;
        return result;
      }
    }
    if (!have_best || lin.energy < result.energy) {
      have_best = true;
      result.rho = rho;
      result.energy = lin.energy;
      result.gamma = lin.gamma;
      result.usable = lin.usable;
    }
    increases = lin.energy > previous_energy ? increases + 1 : 0;
    previous_energy = lin.energy;
    if (increases >= 2) {
      result.status = RefineStatus::kDiverged;
      return result;
    }
    if (converged) break;
    if (iter >= config.max_iterations) {
      result.status = RefineStatus::kMaxIterations;
      return result;
    }
    if (!(lin.gamma > 0.0)) break;  // stationary
    const double delta = -lin.sum_jr / lin.gamma;
    const double next = config.clamp(rho + delta);
    result.iterations = iter + 1;
    converged = std::abs(next - rho) < config.convergence;
    if (next == rho) break;
    rho = next;
  }
  result.status = RefineStatus::kConverged;
  return result;
}

// First-order variance of the refined inverse depth: sigma_r^2 / sum(J^2).
// Infinite when gamma is zero.
inline double estimate_uncertainty(double gamma, double sigma_r) {
  if (!(sigma_r > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma_r must be positive");
  if (!(gamma > 0.0)) return std::numeric_limits<double>::infinity();
  return sigma_r * sigma_r / gamma;
}

struct ResidualStats {
  double mean = 0.0;
  double sigma = 0.0;
  std::size_t samples = 0;
  bool fallback = false;  // sigma is the configured default
};

inline constexpr std::size_t kMinResidualSamples = 100;

// Moment fit of a Gaussian to residual samples. Falls back to default_sigma
// with too few samples or a degenerate (zero-spread) fit.
inline ResidualStats estimate_sigma_r(std::span<const double> samples, double default_sigma,
                                      std::size_t min_samples = kMinResidualSamples) {
  ResidualStats stats;
  stats.samples = samples.size();
  if (!samples.empty()) {
    stats.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  }
  if (samples.size() >= std::max<std::size_t>(min_samples, 2)) {
    double ss = 0.0;
    for (double r : samples) ss += (r - stats.mean) * (r - stats.mean);
    stats.sigma = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  }
  if (samples.size() < min_samples || !(stats.sigma > 0.0)) {
    stats.sigma = default_sigma;
    stats.fallback = true;
  }
  return stats;
}

struct InverseDepthEstimate {
  PixelCoord pixel;
  double rho = 0.0;
  double sigma2 = 0.0;
  double gamma = 0.0;
  int n_obs = 0;
  double energy = 0.0;
  bool diverged = false;
};

struct ReconstructionResult {
  std::vector<InverseDepthEstimate> estimates;  // row-major
  std::vector<double> residuals;                // r_s at the accepted estimates, same order
  std::size_t rejected = 0;
};

// Coarse search plus Gauss-Newton for every pixel of the reference view's
// mask. Pixels are independent; results keep mask order whatever the thread
// count.
inline ReconstructionResult reconstruct_reference_view(const ReferenceView& rv,
                                                       std::span<const StereoObservation* const> observations,
                                                       const StereoRig& rig, const DepthRangeConfig& config,
                                                       double sigma_r, int threads = 1) {
  config.validate();
  if (!(sigma_r > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma_r must be positive");
  ReconstructionResult out;
  if (rv.mask.empty()) return out;
  if (observations.empty()) throw Error(ErrorCode::kNoData, "reference view has no stereo observations");

  const std::vector<ObservationLink> links = link_observations(rv.pose_world_from_cam, observations);

  struct Slot {
    std::optional<InverseDepthEstimate> estimate;
    std::vector<double> residuals;
  };
  std::vector<Slot> slots(rv.mask.size());
  parallel_for(rv.mask.size(), threads, [&](std::size_t i) {
    const PixelCoord px = rv.mask[i];
    const PixelProblem problem(Vec2(px.u, px.v), links, rig, config);
    const auto rho0 = coarse_search(problem);
    if (!rho0) return;
    const RefineResult refined = gauss_newton_refine(problem, *rho0, config);
    if (!refined.accepted()) return;
    InverseDepthEstimate est;
    est.pixel = px;
    est.rho = refined.rho;
    est.gamma = refined.gamma;
    est.sigma2 = estimate_uncertainty(refined.gamma, sigma_r);
    est.n_obs = static_cast<int>(refined.usable);
    est.energy = refined.energy;
    est.diverged = refined.diverged();
    slots[i].estimate = est;
    slots[i].residuals = problem.residuals(refined.rho);
  });

  for (Slot& slot : slots) {
    if (!slot.estimate) {
      ++out.rejected;
      continue;
    }
    out.estimates.push_back(*slot.estimate);
    out.residuals.insert(out.residuals.end(), slot.residuals.begin(), slot.residuals.end());
  }
  return out;
}

// Re-derives every variance for a new sigma_r (sigma^2 = sigma_r^2 / gamma).
inline void apply_sigma_r(std::span<InverseDepthEstimate> estimates, double sigma_r) {
  for (auto& e : estimates) e.sigma2 = estimate_uncertainty(e.gamma, sigma_r);
}

// Residuals of every mask pixel at a supplied inverse depth, e.g. ground
// truth; pixels without one are skipped.
inline std::vector<double> sample_residuals(const ReferenceView& rv,
                                            std::span<const StereoObservation* const> observations,
                                            const StereoRig& rig, const DepthRangeConfig& config,
                                            const std::function<std::optional<double>(PixelCoord)>& rho_of) {
  const std::vector<ObservationLink> links = link_observations(rv.pose_world_from_cam, observations);
  std::vector<double> out;
  for (const PixelCoord& px : rv.mask) {
    const auto rho = rho_of(px);
    if (!rho || !(*rho > 0.0)) continue;
    const PixelProblem problem(Vec2(px.u, px.v), links, rig, config);
    const auto r = problem.residuals(*rho);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace evdepth
