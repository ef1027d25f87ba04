#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evdepth/time_surface.hpp"
#include "oracles.hpp"

using namespace evdepth;

namespace {

RectifiedEvent at(Timestamp t, int u, int v) { return {t, double(u), double(v), u, v, 1}; }

// Time surface whose values are an affine function of the pixel position;
// bilinear interpolation reproduces it exactly.
TimeSurface affine_surface(int w, int h, double a, double b, double c) {
  TimeSurface ts{Image<double>(w, h, 0.0), 0, kDefaultDecay};
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) ts.values(u, v) = a + b * u + c * v;
  return ts;
}

}  // namespace

TEST(TimeSurface, ValueAtOneDecayConstant) {
  LastSpikeMap map(3, 3);
  map.consume(at(1000, 1, 1));
  const auto ts = render(map, 1000 + kDefaultDecay);
  EXPECT_NEAR(ts(1, 1), 93.8092574987178, 1e-9);
  EXPECT_NEAR(ts(1, 1), 255.0 / std::exp(1.0), 1e-9);
  EXPECT_EQ(ts(0, 0), 0.0);
  EXPECT_EQ(render(map, 1000)(1, 1), 255.0);
}

TEST(TimeSurface, MatchesDefinition) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Timestamp> t_last(0, 100'000), age(0, 200'000), delta(1'000, 80'000);
  for (int i = 0; i < 500; ++i) {
    LastSpikeMap map(2, 1);
    const Timestamp tl = t_last(rng);
    map.consume(at(tl, 0, 0));
    const Timestamp t = tl + age(rng), d = delta(rng);
    EXPECT_NEAR(render(map, t, d)(0, 0), oracle::time_surface_value(tl, t, d), 1e-9);
  }
}

TEST(TimeSurface, NegativeAgeThrows) {
  LastSpikeMap map(2, 2);
  map.consume(at(500, 0, 0));
  try {
    render(map, 499);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNegativeAge);
  }
}

TEST(LastSpikeMap, StrictAndLenientOrdering) {
  LastSpikeMap map(2, 2);
  map.consume(at(10, 0, 0));
  EXPECT_THROW(map.consume(at(5, 0, 0)), Error);
  map.consume(at(5, 0, 0), false);
  EXPECT_EQ(map.at(0, 0), 10);
  map.consume(at(5, 1, 0));  // other pixel: fine
  EXPECT_EQ(map.count_set(), 2u);
  EXPECT_THROW(map.consume(at(20, 2, 0)), Error);
}

TEST(TimeSurface, MonotoneDecayProperty) {
  std::mt19937_64 rng(4);
  LastSpikeMap map(16, 16);
  std::uniform_int_distribution<int> px(0, 15);
  for (Timestamp t = 0; t < 50'000; t += 37) map.consume(at(t, px(rng), px(rng)));
  std::uniform_int_distribution<Timestamp> dt(1, 100'000);
  for (int i = 0; i < 200; ++i) {
    const Timestamp t1 = map.latest() + dt(rng), t2 = t1 + dt(rng);
    const auto a = render(map, t1), b = render(map, t2);
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 16; ++u) {
        EXPECT_LE(b(u, v), a(u, v));
        EXPECT_GE(b(u, v), 0.0);
        EXPECT_LE(a(u, v), 255.0);
      }
    }
  }
}

TEST(Patch, ExactOnAffineSurface) {
  const auto ts = affine_surface(60, 50, 3.0, 0.75, -1.5);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> cu(12.0, 46.0), cv(12.0, 36.0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 c(cu(rng), cv(rng));
    const auto p = sample_patch(ts, c, 25);
    const auto g = sample_patch_gradient(ts, c, 25);
    ASSERT_EQ(p.size(), 625u);
    for (int r = 0; r < 25; ++r) {
      for (int k = 0; k < 25; ++k) {
        const double u = c.x() + k - 12, v = c.y() + r - 12;
        EXPECT_NEAR(p[r * 25 + k], 3.0 + 0.75 * u - 1.5 * v, 1e-9);
        EXPECT_NEAR(g.du[r * 25 + k], 0.75, 1e-12);
        EXPECT_NEAR(g.dv[r * 25 + k], -1.5, 1e-12);
      }
    }
  }
}

TEST(Patch, GradientIsDerivativeOfInterpolant) {
  const auto ts = oracle::random_time_surface(40, 40, 3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(13.0, 25.0), frac(0.1, 0.9);
  for (int i = 0; i < 100; ++i) {
    const Vec2 x(std::floor(c(rng)) + frac(rng), std::floor(c(rng)) + frac(rng));
    const auto g = sample_patch_gradient(ts, x, 5);
    const double h = 1e-6;
    const auto pu = sample_patch(ts, x + Vec2(h, 0), 5), mu = sample_patch(ts, x - Vec2(h, 0), 5);
    const auto pv = sample_patch(ts, x + Vec2(0, h), 5), mv = sample_patch(ts, x - Vec2(0, h), 5);
    for (std::size_t k = 0; k < 25; ++k) {
      EXPECT_NEAR(g.du[k], (pu[k] - mu[k]) / (2 * h), 1e-6 * std::max(1.0, std::abs(g.du[k])));
      EXPECT_NEAR(g.dv[k], (pv[k] - mv[k]) / (2 * h), 1e-6 * std::max(1.0, std::abs(g.dv[k])));
    }
  }
}

TEST(Patch, IntegerCenterReturnsPixels) {
  const auto ts = oracle::random_time_surface(30, 30, 5);
  const auto p = sample_patch(ts, Vec2(15, 14), 3);
  EXPECT_EQ(p[0], ts(14, 13));
  EXPECT_EQ(p[4], ts(15, 14));
  EXPECT_EQ(p[8], ts(16, 15));
}

TEST(Patch, BoundaryAndWidth) {
  const auto ts = oracle::random_time_surface(30, 30, 5);
  EXPECT_NO_THROW(sample_patch(ts, Vec2(12, 12), 25));
  EXPECT_NO_THROW(sample_patch(ts, Vec2(16.99, 16.99), 25));  // last cell ends at pixel 29
  try {
    sample_patch(ts, Vec2(11.9, 15), 25);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBoundary);
  }
  EXPECT_THROW(sample_patch(ts, Vec2(17.0, 15), 25), Error);
  EXPECT_THROW(sample_patch(ts, Vec2(15, 15), 4), Error);
}

TEST(ReferenceView, HalfOpenWindow) {
  const std::vector<RectifiedEvent> events{at(100, 0, 0), at(101, 1, 0), at(150, 2, 0), at(200, 3, 0),
                                           at(201, 4, 0), at(180, 1, 0)};
  std::vector<RectifiedEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.t < b.t; });
  const auto rv = make_reference_view(sorted, 200, 100, SE3(), 5, 1);
  ASSERT_EQ(rv.mask.size(), 3u);
  EXPECT_EQ(rv.mask[0], (PixelCoord{1, 0}));
  EXPECT_EQ(rv.mask[1], (PixelCoord{2, 0}));
  EXPECT_EQ(rv.mask[2], (PixelCoord{3, 0}));
}
