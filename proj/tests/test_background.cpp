#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>

#include "droplet/background.hpp"

namespace {

using namespace droplet;
using namespace droplet::background;

Grid3 cube(double lo, double extent, std::size_t cells) {
  Grid3 g;
  g.origin = {lo, lo, lo};
  g.spacing = extent / static_cast<double>(cells);
  g.dims = {cells + 1, cells + 1, cells + 1};
  return g;
}

double max_error_constant(std::size_t cells, Vec3 src) {
  const Grid3 g = cube(0.0, 2.0, cells);
  const auto field = fast_march(SpeedField::constant(g, 1.0), src);
  double e = 0.0;
  for (std::size_t n = 0; n < g.node_count(); ++n) e = std::max(e, std::abs(field.values[n] - distance(g.position(n), src)));
  return e;
}

TEST(Background, TravelTimeConstant) {
  EXPECT_DOUBLE_EQ(travel_time_constant({1, 0, 0}, {0, 0, 0}, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(travel_time_constant({0.3, 0.2, 0.1}, {0.3, 0.2, 0.1}, 1.0), 0.0);
  const Vec3 x{0.1, -0.4, 0.9}, z{-0.2, 0.3, 0.05};
  EXPECT_DOUBLE_EQ(travel_time_constant(x, z, 3.0), 0.5 * travel_time_constant(x, z, 1.5));
  EXPECT_THROW(travel_time_constant(x, z, 0.0), InvalidArgument);
}

TEST(Background, SpeedFieldValidation) {
  const Grid3 g = cube(0.0, 1.0, 4);
  EXPECT_THROW(SpeedField::constant(g, 0.0), InvalidArgument);
  EXPECT_THROW(SpeedField::constant(g, -1.0), InvalidArgument);
  std::vector<double> v(g.node_count(), 1.0);
  v[7] = 0.0;
  EXPECT_THROW(SpeedField::gridded(g, v), InvalidArgument);
  EXPECT_THROW(SpeedField::gridded(g, std::vector<double>(3, 1.0)), InvalidArgument);
  const auto c = SpeedField::constant(g, 1.5);
  EXPECT_EQ(c.kind(), SpeedKind::constant);
  EXPECT_DOUBLE_EQ(c.at({7.0, -3.0, 2.0}), 1.5);
}

TEST(Background, FastMarchConstantAccuracy) {
  // 65^3 nodes, h = 1/32
  EXPECT_LE(max_error_constant(64, {1.0, 1.0, 1.0}), 0.07);
  EXPECT_LE(max_error_constant(64, {0.5, 1.0, 1.5}), 0.07);
  EXPECT_LE(max_error_constant(64, {1.0, 1.0, 1.0}), 2.0 / 32.0);
}

TEST(Background, FastMarchFirstOrderConvergence) {
  const Vec3 src{1.0, 1.0, 1.0};
  const double e16 = max_error_constant(16, src), e32 = max_error_constant(32, src), e64 = max_error_constant(64, src);
  EXPECT_GE(e16 / e32, 1.7);
  EXPECT_LE(e16 / e32, 2.3);
  EXPECT_GE(e32 / e64, 1.7);
  EXPECT_LE(e32 / e64, 2.3);
}

TEST(Background, FastMarchRadialSpeedMatchesRayIntegral) {
  // c(r) = 1 + r^2 / 2 with the source at the centre: rays are radial, so
  // the travel time is the 1D integral of 1/c along the radius.
  const Vec3 src{0.0, 0.0, 0.0};
  auto c = [](double r) { return 1.0 + 0.5 * r * r; };
  auto ray = [&](double r) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate([&](double s) { return 1.0 / c(s); }, 0.0, r, 10,
                                                                          1e-14);
  };
  const Grid3 g = cube(-1.0, 2.0, 64);
  const auto speed = SpeedField::from_function(g, [&](Vec3 p) { return c(p.norm()); });
  const auto field = fast_march(speed, src);
  double e = 0.0;
  for (std::size_t n = 0; n < g.node_count(); ++n) e = std::max(e, std::abs(field.values[n] - ray(g.position(n).norm())));
  EXPECT_LE(e, 2.0 * g.spacing);
}

TEST(Background, FastMarchBasicProperties) {
  const Grid3 g = cube(0.0, 1.0, 20);
  const Vec3 src = g.position(5, 7, 9);
  const auto speed = SpeedField::from_function(g, [](Vec3 p) { return 1.0 + 0.3 * std::sin(3.0 * p.x) * p.y; });
  const auto f = fast_march(speed, src);
  EXPECT_EQ(f.values[g.index(5, 7, 9)], 0.0);
  for (double t : f.values) EXPECT_GE(t, 0.0);
  const auto again = fast_march(speed, src);
  EXPECT_EQ(f.values, again.values);
  EXPECT_THROW(fast_march(speed, {2.0, 0.5, 0.5}), InvalidArgument);
}

TEST(Background, ComparisonPrinciple) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 2.0), shrink(0.5, 1.0);
  const Grid3 g = cube(0.0, 1.0, 16);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> fast(g.node_count()), slow(g.node_count());
    for (std::size_t n = 0; n < fast.size(); ++n) {
      fast[n] = u(rng);
      slow[n] = fast[n] * shrink(rng);
    }
    const Vec3 src = g.position(trial % 17, (3 * trial) % 17, 8);
    const auto tf = fast_march(SpeedField::gridded(g, fast), src);
    const auto ts = fast_march(SpeedField::gridded(g, slow), src);
    for (std::size_t n = 0; n < fast.size(); ++n) EXPECT_GE(ts.values[n], tf.values[n] - 1e-12) << "trial " << trial;
  }
}

TEST(Background, SymmetryOnConstantField) {
  const Grid3 g = cube(0.0, 1.0, 32);
  const auto speed = SpeedField::constant(g, 1.3);
  const Vec3 x = g.position(2, 5, 30), z = g.position(28, 16, 3);
  const double xz = fast_march(speed, x).at(z);
  const double zx = fast_march(speed, z).at(x);
  EXPECT_NEAR(xz, zx, 2.0 * g.spacing);
  EXPECT_NEAR(xz, travel_time_constant(x, z, 1.3), 2.0 * g.spacing / 1.3);
}

TEST(Background, StraightRayTime) {
  const Grid3 g = cube(0.0, 1.0, 8);
  EXPECT_DOUBLE_EQ(straight_ray_time(SpeedField::constant(g, 2.0), {0, 0, 0}, {0.3, 0.4, 0}), 0.25);
  // linear slowness along x is integrated exactly by Simpson's rule
  const auto lin = SpeedField::from_function(g, [](Vec3 p) { return 1.0 / (1.0 + p.x); });
  EXPECT_NEAR(straight_ray_time(lin, {0, 0.5, 0.5}, {1, 0.5, 0.5}), 1.5, 1e-14);
}

TEST(Background, AmplitudeSigma) {
  const Grid3 g = cube(0.0, 1.0, 8);
  const auto c = amplitude_sigma({0, 0, 0}, {0.5, 0.5, 0.5}, SpeedField::constant(g, 1.0));
  EXPECT_EQ(c.value, 1.0);
  EXPECT_FALSE(c.approximate);
  const auto v = amplitude_sigma({0, 0, 0}, {0.5, 0.5, 0.5}, SpeedField::from_function(g, [](Vec3 p) { return 1.0 + p.x; }));
  EXPECT_EQ(v.value, 1.0);
  EXPECT_TRUE(v.approximate);
  EXPECT_GT(v.value, 0.0);
  EXPECT_THROW(amplitude_sigma({0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, SpeedField::constant(g, 1.0)), InvalidArgument);
}

TEST(Background, GreenRemainderIsCausal) {
  TimeSignal g = TimeSignal::zeros(0.0, 0.01, 101);
  for (std::size_t i = 0; i < g.size(); ++i) g.samples[i] = 1.0 + g.time(i);
  const auto r = GreenRemainder::causal(g, 0.35);
  EXPECT_FALSE(r.is_zero());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.time(i) <= 0.35) EXPECT_EQ(r.samples().samples[i], 0.0);
    else EXPECT_EQ(r.samples().samples[i], g.samples[i]);
  }
  const GreenRemainder zero;
  EXPECT_TRUE(zero.is_zero());
  EXPECT_EQ(zero.at(3.0), 0.0);
}

TEST(Background, ModelTravelTimes) {
  const Grid3 g = cube(-0.5, 1.0, 32);
  BackgroundModel bg;
  bg.speed = SpeedField::constant(g, 2.0);
  EXPECT_DOUBLE_EQ(bg.travel_time({0.5, 0, 0}, {0, 0, 0}), 0.25);
  EXPECT_STREQ(bg.travel_time_provenance(), "travel_time_constant");
  BackgroundModel var;
  var.speed = SpeedField::from_function(g, [](Vec3 p) { return 1.0 + 0.1 * p.x; });
  EXPECT_THROW(var.travel_time({0.5, 0, 0}, {0, 0, 0}), InvalidArgument);
  var.probe_times = fast_march(var.speed, {0.5, 0, 0});
  EXPECT_GT(var.travel_time({0.5, 0, 0}, {0, 0, 0}), 0.0);
  EXPECT_THROW(var.travel_time({-0.5, 0, 0}, {0, 0, 0}), InvalidArgument);
  EXPECT_STREQ(var.travel_time_provenance(), "fast_march");
}

}  // namespace
