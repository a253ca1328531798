#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/roots.hpp>
#include <chrono>
#include <cmath>
#include <numbers>

#include "droplet/spectrum.hpp"

namespace {

using namespace droplet;
using namespace droplet::spectrum;
constexpr double pi = std::numbers::pi;

// Independent root oracle: TOMS 748 on sin(m) + 2m cos(m), which has the same
// roots as tan(m) + 2m inside ((n - 1/2) pi, n pi) but no poles there.
double oracle_root(int n) {
  auto f = [](double m) { return std::sin(m) + 2.0 * m * std::cos(m); };
  boost::uintmax_t iters = 200;
  auto [lo, hi] = boost::math::tools::toms748_solve(f, (n - 0.5) * pi, n * pi,
                                                    boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (lo + hi);
}

// Radial quadrature of the Bessel-form eigenfunction
// e(r) = r^{-1/2} J_{1/2}(r / sqrt(lambda)) over the ball of radius a,
// split into one panel per quarter oscillation.
struct Moments {
  double integral;
  double norm_sq;
};

double radial_integral(const std::function<double(double)>& g, double a, int panels) {
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double lo = a * k / panels, hi = a * (k + 1) / panels;
    sum += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, lo, hi, 5, 1e-15);
  }
  return sum;
}

Moments oracle_moments(double a, double lambda, int n) {
  const double s = std::sqrt(lambda);
  auto e = [s](double r) { return r == 0.0 ? std::sqrt(2.0 / (pi * s)) : boost::math::cyl_bessel_j(0.5, r / s) / std::sqrt(r); };
  const int panels = 4 * n + 4;
  const double integral = radial_integral([&](double r) { return 4.0 * pi * r * r * e(r); }, a, panels);
  const double norm_sq = radial_integral([&](double r) { return 4.0 * pi * r * r * e(r) * e(r); }, a, panels);
  return {integral, norm_sq};
}

TEST(Spectrum, FirstRootsMatchReferenceValues) {
  const auto roots = solve_roots(2);
  EXPECT_NEAR(roots[0].m, 1.8366, 5e-5);
  EXPECT_NEAR(roots[0].gamma, 0.2658, 5e-5);
  EXPECT_NEAR(roots[1].m, 4.8158, 5e-5);
  // quoted to four decimals, truncated: 0.103453...
  EXPECT_NEAR(roots[1].gamma, 0.1034, 1e-4);
}

TEST(Spectrum, RootsAgreeWithIndependentSolver) {
  const auto roots = solve_roots(200);
  for (int n = 1; n <= 200; ++n) {
    EXPECT_NEAR(roots[n - 1].m, oracle_root(n), 1e-12 * n) << "n=" << n;
  }
}

TEST(Spectrum, RootResidualAndFixedPoint) {
  const auto roots = solve_roots(200);
  for (int n = 1; n <= 200; ++n) {
    const auto [m, gamma] = roots[n - 1];
    EXPECT_LE(std::abs(root_residual(n, gamma)), 1e-12) << "n=" << n;
    EXPECT_NEAR(gamma, std::atan(1.0 / (2.0 * m)), 1e-10) << "n=" << n;
    EXPECT_GT(m, (n - 0.5) * pi);
    EXPECT_LT(m, n * pi);
    EXPECT_DOUBLE_EQ(m, (n - 0.5) * pi + gamma);
  }
}

TEST(Spectrum, GammaDecreasesToZero) {
  const auto roots = solve_roots(200);
  for (std::size_t i = 1; i < roots.size(); ++i) {
    EXPECT_LT(roots[i].gamma, roots[i - 1].gamma);
    EXPECT_GT(roots[i].gamma, 0.0);
  }
  EXPECT_LT(roots.back().gamma, 1e-3);
}

TEST(Spectrum, RejectsBadArguments) {
  EXPECT_THROW(solve_roots(0), InvalidArgument);
  EXPECT_THROW(build_eigensystem(0.0), InvalidArgument);
  EXPECT_THROW(build_eigensystem(-1.0), InvalidArgument);
}

TEST(Spectrum, EigenvaluesFromRoots) {
  const double a = 0.37;
  const auto sys = build_eigensystem(a, 200);
  ASSERT_EQ(sys.n_max(), 200);
  for (std::size_t i = 0; i < sys.modes.size(); ++i) {
    const auto& m = sys.modes[i];
    EXPECT_NEAR(m.lambda * m.m * m.m, a * a, 1e-15);
    if (i > 0) {
      EXPECT_LT(m.lambda, sys.modes[i - 1].lambda);
    }
  }
}

TEST(Spectrum, AveragesMatchRadialQuadrature) {
  const double a = 1.0;
  const auto sys = build_eigensystem(a, 50);
  for (const auto& mode : sys.modes) {
    const auto q = oracle_moments(a, mode.lambda, mode.n);
    const double avg = q.integral / std::sqrt(q.norm_sq);
    EXPECT_NEAR(mode.avg, avg, 1e-8 * std::abs(avg)) << "n=" << mode.n;
    EXPECT_NEAR(mode.series_term(), avg * avg / mode.lambda, 1e-8 * avg * avg / mode.lambda) << "n=" << mode.n;
    // The raw constants are those of sqrt(2 sqrt(lambda) / pi) sin(r / sqrt(lambda)) / r,
    // which is the Bessel form written out.
    EXPECT_NEAR(mode.raw_integral, q.integral, 1e-8 * std::abs(q.integral)) << "n=" << mode.n;
    EXPECT_NEAR(mode.raw_norm_sq, q.norm_sq, 1e-8 * q.norm_sq) << "n=" << mode.n;
  }
}

TEST(Spectrum, FirstTermAtUnitRadius) {
  const auto sys = build_eigensystem(1.0, 1);
  // frozen from the quadrature oracle
  EXPECT_NEAR(sys.modes[0].series_term(), 13.715121, 1e-6);
  EXPECT_NEAR(sys.series_sum, 13.715121, 1e-6);
  EXPECT_NEAR(sys.modes[0].avg, 2.016443, 1e-6);
  const auto q = oracle_moments(1.0, sys.modes[0].lambda, 1);
  EXPECT_NEAR(sys.modes[0].series_term(), q.integral * q.integral / (q.norm_sq * sys.modes[0].lambda), 1e-9);
}

TEST(Spectrum, AverageSignAlternatesStartingPositive) {
  const auto sys = build_eigensystem(1.0, 200);
  for (const auto& m : sys.modes) {
    EXPECT_EQ(std::signbit(m.avg), m.n % 2 == 0) << "n=" << m.n;
  }
}

TEST(Spectrum, BesselInequality) {
  const auto sys = build_eigensystem(1.0, 2);
  const double two = sys.modes[0].avg * sys.modes[0].avg + sys.modes[1].avg * sys.modes[1].avg;
  EXPECT_NEAR(two, 4.17, 0.01);
  EXPECT_LE(two, 4.0 * pi / 3.0);
  const auto big = build_eigensystem(1.0, 200);
  double all = 0.0;
  for (const auto& m : big.modes) all += m.avg * m.avg;
  EXPECT_LE(all, 4.0 * pi / 3.0);
}

TEST(Spectrum, Orthonormality) {
  const double a = 1.0;
  const auto sys = build_eigensystem(a, 10);
  for (const auto& p : sys.modes) {
    for (const auto& q : sys.modes) {
      const double sp = std::sqrt(p.lambda), sq = std::sqrt(q.lambda);
      const double np = std::sqrt(p.raw_norm_sq), nq = std::sqrt(q.raw_norm_sq);
      auto f = [&](double r) {
        if (r == 0.0) return 0.0;
        const double ep = std::sqrt(2.0 * sp / pi) * std::sin(r / sp) / r / np;
        const double eq = std::sqrt(2.0 * sq / pi) * std::sin(r / sq) / r / nq;
        return 4.0 * pi * r * r * ep * eq;
      };
      const double ip = radial_integral(f, a, 48);
      EXPECT_NEAR(ip, p.n == q.n ? 1.0 : 0.0, 1e-6) << p.n << "," << q.n;
    }
  }
}

TEST(Spectrum, RadiusScaling) {
  const auto one = build_eigensystem(1.0, 60);
  const auto two = build_eigensystem(2.0, 60);
  const auto small = build_eigensystem(0.03, 60);
  EXPECT_NEAR(two.series_sum / one.series_sum, 2.0, 1e-14);
  for (std::size_t i = 0; i < one.modes.size(); ++i) {
    EXPECT_NEAR(small.modes[i].avg, std::pow(0.03, 1.5) * one.modes[i].avg, 1e-12 * std::abs(small.modes[i].avg));
  }
}

TEST(Spectrum, PartialSumsIncreaseAndTailBoundsHold) {
  // Reference value of the full series from a much longer truncation.
  const auto ref = build_eigensystem(1.0, 20000);
  const double s_inf = ref.series_sum + ref.tail_bound;
  double prev = 0.0;
  CompensatedSum partial;
  for (const auto& m : ref.modes) {
    if (m.n > 200) break;
    partial.add(m.series_term());
    EXPECT_GT(partial.value(), prev);
    prev = partial.value();
  }
  for (int n : {50, 100, 200}) {
    const auto sys = build_eigensystem(1.0, n);
    const double actual_tail = s_inf - sys.series_sum;
    EXPECT_GT(actual_tail, 0.0);
    EXPECT_LE(actual_tail, sys.tail_bound) << "N=" << n;
  }
}

TEST(Spectrum, TailBoundHalvesWhenModesDouble) {
  for (int n : {50, 100, 200}) {
    const double t1 = build_eigensystem(1.0, n).tail_bound;
    const double t2 = build_eigensystem(1.0, 2 * n).tail_bound;
    EXPECT_NEAR(t1 / t2, 2.0, 0.4) << "N=" << n;
  }
}

TEST(Spectrum, AverageOverEigenvalueApproachesConstant) {
  const auto sys = build_eigensystem(1.0, 400);
  auto ratio = [&](int n) { return std::abs(sys.modes[n - 1].avg) / sys.modes[n - 1].lambda; };
  const double r200 = ratio(200), r400 = ratio(400);
  EXPECT_GT(r400, 0.0);
  EXPECT_NEAR(r200 / r400, 1.0, 1e-3);
}

TEST(Spectrum, RieszCondition) {
  EXPECT_TRUE(check_riesz_condition(0.01, 0.001, 5.0));
  EXPECT_FALSE(check_riesz_condition(0.01, 0.01, 2.0));
  for (double a : {0.08, 0.04, 0.02, 0.01, 1e-4}) EXPECT_TRUE(check_riesz_condition(a, 0.5 * a, 1.9));
}

TEST(Spectrum, DeterministicAndFast) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = build_eigensystem(0.05, 200);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(elapsed, 1.0);
  const auto b = build_eigensystem(0.05, 200);
  EXPECT_EQ(a.series_sum, b.series_sum);
  for (std::size_t i = 0; i < a.modes.size(); ++i) EXPECT_EQ(a.modes[i].avg, b.modes[i].avg);
}

}  // namespace
