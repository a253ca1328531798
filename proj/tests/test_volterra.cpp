#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "droplet/volterra.hpp"

namespace {

using namespace droplet;
using namespace droplet::volterra;

TimeSignal sampled(double T, std::size_t m, const std::function<double(double)>& f) {
  TimeSignal s = TimeSignal::zeros(0.0, T / static_cast<double>(m - 1), m);
  for (std::size_t i = 0; i < m; ++i) s.samples[i] = f(s.time(i));
  return s;
}

double max_abs_diff(const TimeSignal& a, const std::function<double(double)>& f) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a.samples[i] - f(a.time(i))));
  return e;
}

// Random smooth instance: a few cosines for K and sines for g.
struct Instance {
  VolterraOp op;
  TimeSignal g;
};

Instance random_instance(std::mt19937_64& rng, double T, std::size_t m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.5, 6.0), mag(0.5, 3.0);
  double ck[3], wk[3], pk[3], cg[3], wg[3], pg[3];
  for (int k = 0; k < 3; ++k) {
    ck[k] = u(rng);
    wk[k] = w(rng);
    pk[k] = 3.0 * u(rng);
    cg[k] = u(rng);
    wg[k] = w(rng);
    pg[k] = 3.0 * u(rng);
  }
  const double alpha = (u(rng) < 0.0 ? -1.0 : 1.0) * mag(rng);
  auto K = sampled(T, m, [&](double t) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += ck[k] * std::cos(wk[k] * t + pk[k]);
    return s;
  });
  auto g = sampled(T, m, [&](double t) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += cg[k] * std::sin(wg[k] * t + pg[k]);
    return s;
  });
  return {VolterraOp(alpha, std::move(K)), std::move(g)};
}

TEST(Volterra, ApplyIdentity) {
  const auto f = sampled(3.0, 301, [](double t) { return std::sin(t); });
  const VolterraOp op(1.0, TimeSignal::zeros(0.0, f.dt, f.size()));
  const auto out = apply(op, f);
  EXPECT_EQ(out.samples, f.samples);
}

TEST(Volterra, ApplyClosedForms) {
  const double T = 2.0;
  const std::size_t m = 201;
  const auto one = sampled(T, m, [](double) { return 1.0; });
  const VolterraOp linear(2.0, sampled(T, m, [](double t) { return t; }));
  EXPECT_LT(max_abs_diff(apply(linear, one), [](double t) { return 2.0 + 0.5 * t * t; }), 1e-12);
  const VolterraOp flat(2.0, one);
  EXPECT_LT(max_abs_diff(apply(flat, one), [](double t) { return 2.0 + t; }), 1e-12);
}

TEST(Volterra, NeumannWithZeroKernelIsScaling) {
  const auto g = sampled(1.0, 101, [](double t) { return std::cos(3.0 * t) + t; });
  const VolterraOp op(2.0, TimeSignal::zeros(0.0, g.dt, g.size()));
  const auto r = invert_neumann(op, g);
  EXPECT_EQ(r.terms, 0);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(r.solution.samples[i], g.samples[i] / 2.0);
  const auto d = invert_direct(op, g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(d.samples[i], g.samples[i] / 2.0);
}

// alpha f + int_0^t f = 1 is equivalent to alpha f' + f = 0, f(0) = 1/alpha.
TEST(Volterra, AnalyticExponentialCase) {
  const double T = 2.0;
  const std::size_t m = 4096;
  const auto one = sampled(T, m, [](double) { return 1.0; });
  const VolterraOp op(2.0, one);
  auto exact = [](double t) { return 0.5 * std::exp(-0.5 * t); };
  const auto direct = invert_direct(op, one);
  EXPECT_LE(max_abs_diff(direct, exact), 1e-6);
  const auto neumann = invert_neumann(op, one, 1e-10);
  EXPECT_LE(max_abs_diff(neumann.solution, exact), 1e-6);
  EXPECT_LE(neumann.certified_bound, 1e-10);
}

TEST(Volterra, DirectErrorIsSecondOrder) {
  auto exact = [](double t) { return 0.5 * std::exp(-0.5 * t); };
  std::vector<double> dts, errs;
  for (std::size_t m : {101, 201, 401}) {
    const auto one = sampled(2.0, m, [](double) { return 1.0; });
    errs.push_back(max_abs_diff(invert_direct(VolterraOp(2.0, one), one), exact));
    dts.push_back(one.dt);
  }
  EXPECT_NEAR(loglog_slope(dts, errs), 2.0, 0.1);
}

TEST(Volterra, NeumannAndDirectAgreeOnRandomInstances) {
  std::mt19937_64 rng(20240611);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 100; ++trial) {
    const auto [op, g] = random_instance(rng, 1.0, 513);
    const auto direct = invert_direct(op, g);
    const auto neumann = invert_neumann(op, g, 1e-8);
    EXPECT_LE(relative_l2_error(neumann.solution.samples, direct.samples), 1e-6) << "trial " << trial;
    EXPECT_LE(residual(op, direct, g), 1e-6);
    EXPECT_LE(residual(op, neumann.solution, g), 1e-6);
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
}

TEST(Volterra, InversionUndoesApply) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [op, f] = random_instance(rng, 1.5, 401);
    const auto g = apply(op, f);
    EXPECT_LE(relative_l2_error(invert_neumann(op, g).solution.samples, f.samples), 1e-6);
    EXPECT_LE(relative_l2_error(invert_direct(op, g).samples, f.samples), 1e-10);
  }
}

TEST(Volterra, FactorialPowerBound) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const double T = 1.0 + trial * 0.25;
    const auto [op, f] = random_instance(rng, T, 801);
    const double norm = op.kernel_norm();
    const double f_sup = f.max_abs();
    TimeSignal term = f;
    for (int n = 1; n <= 12; ++n) {
      term = convolve(op.kernel(), term);
      for (std::size_t i = 1; i < term.size(); ++i) {
        const double bound = power_bound(norm, f_sup, term.time(i), n);
        EXPECT_LE(std::abs(term.samples[i]), 1.05 * bound) << "trial " << trial << " n=" << n << " i=" << i;
      }
    }
  }
}

TEST(Volterra, ResolventIsHomogeneous) {
  std::mt19937_64 rng(3);
  const auto [op, g] = random_instance(rng, 1.0, 257);
  const double c = -3.5;
  TimeSignal kc = op.kernel(), gc = g;
  for (double& x : kc.samples) x *= c;
  for (double& x : gc.samples) x *= c;
  const VolterraOp scaled(c * op.alpha(), kc);
  const auto a = invert_direct(op, g), b = invert_direct(scaled, gc);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.samples[i], b.samples[i], 1e-13 * (1.0 + std::abs(a.samples[i])));
  const auto an = invert_neumann(op, g), bn = invert_neumann(scaled, gc);
  EXPECT_LE(relative_l2_error(an.solution.samples, bn.solution.samples), 1e-12);
}

TEST(Volterra, NeumannTermCountFollowsCertificate) {
  std::mt19937_64 rng(11);
  const auto [op, g] = random_instance(rng, 1.0, 257);
  const auto loose = invert_neumann(op, g, 1e-4);
  const auto tight = invert_neumann(op, g, 1e-12);
  EXPECT_LT(loose.terms, tight.terms);
  EXPECT_LT(loose.certified_bound, 1e-4);
  EXPECT_LT(tight.certified_bound, 1e-12);
}

TEST(Volterra, Errors) {
  const auto k = sampled(1.0, 11, [](double) { return 1.0; });
  EXPECT_THROW(VolterraOp(0.0, k), InvalidArgument);
  const VolterraOp op(1.0, k);
  EXPECT_THROW(apply(op, sampled(1.0, 21, [](double) { return 1.0; })), GridMismatch);
  EXPECT_THROW(invert_neumann(op, k, 0.0), InvalidArgument);
  // pivot alpha + dt K(0) / 2 = 0
  const VolterraOp singular(-0.5 * k.dt, k);
  EXPECT_THROW(invert_direct(singular, k), Error);
}

TEST(Volterra, ZeroDataGivesZero) {
  const auto k = sampled(1.0, 101, [](double t) { return std::cos(t); });
  const auto z = TimeSignal::zeros(0.0, k.dt, k.size());
  const VolterraOp op(-0.3, k);
  for (double x : invert_direct(op, z).samples) EXPECT_EQ(x, 0.0);
  for (double x : invert_neumann(op, z).solution.samples) EXPECT_EQ(x, 0.0);
}

}  // namespace
