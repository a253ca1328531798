#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "droplet/droplet_response.hpp"

namespace {

using namespace droplet;
using namespace droplet::response;
constexpr double pi = std::numbers::pi;

PathData unit_path(double zeta = 1.0, double c0 = 1.0) {
  PathData p;
  p.c0_center = c0;
  p.zeta = zeta;
  return p;
}

TimeSignal smooth_trace(double dt, std::size_t count) {
  TimeSignal v = TimeSignal::zeros(0.0, dt, count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = v.time(i);
    v.samples[i] = t * t * std::exp(-3.0 * t) * std::sin(5.0 * t + 0.3);
  }
  return v;
}

TEST(DropletResponse, AlphaUnitExample) {
  const auto sys = spectrum::build_eigensystem(1.0, 1);
  const auto alpha = alpha_coeff(sys, unit_path());
  // -13.715121 / (4 pi)
  EXPECT_NEAR(alpha.value, -1.091420, 1e-5);
  EXPECT_LT(alpha.value, 0.0);
}

TEST(DropletResponse, AlphaIsNegativeAndLinearInRadius) {
  const PathData p = unit_path(0.7, 1.3);
  const double a1 = alpha_coeff(spectrum::build_eigensystem(0.04, 200), p).value;
  const double a2 = alpha_coeff(spectrum::build_eigensystem(0.02, 200), p).value;
  EXPECT_LT(a1, 0.0);
  EXPECT_NEAR(a1 / a2, 2.0, 1e-12);
  // inversely proportional to c0 and zeta
  const double a3 = alpha_coeff(spectrum::build_eigensystem(0.04, 200), unit_path(1.4, 1.3)).value;
  EXPECT_NEAR(a1 / a3, 2.0, 1e-12);
}

TEST(DropletResponse, ModeAOscillatesAtKappaM) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto sys = spectrum::build_eigensystem(d.radius, 3);
  const auto& m1 = sys.modes[0];
  const PathData p = unit_path(0.5);
  EXPECT_EQ(kernel_a_n(m1, p, d, 0.0), 0.0);
  EXPECT_NEAR(mode_frequency(m1, d), d.kappa * m1.m, 1e-12);
  const double spacing = pi / (d.kappa * m1.m);
  for (int k = 1; k <= 3; ++k) EXPECT_NEAR(kernel_a_n(m1, p, d, k * spacing), 0.0, 1e-12 * std::abs(a_n_amplitude(m1, p, d)));
  // bounded by its amplitude; the amplitude is negative and linear in a
  const double amp = a_n_amplitude(m1, p, d);
  EXPECT_LT(amp, 0.0);
  for (int i = 0; i < 100; ++i) EXPECT_LE(std::abs(kernel_a_n(m1, p, d, 0.037 * i)), std::abs(amp) * (1.0 + 1e-15));
  const DropletSpec half{{0, 0, 0}, 0.01, 0.5};
  EXPECT_NEAR(amp / a_n_amplitude(spectrum::build_eigensystem(0.01, 1).modes[0], p, half), 2.0, 1e-12);
}

TEST(DropletResponse, ModeBVanishesWithoutRemainder) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto sys = spectrum::build_eigensystem(d.radius, 5);
  for (const auto& m : sys.modes) {
    for (double x : kernel_b_n_samples(m, unit_path(), d, 1e-3, 50)) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(kernel_b_n(m, unit_path(), d, 0.2, 1e-3), 0.0);
  }
}

TEST(DropletResponse, ModeBOnLinearRemainder) {
  // g(s) = (s - zeta)_+ gives b_n(t) = -(avg^2 / lambda) (2t - sin(w t) / w).
  const DropletSpec d{{0, 0, 0}, 0.05, 0.5};
  const auto sys = spectrum::build_eigensystem(d.radius, 4);
  const double zeta = 0.4, dt = 1e-4;
  TimeSignal g = TimeSignal::zeros(0.0, dt, 20001);
  for (std::size_t i = 0; i < g.size(); ++i) g.samples[i] = std::max(0.0, g.time(i) - zeta);
  const auto rem = GreenRemainder::causal(g, zeta);
  PathData p = unit_path(zeta);
  p.remainder = &rem;
  for (const auto& m : sys.modes) {
    const double w = mode_frequency(m, d);
    const double pref = -m.avg * m.avg / m.lambda;
    const auto b = kernel_b_n_samples(m, p, d, dt, 10001);
    for (std::size_t i = 0; i < b.size(); i += 500) {
      const double t = dt * static_cast<double>(i);
      EXPECT_NEAR(b[i], pref * (2.0 * t - std::sin(w * t) / w), 1e-6 * std::abs(pref)) << "n=" << m.n << " t=" << t;
    }
  }
  // the remainder has to cover [0, T + zeta]
  EXPECT_THROW(kernel_b_n_samples(sys.modes[0], p, d, dt, 20000), InvalidArgument);
}

TEST(DropletResponse, SingleModeKernelIsModeA) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto sys = spectrum::build_eigensystem(d.radius, 1);
  const PathData p = unit_path(0.5);
  const auto k = assemble_kernel(sys, p, d, 1.2, 1e-3);
  EXPECT_EQ(k.K.samples[0], 0.0);
  EXPECT_EQ(k.K.size(), 1201u);
  const double amp = std::abs(a_n_amplitude(sys.modes[0], p, d));
  for (std::size_t i = 0; i < k.K.size(); ++i) EXPECT_NEAR(k.K.samples[i], kernel_a_n(sys.modes[0], p, d, k.K.time(i)), 1e-12 * amp);
  EXPECT_FALSE(k.remainder_included);
  EXPECT_EQ(k.n_max, 1);
}

TEST(DropletResponse, KernelNormLinearInRadius) {
  const PathData p = unit_path(0.5);
  const DropletSpec d1{{0, 0, 0}, 0.04, 0.5}, d2{{0, 0, 0}, 0.02, 0.5};
  const auto k1 = assemble_kernel(spectrum::build_eigensystem(0.04, 100), p, d1, 1.2, 1e-3);
  const auto k2 = assemble_kernel(spectrum::build_eigensystem(0.02, 100), p, d2, 1.2, 1e-3);
  EXPECT_NEAR(k1.kernel_norm / k2.kernel_norm, 2.0, 1e-10);
}

TEST(DropletResponse, KernelRejectsBadSetups) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto sys = spectrum::build_eigensystem(d.radius, 10);
  // kappa T = 1.2 breaks the Riesz condition
  EXPECT_THROW(assemble_kernel(sys, unit_path(), d, 2.4, 1e-3), InvalidArgument);
  EXPECT_THROW(assemble_kernel(sys, unit_path(0.0), d, 1.2, 1e-3), InvalidArgument);
  EXPECT_THROW(assemble_kernel(sys, unit_path(), DropletSpec{{0, 0, 0}, 0.03, 0.5}, 1.2, 1e-3), InvalidArgument);
  EXPECT_THROW(assemble_kernel(sys, unit_path(), DropletSpec{{0, 0, 0}, 0.02, 0.0}, 1.2, 1e-3), InvalidArgument);
}

TEST(DropletResponse, SynthesisOfZeroIsZero) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto k = assemble_kernel(spectrum::build_eigensystem(d.radius, 50), unit_path(0.5), d, 1.2, 1e-3);
  for (double x : synthesize_w(k, TimeSignal::zeros(0.0, 1e-3, 1201)).samples) EXPECT_EQ(x, 0.0);
}

TEST(DropletResponse, SynthesisWithZeroKernelIsShiftedScaling) {
  ResponseKernel k;
  k.alpha = 2.0;
  k.zeta = 0.3;
  k.K = TimeSignal::zeros(0.0, 1e-3, 1001);
  const auto v = smooth_trace(1e-3, 1001);
  const auto w = synthesize_w(k, v);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = w.time(i);
    const double expect = t <= 0.3 ? 0.0 : 2.0 * v.at(t - 0.3);
    EXPECT_NEAR(w.samples[i], expect, 1e-13);
  }
}

TEST(DropletResponse, SynthesisIsCausalAndLinear) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const double zeta = 0.45;
  const auto k = assemble_kernel(spectrum::build_eigensystem(d.radius, 100), unit_path(zeta), d, 1.2, 5e-4);
  const auto v1 = smooth_trace(5e-4, 2401);
  TimeSignal v2 = v1;
  for (std::size_t i = 0; i < v2.size(); ++i) v2.samples[i] = std::cos(3.0 * v2.time(i)) * v2.time(i);
  const auto w1 = synthesize_w(k, v1), w2 = synthesize_w(k, v2);
  TimeSignal mix = v1;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] = 2.0 * v1.samples[i] - 0.5 * v2.samples[i];
  const auto wm = synthesize_w(k, mix);
  const double scale = wm.max_abs();
  for (std::size_t i = 0; i < w1.size(); ++i) {
    if (w1.time(i) <= zeta) {
      EXPECT_EQ(w1.samples[i], 0.0);
      EXPECT_EQ(w2.samples[i], 0.0);
    }
    EXPECT_NEAR(wm.samples[i], 2.0 * w1.samples[i] - 0.5 * w2.samples[i], 1e-12 * scale);
  }
}

TEST(DropletResponse, SynthesisScalesLinearlyWithRadius) {
  const auto v = smooth_trace(1e-3, 1201);
  std::vector<double> as, norms;
  for (double a : {0.08, 0.04, 0.02, 0.01}) {
    const DropletSpec d{{0, 0, 0}, a, 0.5};
    const auto k = assemble_kernel(spectrum::build_eigensystem(a, 100), unit_path(0.3), d, 1.2, 1e-3);
    as.push_back(a);
    norms.push_back(synthesize_w(k, v).max_abs());
  }
  const double slope = loglog_slope(as, norms);
  EXPECT_GE(slope, 0.95);
  EXPECT_LE(slope, 1.05);
}

TEST(DropletResponse, TruncationStaysWithinTail) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto v = smooth_trace(5e-4, 2401);
  const PathData p = unit_path(0.3);
  const auto k100 = assemble_kernel(spectrum::build_eigensystem(d.radius, 100), p, d, 1.2, 5e-4);
  const auto k400 = assemble_kernel(spectrum::build_eigensystem(d.radius, 400), p, d, 1.2, 5e-4);
  const auto w100 = synthesize_w(k100, v), w400 = synthesize_w(k400, v);
  double change = 0.0;
  for (std::size_t i = 0; i < w100.size(); ++i) change = std::max(change, std::abs(w400.samples[i] - w100.samples[i]));
  EXPECT_GT(change, 0.0);
  EXPECT_LE(change, synthesis_tail(k100, v));
}

TEST(DropletResponse, SynthesisRejectsMismatchedTrace) {
  const DropletSpec d{{0, 0, 0}, 0.02, 0.5};
  const auto k = assemble_kernel(spectrum::build_eigensystem(d.radius, 10), unit_path(0.3), d, 1.2, 1e-3);
  EXPECT_THROW(synthesize_w(k, smooth_trace(2e-3, 601)), GridMismatch);
  EXPECT_THROW(synthesize_w(k, smooth_trace(1e-3, 100)), InvalidArgument);
}

TEST(DropletResponse, SyntheticRemainderShape) {
  const auto r = synthetic_remainder(0.01, 121, 0.2, 0.02, 3.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r.time(i) <= 0.2) {
      EXPECT_EQ(r.samples[i], 0.0);
    }
    EXPECT_LE(r.samples[i], 3.0 * 0.02 * 0.02 + 1e-18);
    EXPECT_GE(r.samples[i], 0.0);
  }
}

}  // namespace
