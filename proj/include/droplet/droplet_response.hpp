#pragma once

// Measured droplet signal w(x, .) synthesized from the background trace
// v(z, .) through the leading-order expansion
//   w(x, t) = alpha(x, z) v~(t) + int_0^t K(t - s) v~(s) ds,   v~(t) = v(z, t - zeta(x, z)),
// with K = sum_n (a_n + b_n). The O(a^2) remainder is dropped.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "droplet/background.hpp"
#include "droplet/common.hpp"
#include "droplet/spectrum.hpp"
#include "droplet/volterra.hpp"

namespace droplet::response {

using background::BackgroundModel;
using background::GreenRemainder;
using spectrum::EigenMode;
using spectrum::EigenSystem;

/// Ball D = z + a B with interior speed c1 = kappa * a.
struct DropletSpec {
  Vec3 center{};
  double radius = 0.0;
  double kappa = 0.0;

  double c1() const { return kappa * radius; }
  /// q(z) = c0(z)^2 / c1^2 - 1.
  double contrast(double c0) const { return c0 * c0 / (c1() * c1()) - 1.0; }

  void validate() const {
    if (!(radius > 0.0)) throw InvalidArgument("DropletSpec: radius must be positive");
    if (!(kappa > 0.0)) throw InvalidArgument("DropletSpec: kappa must be positive");
  }
};

/// Medium quantities along the probe-to-centre path.
struct PathData {
  double c0_center = 1.0;
  double zeta = 0.0;
  background::Amplitude sigma;
  const GreenRemainder* remainder = nullptr;

  bool has_remainder() const { return remainder != nullptr && !remainder->is_zero(); }
};

inline PathData path_data(const BackgroundModel& bg, Vec3 x, const DropletSpec& d) {
  PathData p;
  p.c0_center = bg.speed.at(d.center);
  p.zeta = bg.travel_time(x, d.center);
  p.sigma = background::amplitude_sigma(x, d.center, bg.speed);
  if (bg.remainder) p.remainder = bg.remainder(d.center);
  return p;
}

struct AlphaCoeff {
  double value = 0.0;
  double tail = 0.0;  // bound on the truncated part of the series
};

inline void check_path(const PathData& p) {
  if (!(p.zeta > 0.0)) throw InvalidArgument("response: travel time zeta must be positive (probe on the droplet?)");
}

inline AlphaCoeff alpha_coeff(const EigenSystem& sys, const PathData& path) {
  check_path(path);
  const double scale = path.sigma.value / (4.0 * std::numbers::pi * path.c0_center * path.zeta);
  return {-scale * sys.series_sum, scale * sys.tail_bound};
}

inline AlphaCoeff alpha_coeff(const EigenSystem& sys, const BackgroundModel& bg, Vec3 x, const DropletSpec& d) {
  return alpha_coeff(sys, path_data(bg, x, d));
}

/// Angular frequency c1 / sqrt(lambda_n) = kappa * m_n of the n-th mode.
inline double mode_frequency(const EigenMode& mode, const DropletSpec& d) { return d.c1() / std::sqrt(mode.lambda); }

/// Amplitude multiplying sin(omega_n t) in a_n.
inline double a_n_amplitude(const EigenMode& mode, const PathData& path, const DropletSpec& d) {
  return -path.sigma.value * d.c1() * mode.avg * mode.avg /
         (4.0 * std::numbers::pi * std::pow(mode.lambda, 1.5) * path.c0_center * path.zeta);
}

inline double kernel_a_n(const EigenMode& mode, const PathData& path, const DropletSpec& d, double t) {
  return a_n_amplitude(mode, path, d) * std::sin(mode_frequency(mode, d) * t);
}

/// b_n sampled on t_i = i*dt, i < count. Uses g(s) = 0 for s <= zeta, so
/// int_0^{t+zeta} sin(w(t+zeta-s)) g(s) ds = int_0^t sin(w(t-u)) g(zeta+u) du,
/// evaluated with the trapezoid rule through running cosine/sine sums.
inline std::vector<double> kernel_b_n_samples(const EigenMode& mode, const PathData& path, const DropletSpec& d,
                                              double dt, std::size_t count) {
  std::vector<double> out(count, 0.0);
  if (!path.has_remainder()) return out;
  const GreenRemainder& g = *path.remainder;
  const double needed = path.zeta + dt * static_cast<double>(count - 1);
  if (g.horizon() + 1e-12 * std::max(1.0, needed) < needed) {
    throw InvalidArgument("kernel_b_n: Green remainder does not cover [0, T + zeta]");
  }
  const double omega = mode_frequency(mode, d);
  const double pref = -mode.avg * mode.avg / mode.lambda;
  double c_run = 0.0, s_run = 0.0;
  double c_first = 0.0, s_first = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double u = dt * static_cast<double>(i);
    const double gu = g.at(path.zeta + u);
    const double cu = std::cos(omega * u) * gu, su = std::sin(omega * u) * gu;
    if (i == 0) {
      c_first = cu;
      s_first = su;
    }
    c_run += cu;
    s_run += su;
    double conv = 0.0;
    if (i > 0) {
      const double ci = dt * (c_run - 0.5 * (c_first + cu));
      const double si = dt * (s_run - 0.5 * (s_first + su));
      conv = std::sin(omega * u) * ci - std::cos(omega * u) * si;
    }
    out[i] = pref * (omega * conv + gu);
  }
  return out;
}

inline double kernel_b_n(const EigenMode& mode, const PathData& path, const DropletSpec& d, double t, double dt) {
  if (!path.has_remainder()) return 0.0;
  const auto count = static_cast<std::size_t>(std::llround(t / dt)) + 1;
  return kernel_b_n_samples(mode, path, d, dt, count).back();
}

struct ResponseKernel {
  double alpha = 0.0;
  double alpha_tail = 0.0;
  TimeSignal K;  // sampled on [0, T]
  double zeta = 0.0;
  int n_max = 0;
  double kernel_norm = 0.0;
  /// Estimate of ||K_infinity - K_N|| in L2(0, T).
  double kernel_tail = 0.0;
  bool sigma_approximate = false;
  bool remainder_included = false;
  std::string zeta_provenance;

  volterra::VolterraOp op() const { return {alpha, K}; }
};

/// Samples K on t_i = i*dt over [0, T], summing modes in ascending n with
/// compensated summation.
inline ResponseKernel assemble_kernel(const EigenSystem& sys, const PathData& path, const DropletSpec& d, double T,
                                      double dt, std::string zeta_provenance = "supplied") {
  d.validate();
  if (std::abs(sys.radius - d.radius) > 1e-12 * d.radius) {
    throw InvalidArgument("assemble_kernel: eigensystem radius differs from droplet radius");
  }
  if (!spectrum::check_riesz_condition(d.radius, d.c1(), T)) {
    throw InvalidArgument("assemble_kernel: Riesz condition c1 T < a violated (kappa T >= 1)");
  }
  if (!(dt > 0.0) || !(T > 0.0)) throw InvalidArgument("assemble_kernel: T and dt must be positive");
  check_path(path);
  const auto count = static_cast<std::size_t>(std::llround(T / dt)) + 1;
  std::vector<CompensatedSum> acc(count);
  for (const auto& mode : sys.modes) {
    const double amp = a_n_amplitude(mode, path, d);
    const double omega = mode_frequency(mode, d);
    std::vector<double> b;
    if (path.has_remainder()) b = kernel_b_n_samples(mode, path, d, dt, count);
    // sin(omega t_i) by angle addition, re-anchored every 64 steps.
    const double cs = std::cos(omega * dt), sn = std::sin(omega * dt);
    double s = 0.0, c = 1.0;
    for (std::size_t i = 0; i < count; ++i) {
      if (i % 64 == 0) {
        s = std::sin(omega * dt * static_cast<double>(i));
        c = std::cos(omega * dt * static_cast<double>(i));
      }
      double v = amp * s;
      if (!b.empty()) v += b[i];
      acc[i].add(v);
      const double s_next = s * cs + c * sn;
      c = c * cs - s * sn;
      s = s_next;
    }
  }
  ResponseKernel k;
  const auto alpha = alpha_coeff(sys, path);
  k.alpha = alpha.value;
  k.alpha_tail = alpha.tail;
  k.K = TimeSignal::zeros(0.0, dt, count);
  for (std::size_t i = 0; i < count; ++i) k.K.samples[i] = acc[i].value();
  k.zeta = path.zeta;
  k.n_max = sys.n_max();
  k.kernel_norm = l2_norm(k.K);
  // The sines are near-orthogonal on (0, 1/kappa) with weight 1/(2 kappa);
  // amplitudes decay like 1/n, so the L2 tail is ~ sqrt(C / (2 kappa N)).
  // A factor 2 covers the non-orthogonality on (0, T).
  double c = 0.0;
  const std::size_t nm = sys.modes.size();
  for (std::size_t i = nm > 10 ? nm - 10 : 0; i < nm; ++i) {
    const double amp = a_n_amplitude(sys.modes[i], path, d);
    const double n = static_cast<double>(sys.modes[i].n);
    c = std::max(c, amp * amp * n * n);
  }
  k.kernel_tail = nm == 0 ? 0.0 : 2.0 * std::sqrt(c / (2.0 * d.kappa * static_cast<double>(nm)));
  k.sigma_approximate = path.sigma.approximate;
  k.remainder_included = path.has_remainder();
  k.zeta_provenance = std::move(zeta_provenance);
  return k;
}

inline ResponseKernel assemble_kernel(const EigenSystem& sys, const BackgroundModel& bg, Vec3 x, const DropletSpec& d,
                                      double T, double dt) {
  return assemble_kernel(sys, path_data(bg, x, d), d, T, dt, bg.travel_time_provenance());
}

/// v~(t_i) = v(t_i - zeta) by linear interpolation, zero before zeta.
inline TimeSignal shift_trace(const TimeSignal& v, double zeta, double dt, std::size_t count) {
  TimeSignal out = TimeSignal::zeros(0.0, dt, count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = dt * static_cast<double>(i) - zeta;
    if (t <= v.t0) continue;
    out.samples[i] = v.at(t, v.samples.empty() ? 0.0 : v.samples.back());
  }
  return out;
}

/// w = alpha v~ + K * v~ on the kernel's grid [0, T]; exactly zero for t <= zeta.
inline TimeSignal synthesize_w(const ResponseKernel& kern, const TimeSignal& v_trace) {
  if (std::abs(v_trace.dt - kern.K.dt) > 1e-12 * kern.K.dt) throw GridMismatch("synthesize_w: dt mismatch");
  if (std::abs(v_trace.t0) > 1e-15) throw InvalidArgument("synthesize_w: v trace must start at t = 0");
  const std::size_t count = kern.K.size();
  if (v_trace.size() + static_cast<std::size_t>(std::floor(kern.zeta / kern.K.dt)) < count) {
    throw InvalidArgument("synthesize_w: v trace does not cover [0, T - zeta]");
  }
  const TimeSignal shifted = shift_trace(v_trace, kern.zeta, kern.K.dt, count);
  return volterra::apply(kern.op(), shifted);
}

/// Sup-norm bound on how much w can still move when more modes are added:
/// (alpha_tail + kernel_tail * sqrt(T)) * sup |v|.
inline double synthesis_tail(const ResponseKernel& kern, const TimeSignal& v_trace) {
  const double horizon = kern.K.end_time();
  return (kern.alpha_tail + kern.kernel_tail * std::sqrt(horizon)) * v_trace.max_abs();
}

/// Smooth causal stand-in for the dropped O(a^2) remainder:
/// C a^2 (1 - cos(pi (t - zeta) / T)) / 2 for t > zeta.
inline TimeSignal synthetic_remainder(double dt, std::size_t count, double zeta, double a, double constant) {
  TimeSignal r = TimeSignal::zeros(0.0, dt, count);
  const double horizon = dt * static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = dt * static_cast<double>(i) - zeta;
    if (s <= 0.0) continue;
    r.samples[i] = constant * a * a * 0.5 * (1.0 - std::cos(std::numbers::pi * s / horizon));
  }
  return r;
}

}  // namespace droplet::response
