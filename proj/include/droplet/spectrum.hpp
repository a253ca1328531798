#pragma once

// Radial (l = 0) eigensystem of the Newtonian operator on a ball of radius a
// and the spectral sums that feed the droplet response coefficients.
//
// The radial eigenfunctions are e(r) ~ sin(r / sqrt(lambda)) / r with
// lambda_n = a^2 / m_n^2, where m_n is the n-th positive root of
// tan(m) + 2m = 0. Writing m_n = n*pi - pi/2 + gamma_n gives the equivalent
// fixed point tan(gamma_n) = 1 / (2 m_n), which is what the solver works on:
// it keeps every trigonometric evaluation away from the poles of tan.

#include <cmath>
#include <numbers>
#include <vector>

#include "droplet/common.hpp"

namespace droplet::spectrum {

inline constexpr int kDefaultModeCount = 200;

struct RootPair {
  double m = 0.0;
  double gamma = 0.0;
};

struct EigenMode {
  int n = 0;
  double m = 0.0;       // dimensionless root
  double gamma = 0.0;   // m - (n*pi - pi/2)
  double lambda = 0.0;  // eigenvalue, length^2
  double avg = 0.0;     // integral of the L2-normalized eigenfunction, length^{3/2}

  // Raw (unnormalized) constants of e_hat(r) = sqrt(2 sqrt(lambda)/pi) sin(r/sqrt(lambda)) / r.
  double raw_integral = 0.0;
  double raw_norm_sq = 0.0;
  // The same constants in the closed form printed alongside the tan relation,
  // kept for audit; they differ from the raw ones by constant factors.
  double printed_integral = 0.0;
  double printed_norm_sq = 0.0;

  /// (avg)^2 / lambda, the n-th term of the series behind alpha.
  double series_term() const { return avg * avg / lambda; }
};

struct SeriesSum {
  double value = 0.0;
  double tail_bound = 0.0;
};

struct EigenSystem {
  double radius = 0.0;
  std::vector<EigenMode> modes;
  double series_sum = 0.0;
  double tail_bound = 0.0;

  int n_max() const { return static_cast<int>(modes.size()); }
};

namespace detail {

// G(gamma) = 2 m(gamma) sin(gamma) - cos(gamma), strictly increasing on
// [0, pi/2] with G(0) = -1 < 0 < G(pi/2).
inline double fixed_point_residual(int n, double gamma) {
  const double m = (n - 0.5) * std::numbers::pi + gamma;
  return 2.0 * m * std::sin(gamma) - std::cos(gamma);
}

}  // namespace detail

/// tan(m_n) + 2 m_n evaluated through the shifted form -cot(gamma_n) + 2 m_n.
/// A direct std::tan(m) call loses ~|m|^2 ulps near the pole, so this is the
/// only meaningful residual for large n.
inline double root_residual(int n, double gamma) {
  const double m = (n - 0.5) * std::numbers::pi + gamma;
  return -std::cos(gamma) / std::sin(gamma) + 2.0 * m;
}

/// Roots of tan(m) + 2m = 0, the n-th inside ((n - 1/2) pi, n pi), n = 1..n_max.
inline std::vector<RootPair> solve_roots(int n_max) {
  if (n_max < 1) throw InvalidArgument("solve_roots: n_max must be >= 1");
  std::vector<RootPair> roots;
  roots.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    double lo = 0.0, hi = std::numbers::pi / 2.0;
    while (hi - lo > 1e-13) {
      const double mid = 0.5 * (lo + hi);
      if (detail::fixed_point_residual(n, mid) < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    double gamma = 0.5 * (lo + hi);
    // One Newton polish: G'(gamma) = 3 sin(gamma) + 2 m cos(gamma).
    const double m0 = (n - 0.5) * std::numbers::pi + gamma;
    const double slope = 3.0 * std::sin(gamma) + 2.0 * m0 * std::cos(gamma);
    gamma -= detail::fixed_point_residual(n, gamma) / slope;
    roots.push_back({(n - 0.5) * std::numbers::pi + gamma, gamma});
  }
  return roots;
}

/// sum_n (avg_n)^2 / lambda_n in ascending n with compensated summation.
/// The tail estimate C / N uses C = max(term_n * n^2) over the last ten
/// computed terms; terms decay like n^-2 with term_n * n^2 decreasing.
inline SeriesSum series_sum(const EigenSystem& sys) {
  CompensatedSum acc;
  for (const auto& mode : sys.modes) acc.add(mode.series_term());
  double c = 0.0;
  const std::size_t count = sys.modes.size();
  const std::size_t first = count > 10 ? count - 10 : 0;
  for (std::size_t i = first; i < count; ++i) {
    const double n = static_cast<double>(sys.modes[i].n);
    c = std::max(c, sys.modes[i].series_term() * n * n);
  }
  const double n_max = static_cast<double>(count);
  return {acc.value(), count == 0 ? 0.0 : c / n_max};
}

inline EigenSystem build_eigensystem(double a, int n_max = kDefaultModeCount) {
  if (!(a > 0.0)) throw InvalidArgument("build_eigensystem: radius must be positive");
  const auto roots = solve_roots(n_max);
  EigenSystem sys;
  sys.radius = a;
  sys.modes.reserve(roots.size());
  const double sqrt_two_pi_cubed = std::sqrt(2.0 * std::pow(std::numbers::pi, 3));
  for (int n = 1; n <= n_max; ++n) {
    const auto [m, gamma] = roots[static_cast<std::size_t>(n - 1)];
    EigenMode mode;
    mode.n = n;
    mode.m = m;
    mode.gamma = gamma;
    mode.lambda = a * a / (m * m);
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;  // (-1)^n
    // sin(m) = -(-1)^n cos(gamma), cos(m) = (-1)^n sin(gamma).
    const double sin_m = -sign * std::cos(gamma);
    const double cos_m = sign * std::sin(gamma);
    const double lam = mode.lambda;
    // integral over the ball: 4 pi sqrt(2 sqrt(lam)/pi) lam * int_0^m s sin s ds
    mode.raw_integral = 4.0 * std::sqrt(2.0 * std::numbers::pi) * std::pow(lam, 1.25) * (sin_m - m * cos_m);
    // squared norm: 8 lam * int_0^m sin^2 s ds = 4 lam (m - sin m cos m)
    mode.raw_norm_sq = 4.0 * lam * (m - sin_m * cos_m);
    mode.avg = mode.raw_integral / std::sqrt(mode.raw_norm_sq);
    mode.printed_integral = sign * 3.0 * sqrt_two_pi_cubed * std::pow(lam, 1.25) * std::cos(gamma);
    mode.printed_norm_sq = 2.0 * std::numbers::pi * lam * (m + std::cos(gamma) * std::cos(gamma) / m);
    sys.modes.push_back(mode);
  }
  const auto sum = series_sum(sys);
  sys.series_sum = sum.value;
  sys.tail_bound = sum.tail_bound;
  return sys;
}

/// The sine family sin(c1 t / sqrt(lambda_n)) is a Riesz basis on (0, T)
/// when c1 * T < a.
inline bool check_riesz_condition(double a, double c1, double T) { return c1 * T < a; }

}  // namespace droplet::spectrum
