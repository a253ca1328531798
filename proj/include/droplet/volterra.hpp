#pragma once

// Second-kind convolution Volterra operator A f = alpha f + K * f on [0, T]
// and its inverse, by truncated Neumann series and by direct time marching.
//
// Both routes use the same product-trapezoid discretization of the causal
// convolution, so they invert the same discrete operator:
//   (K * f)(t_0) = 0,
//   (K * f)(t_i) = dt [ K_0 f_i / 2 + sum_{j=1}^{i-1} K_{i-j} f_j + K_i f_0 / 2 ].

#include <cmath>
#include <limits>
#include <vector>

#include "droplet/common.hpp"

namespace droplet::volterra {

inline constexpr double kDefaultTolerance = 1e-8;

class VolterraOp {
 public:
  VolterraOp(double alpha, TimeSignal kernel) : alpha_(alpha), kernel_(std::move(kernel)) {
    if (alpha_ == 0.0 || !std::isfinite(alpha_)) throw InvalidArgument("VolterraOp: alpha must be nonzero");
    if (std::abs(kernel_.t0) > 1e-15) throw InvalidArgument("VolterraOp: kernel must be sampled from t = 0");
    norm_ = l2_norm(kernel_);
  }

  double alpha() const { return alpha_; }
  const TimeSignal& kernel() const { return kernel_; }
  /// Discrete L2(0, T) norm of the kernel.
  double kernel_norm() const { return norm_; }

 private:
  double alpha_;
  TimeSignal kernel_;
  double norm_ = 0.0;
};

namespace detail {

inline void check_grid(const VolterraOp& op, const TimeSignal& f) {
  const TimeSignal& k = op.kernel();
  if (std::abs(k.dt - f.dt) > 1e-12 * k.dt) throw GridMismatch("volterra: signal dt differs from kernel dt");
  if (f.size() > k.size()) throw GridMismatch("volterra: signal extends beyond the kernel horizon");
}

}  // namespace detail

/// Trapezoidal causal convolution (K * f) on the grid of f.
inline TimeSignal convolve(const TimeSignal& kernel, const TimeSignal& f) {
  const std::size_t m = f.size();
  TimeSignal out = TimeSignal::zeros(f.t0, f.dt, m);
  const auto& K = kernel.samples;
  const auto& x = f.samples;
  for (std::size_t i = 1; i < m; ++i) {
    double acc = 0.5 * (K[0] * x[i] + K[i] * x[0]);
    for (std::size_t j = 1; j < i; ++j) acc += K[i - j] * x[j];
    out.samples[i] = f.dt * acc;
  }
  return out;
}

inline TimeSignal apply(const VolterraOp& op, const TimeSignal& f) {
  detail::check_grid(op, f);
  TimeSignal out = convolve(op.kernel(), f);
  for (std::size_t i = 0; i < f.size(); ++i) out.samples[i] += op.alpha() * f.samples[i];
  return out;
}

/// Pointwise bound |K^n f(t)| <= ||K||^n ||f||_inf t^{n/2} / sqrt(n!).
inline double power_bound(double kernel_norm, double f_sup, double t, int n) {
  if (n == 0) return f_sup;
  const double log_b = n * std::log(kernel_norm) + 0.5 * n * std::log(t) - 0.5 * std::lgamma(n + 1.0);
  return f_sup * std::exp(log_b);
}

/// Certificate for stopping after the alpha^{-N-1} K^N term:
/// |alpha|^{-N-2} ||K||^{N+1} T^{(N+1)/2} / sqrt((N+1)!) ||g||_inf.
inline double neumann_remainder_bound(double alpha, double kernel_norm, double horizon, double g_sup, int last_term) {
  const int n = last_term + 1;
  if (kernel_norm == 0.0 || g_sup == 0.0) return 0.0;
  const double log_b = -(n + 1) * std::log(std::abs(alpha)) + n * std::log(kernel_norm) + 0.5 * n * std::log(horizon) -
                       0.5 * std::lgamma(n + 1.0) + std::log(g_sup);
  return std::exp(log_b);
}

struct NeumannResult {
  TimeSignal solution;
  int terms = 0;  // highest power N of K that was summed
  double certified_bound = 0.0;
};

/// (alpha I + K)^{-1} g = sum_n (-1)^n alpha^{-n-1} K^n g, truncated at the
/// first N whose remainder certificate falls below `tol`. Each power is
/// obtained by convolving the previous term.
inline NeumannResult invert_neumann(const VolterraOp& op, const TimeSignal& g, double tol = kDefaultTolerance) {
  detail::check_grid(op, g);
  if (!(tol > 0.0)) throw InvalidArgument("invert_neumann: tol must be positive");
  const double alpha = op.alpha();
  const double horizon = g.size() > 1 ? g.end_time() - g.t0 : g.dt;
  const double g_sup = g.max_abs();
  int n_terms = 0;
  constexpr int kMaxTerms = 100000;
  while (neumann_remainder_bound(alpha, op.kernel_norm(), horizon, g_sup, n_terms) >= tol) {
    if (++n_terms > kMaxTerms) throw Error("invert_neumann: truncation certificate not reached");
  }
  NeumannResult res;
  res.terms = n_terms;
  res.certified_bound = neumann_remainder_bound(alpha, op.kernel_norm(), horizon, g_sup, n_terms);
  TimeSignal term = g;
  for (double& v : term.samples) v /= alpha;
  std::vector<CompensatedSum> acc(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) acc[i].add(term.samples[i]);
  for (int n = 1; n <= n_terms; ++n) {
    term = convolve(op.kernel(), term);
    for (double& v : term.samples) v /= -alpha;
    for (std::size_t i = 0; i < g.size(); ++i) acc[i].add(term.samples[i]);
  }
  res.solution = TimeSignal::zeros(g.t0, g.dt, g.size());
  for (std::size_t i = 0; i < g.size(); ++i) res.solution.samples[i] = acc[i].value();
  return res;
}

/// Direct product-trapezoid marching, O(M^2).
inline TimeSignal invert_direct(const VolterraOp& op, const TimeSignal& g) {
  detail::check_grid(op, g);
  const double alpha = op.alpha();
  const auto& K = op.kernel().samples;
  const double dt = g.dt;
  const double pivot = alpha + 0.5 * dt * K[0];
  if (std::abs(pivot) <= std::numeric_limits<double>::epsilon() * std::abs(alpha)) {
    throw Error("invert_direct: pivot alpha + dt K(0)/2 vanishes");
  }
  const std::size_t m = g.size();
  TimeSignal f = TimeSignal::zeros(g.t0, dt, m);
  if (m == 0) return f;
  auto& x = f.samples;
  x[0] = g.samples[0] / alpha;
  for (std::size_t i = 1; i < m; ++i) {
    double acc = 0.5 * K[i] * x[0];
    for (std::size_t j = 1; j < i; ++j) acc += K[i - j] * x[j];
    x[i] = (g.samples[i] - dt * acc) / pivot;
  }
  return f;
}

/// Relative L2 residual ||A f - g|| / ||g||.
inline double residual(const VolterraOp& op, const TimeSignal& f, const TimeSignal& g) {
  const TimeSignal af = apply(op, f);
  return relative_l2_error(af.samples, g.samples);
}

}  // namespace droplet::volterra
