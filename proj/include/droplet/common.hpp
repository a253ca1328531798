#pragma once

// Shared value types: positions, uniform grids, sampled time signals and
// the exception hierarchy used across the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace droplet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two signals or fields live on incompatible sampling grids.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr bool operator==(Vec3 a, Vec3 b) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(Vec3 a, Vec3 b) { return (a - b).norm(); }

/// Neumaier-compensated accumulator. Summation order is the call order.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

using Index3 = std::array<std::size_t, 3>;

/// Uniform Cartesian node grid. Node (i,j,k) sits at origin + h*(i,j,k);
/// flat storage is node-major with x fastest: i + nx*(j + ny*k).
struct Grid3 {
  Vec3 origin{};
  double spacing = 1.0;
  Index3 dims{1, 1, 1};

  std::size_t node_count() const { return dims[0] * dims[1] * dims[2]; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  std::size_t index(const Index3& ijk) const { return index(ijk[0], ijk[1], ijk[2]); }

  Index3 unflatten(std::size_t flat) const {
    const std::size_t i = flat % dims[0];
    const std::size_t rest = flat / dims[0];
    return {i, rest % dims[1], rest / dims[1]};
  }

  Vec3 position(std::size_t i, std::size_t j, std::size_t k) const {
    return {origin.x + spacing * static_cast<double>(i), origin.y + spacing * static_cast<double>(j),
            origin.z + spacing * static_cast<double>(k)};
  }
  Vec3 position(std::size_t flat) const {
    const auto ijk = unflatten(flat);
    return position(ijk[0], ijk[1], ijk[2]);
  }

  Vec3 upper() const {
    return position(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  }

  /// True when p lies inside the closed bounding box of the nodes (with a
  /// relative slack of 1e-9 cells).
  bool contains(Vec3 p) const {
    const double slack = 1e-9 * spacing;
    const Vec3 hi = upper();
    for (std::size_t a = 0; a < 3; ++a) {
      if (p[a] < origin[a] - slack || p[a] > hi[a] + slack) return false;
    }
    return true;
  }

  friend bool operator==(const Grid3&, const Grid3&) = default;
};

/// Trilinear interpolation of node values at an arbitrary point; the point
/// is clamped to the grid box.
inline double trilinear(const Grid3& grid, std::span<const double> values, Vec3 p) {
  std::array<std::size_t, 3> lo{};
  std::array<double, 3> frac{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double n = static_cast<double>(grid.dims[a]);
    double s = (p[a] - grid.origin[a]) / grid.spacing;
    s = std::clamp(s, 0.0, n - 1.0);
    std::size_t i = static_cast<std::size_t>(std::floor(s));
    if (grid.dims[a] == 1) {
      lo[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    if (i >= grid.dims[a] - 1) i = grid.dims[a] - 2;
    lo[a] = i;
    frac[a] = s - static_cast<double>(i);
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const std::size_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    if ((di && grid.dims[0] == 1) || (dj && grid.dims[1] == 1) || (dk && grid.dims[2] == 1)) continue;
    const double w = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                     (dk ? frac[2] : 1.0 - frac[2]);
    acc += w * values[grid.index(lo[0] + di, lo[1] + dj, lo[2] + dk)];
  }
  return acc;
}

/// Uniformly sampled scalar time series: samples[i] is the value at t0 + i*dt.
struct TimeSignal {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> samples;

  TimeSignal() = default;
  TimeSignal(double start, double step, std::vector<double> values)
      : t0(start), dt(step), samples(std::move(values)) {
    if (!(dt > 0.0)) throw InvalidArgument("TimeSignal: dt must be positive");
  }
  /// Zero-filled signal of n samples.
  static TimeSignal zeros(double start, double step, std::size_t n) {
    return TimeSignal(start, step, std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  double end_time() const { return samples.empty() ? t0 : time(samples.size() - 1); }

  /// Linear interpolation at t. Outside the sampled range returns `outside`
  /// (zero by default, which is the causal extension before t0).
  double at(double t, double outside = 0.0) const {
    if (samples.empty()) return outside;
    const double s = (t - t0) / dt;
    if (s < 0.0) return outside;
    const double last = static_cast<double>(samples.size() - 1);
    if (s > last) {
      // Tolerate round-off right at the end of the record.
      return s - last < 1e-9 ? samples.back() : outside;
    }
    const std::size_t i = static_cast<std::size_t>(std::floor(s));
    if (i + 1 >= samples.size()) return samples.back();
    const double f = s - static_cast<double>(i);
    return samples[i] + f * (samples[i + 1] - samples[i]);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : samples) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Throws GridMismatch unless a and b share t0 and dt (to relative 1e-12).
inline void require_same_sampling(const TimeSignal& a, const TimeSignal& b, const char* what) {
  const double tol = 1e-12 * std::max(std::abs(a.dt), std::abs(b.dt));
  if (std::abs(a.dt - b.dt) > tol || std::abs(a.t0 - b.t0) > 1e-12 * std::max(1.0, std::abs(a.t0))) {
    throw GridMismatch(std::string(what) + ": sampling grids differ (t0/dt)");
  }
}

/// Discrete L2 norm on the sample grid, sqrt(dt * sum v_i^2) with trapezoid end weights.
inline double l2_norm(const TimeSignal& s) {
  if (s.size() < 2) return 0.0;
  CompensatedSum acc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = (i == 0 || i + 1 == s.size()) ? 0.5 : 1.0;
    acc.add(w * s.samples[i] * s.samples[i]);
  }
  return std::sqrt(s.dt * acc.value());
}

/// Relative L2 distance ||a - b|| / ||b|| over the common prefix of the two records.
inline double relative_l2_error(std::span<const double> approx, std::span<const double> exact) {
  const std::size_t n = std::min(approx.size(), exact.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = approx[i] - exact[i];
    num += d * d;
    den += exact[i] * exact[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::sqrt(num);
  return std::sqrt(num / den);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) throw InvalidArgument("loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace droplet
