#pragma once

// Background medium: the speed field c0, travel-time fields from first-order
// fast marching, the singular amplitude sigma and the smooth Green remainder g.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "droplet/common.hpp"

namespace droplet::background {

enum class SpeedKind { constant, gridded };

inline const char* to_string(SpeedKind k) { return k == SpeedKind::constant ? "constant" : "gridded"; }

class SpeedField {
 public:
  static SpeedField constant(const Grid3& grid, double c0) {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw InvalidArgument("SpeedField: speed must be positive and finite");
    SpeedField f;
    f.grid_ = grid;
    f.kind_ = SpeedKind::constant;
    f.values_.assign(grid.node_count(), c0);
    return f;
  }

  static SpeedField gridded(const Grid3& grid, std::vector<double> values) {
    if (values.size() != grid.node_count()) throw InvalidArgument("SpeedField: value count does not match grid");
    for (double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("SpeedField: speeds must be positive and finite");
    }
    SpeedField f;
    f.grid_ = grid;
    f.kind_ = SpeedKind::gridded;
    f.values_ = std::move(values);
    return f;
  }

  /// Samples c(x) at every node of `grid`.
  static SpeedField from_function(const Grid3& grid, const std::function<double(Vec3)>& c) {
    std::vector<double> v(grid.node_count());
    for (std::size_t n = 0; n < v.size(); ++n) v[n] = c(grid.position(n));
    return gridded(grid, std::move(v));
  }

  const Grid3& grid() const { return grid_; }
  SpeedKind kind() const { return kind_; }
  std::span<const double> values() const { return values_; }
  double at_node(std::size_t flat) const { return values_[flat]; }

  /// Trilinear sample; exact for constant fields anywhere in space.
  double at(Vec3 p) const {
    if (kind_ == SpeedKind::constant) return values_.front();
    return trilinear(grid_, values_, p);
  }

  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }

 private:
  Grid3 grid_;
  SpeedKind kind_ = SpeedKind::constant;
  std::vector<double> values_;
};

struct TravelTimeField {
  Vec3 source{};
  Grid3 grid;
  std::vector<double> values;

  double at(Vec3 p) const { return trilinear(grid, values, p); }
};

/// Exact travel time for a constant background.
inline double travel_time_constant(Vec3 x, Vec3 z, double c0) {
  if (!(c0 > 0.0)) throw InvalidArgument("travel_time_constant: c0 must be positive");
  return distance(x, z) / c0;
}

/// A node with a prescribed arrival time, used to start the march.
struct Seed {
  std::size_t node = 0;
  double time = 0.0;
};

namespace detail {

// Upwind update at `node` from the accepted neighbours: solves
// sum_a ((T - T_a)_+ / h)^2 = (1/c)^2 over the smallest consistent set of axes.
inline double eikonal_update(const Grid3& grid, std::span<const double> times, std::span<const unsigned char> known,
                             std::size_t node, double slowness) {
  const Index3 ijk = grid.unflatten(node);
  std::array<double, 3> nb{};
  std::size_t count = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (int dir = -1; dir <= 1; dir += 2) {
      if (dir < 0 && ijk[a] == 0) continue;
      if (dir > 0 && ijk[a] + 1 >= grid.dims[a]) continue;
      Index3 q = ijk;
      q[a] = dir < 0 ? q[a] - 1 : q[a] + 1;
      const std::size_t qi = grid.index(q);
      if (known[qi]) best = std::min(best, times[qi]);
    }
    if (std::isfinite(best)) nb[count++] = best;
  }
  std::sort(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(count));
  const double fh = slowness * grid.spacing;
  double t = nb[0] + fh;
  for (std::size_t k = 2; k <= count; ++k) {
    if (t <= nb[k - 1]) break;
    // k-term quadratic: k T^2 - 2 S T + (Q - fh^2) = 0
    double s = 0.0, q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      s += nb[i];
      q += nb[i] * nb[i];
    }
    const double kk = static_cast<double>(k);
    const double disc = s * s - kk * (q - fh * fh);
    if (disc < 0.0) break;
    t = (s + std::sqrt(disc)) / kk;
  }
  return t;
}

}  // namespace detail

/// First-order upwind fast marching from a set of seed nodes. Ties in the
/// trial heap are broken by flat node index, so the accepted order (and the
/// result) is deterministic.
inline std::vector<double> fast_march_from_seeds(const SpeedField& speed, std::span<const Seed> seeds) {
  const Grid3& grid = speed.grid();
  const std::size_t n_nodes = grid.node_count();
  if (seeds.empty()) throw InvalidArgument("fast_march: no seed nodes");
  std::vector<double> times(n_nodes, std::numeric_limits<double>::infinity());
  std::vector<unsigned char> known(n_nodes, 0);

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (const auto& s : seeds) {
    if (s.node >= n_nodes) throw InvalidArgument("fast_march: seed node out of range");
    if (s.time < times[s.node]) times[s.node] = s.time;
  }
  for (const auto& s : seeds) heap.emplace(times[s.node], s.node);

  while (!heap.empty()) {
    const auto [t, node] = heap.top();
    heap.pop();
    if (known[node] || t > times[node]) continue;
    known[node] = 1;
    const Index3 ijk = grid.unflatten(node);
    for (std::size_t a = 0; a < 3; ++a) {
      for (int dir = -1; dir <= 1; dir += 2) {
        if (dir < 0 && ijk[a] == 0) continue;
        if (dir > 0 && ijk[a] + 1 >= grid.dims[a]) continue;
        Index3 q = ijk;
        q[a] = dir < 0 ? q[a] - 1 : q[a] + 1;
        const std::size_t qi = grid.index(q);
        if (known[qi]) continue;
        const double cand = detail::eikonal_update(grid, times, known, qi, 1.0 / speed.at_node(qi));
        if (cand < times[qi]) {
          times[qi] = cand;
          heap.emplace(cand, qi);
        }
      }
    }
  }
  return times;
}

struct FastMarchOptions {
  /// Nodes within this distance of the source start from the straight-ray
  /// time. Zero picks a tenth of the largest grid extent; any value is
  /// raised to at least two cells. A radius fixed in physical units keeps
  /// the source singularity from adding a log(1/h) factor to the error.
  double init_radius = 0.0;
};

/// Slowness integrated along the straight segment from a to b (Simpson, 8
/// panels). Exact for constant fields; for smooth fields the straight ray
/// differs from the true travel time only at third order in |b - a|.
inline double straight_ray_time(const SpeedField& speed, Vec3 a, Vec3 b) {
  const double len = distance(a, b);
  if (speed.kind() == SpeedKind::constant) return len / speed.values().front();
  constexpr int kPanels = 8;
  double acc = 0.0;
  for (int i = 0; i <= kPanels; ++i) {
    const double w = (i == 0 || i == kPanels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double s = static_cast<double>(i) / kPanels;
    acc += w / speed.at(a + s * (b - a));
  }
  return len * acc / (3.0 * kPanels);
}

/// Travel-time field zeta(source, .) on the speed grid.
inline TravelTimeField fast_march(const SpeedField& speed, Vec3 source, const FastMarchOptions& opts = {}) {
  const Grid3& grid = speed.grid();
  if (!grid.contains(source)) throw InvalidArgument("fast_march: source lies outside the grid");
  double extent = 0.0;
  for (std::size_t a = 0; a < 3; ++a) extent = std::max(extent, grid.spacing * static_cast<double>(grid.dims[a] - 1));
  const double requested = opts.init_radius > 0.0 ? opts.init_radius : 0.1 * extent;
  const double radius = std::max(requested, 2.0 * grid.spacing);
  std::vector<Seed> seeds;
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    const Vec3 p = grid.position(n);
    if (distance(p, source) <= radius) seeds.push_back({n, straight_ray_time(speed, source, p)});
  }
  if (seeds.empty()) {
    // Degenerate one-node-thick grids: seed the nearest node.
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
      const double d = distance(grid.position(n), source);
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    seeds.push_back({best, straight_ray_time(speed, source, grid.position(best))});
  }
  TravelTimeField out;
  out.source = source;
  out.grid = grid;
  out.values = fast_march_from_seeds(speed, seeds);
  return out;
}

/// Singular amplitude of the Green's function.
struct Amplitude {
  double value = 1.0;
  /// Set when the value is the documented unit approximation for a
  /// variable background rather than an exact evaluation.
  bool approximate = false;
};

inline Amplitude amplitude_sigma(Vec3 x, Vec3 z, const SpeedField& speed) {
  if (x == z) throw InvalidArgument("amplitude_sigma: x and z coincide");
  return {1.0, speed.kind() != SpeedKind::constant};
}

/// Smooth part g(x, t; z) of the Green's function for one (probe, centre)
/// pair, sampled from t = 0. Samples at or before zeta are forced to zero.
class GreenRemainder {
 public:
  GreenRemainder() = default;

  /// Builds a causal remainder; samples with t <= zeta are zeroed.
  static GreenRemainder causal(TimeSignal g, double zeta) {
    if (std::abs(g.t0) > 1e-15) throw InvalidArgument("GreenRemainder: samples must start at t = 0");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.time(i) <= zeta) g.samples[i] = 0.0;
    }
    GreenRemainder r;
    r.zeta_ = zeta;
    r.samples_ = std::move(g);
    r.zero_ = std::all_of(r.samples_.samples.begin(), r.samples_.samples.end(), [](double v) { return v == 0.0; });
    return r;
  }

  bool is_zero() const { return zero_; }
  double zeta() const { return zeta_; }
  const TimeSignal& samples() const { return samples_; }
  /// Last time covered by the samples (infinite for the zero remainder).
  double horizon() const { return zero_ && samples_.empty() ? std::numeric_limits<double>::infinity() : samples_.end_time(); }
  double at(double t) const { return zero_ ? 0.0 : samples_.at(t); }

 private:
  TimeSignal samples_;
  double zeta_ = 0.0;
  bool zero_ = true;
};

/// Everything the droplet response needs to know about the medium.
struct BackgroundModel {
  SpeedField speed;
  /// Travel-time field from the probe; required for gridded speeds.
  std::optional<TravelTimeField> probe_times;
  /// Optional smooth remainder per centre; empty means g = 0.
  std::function<const GreenRemainder*(Vec3 centre)> remainder;

  bool is_constant() const { return speed.kind() == SpeedKind::constant; }

  double travel_time(Vec3 x, Vec3 z) const {
    if (is_constant()) return travel_time_constant(x, z, speed.values().front());
    if (!probe_times) throw InvalidArgument("BackgroundModel: gridded speed needs a travel-time field");
    if (distance(probe_times->source, x) > 1e-12) {
      throw InvalidArgument("BackgroundModel: travel-time field was computed for a different probe");
    }
    return probe_times->at(z);
  }

  const char* travel_time_provenance() const { return is_constant() ? "travel_time_constant" : "fast_march"; }
};

}  // namespace droplet::background
