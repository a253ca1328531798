#pragma once

// The inverse chain: undo the droplet response to get v(z, .), read the
// arrival time off the measured trace, turn travel times into a wave speed
// through the eikonal relation and differentiate v to get the source back.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "droplet/background.hpp"
#include "droplet/common.hpp"
#include "droplet/droplet_response.hpp"
#include "droplet/volterra.hpp"
#include "droplet/wavefield.hpp"

namespace droplet::reconstruct {

using background::SpeedField;
using response::ResponseKernel;
using wavefield::SpaceTimeField;

/// v_hat(t) = (A^{-1} w)(t + zeta) on [0, T - zeta], sampled on the dt of w.
inline TimeSignal recover_v(const TimeSignal& w, const ResponseKernel& kern) {
  if (std::abs(w.t0) > 1e-15) throw InvalidArgument("recover_v: w must start at t = 0");
  const TimeSignal f = volterra::invert_direct(kern.op(), w);
  const double horizon = w.end_time() - kern.zeta;
  if (!(horizon > 0.0)) throw InvalidArgument("recover_v: travel time exceeds the record length");
  const auto count = static_cast<std::size_t>(std::floor(horizon / w.dt + 1e-9)) + 1;
  TimeSignal v = TimeSignal::zeros(0.0, w.dt, count);
  for (std::size_t i = 0; i < count; ++i) v.samples[i] = f.at(v.time(i) + kern.zeta, f.samples.back());
  return v;
}

struct JumpDetection {
  double threshold = 0.0;
  double noise_floor = 0.0;
  std::optional<double> time;  // empty when the signal never exceeds the threshold
};

/// First time |signal| exceeds theta, linearly interpolated between the last
/// sample below and the first sample above.
inline std::optional<double> detect_jump(const TimeSignal& signal, double theta) {
  if (!(theta > 0.0)) throw InvalidArgument("detect_jump: threshold must be positive");
  const auto& s = signal.samples;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = std::abs(s[i]);
    if (a <= theta) continue;
    if (i == 0) return signal.t0;
    const double prev = std::abs(s[i - 1]);
    const double frac = (theta - prev) / (a - prev);
    return signal.time(i - 1) + frac * signal.dt;
  }
  return std::nullopt;
}

/// max |signal| on [t0, t_end].
inline double noise_floor(const TimeSignal& signal, double t_end) {
  double m = 0.0;
  for (std::size_t i = 0; i < signal.size() && signal.time(i) <= t_end; ++i) m = std::max(m, std::abs(signal.samples[i]));
  return m;
}

/// theta = max(4 * noise floor, C_theta * a^2).
inline double calibrated_threshold(double floor, double c_theta, double a) {
  return std::max(4.0 * floor, c_theta * a * a);
}

/// Travel times from one probe to the nodes of a regular sweep grid.
struct TravelTimeMap {
  Vec3 probe{};
  Grid3 grid;
  std::vector<double> zeta;
  std::vector<unsigned char> usable;
  /// Set where an unusable node received an interpolated value.
  std::vector<unsigned char> filled;

  std::size_t usable_count() const { return static_cast<std::size_t>(std::count(usable.begin(), usable.end(), 1)); }
};

/// Per-node jump detection. Nodes whose trace never crosses its threshold
/// are flagged unusable and carry NaN.
inline TravelTimeMap sweep_travel_times(Vec3 probe, const Grid3& grid, std::span<const TimeSignal> w_traces,
                                        std::span<const double> thresholds) {
  if (w_traces.size() != grid.node_count() || thresholds.size() != grid.node_count()) {
    throw InvalidArgument("sweep_travel_times: one trace and threshold per sweep node required");
  }
  TravelTimeMap map;
  map.probe = probe;
  map.grid = grid;
  map.zeta.assign(grid.node_count(), std::numeric_limits<double>::quiet_NaN());
  map.usable.assign(grid.node_count(), 0);
  map.filled.assign(grid.node_count(), 0);
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    if (const auto t = detect_jump(w_traces[n], thresholds[n])) {
      map.zeta[n] = *t;
      map.usable[n] = 1;
    }
  }
  return map;
}

/// Fills unusable nodes by inverse-square-distance weighting of the
/// `neighbours` nearest usable nodes. Returns false when no node is usable.
inline bool fill_unusable(TravelTimeMap& map, std::size_t neighbours = 8) {
  std::vector<std::size_t> good;
  for (std::size_t n = 0; n < map.usable.size(); ++n)
    if (map.usable[n]) good.push_back(n);
  if (good.empty()) return false;
  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t n = 0; n < map.usable.size(); ++n) {
    if (map.usable[n]) continue;
    near.clear();
    const Vec3 p = map.grid.position(n);
    for (std::size_t g : good) near.emplace_back(distance(p, map.grid.position(g)), g);
    const std::size_t k = std::min(neighbours, near.size());
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k), near.end());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = 1.0 / (near[i].first * near[i].first);
      num += w * map.zeta[near[i].second];
      den += w;
    }
    map.zeta[n] = num / den;
    map.filled[n] = 1;
  }
  return true;
}

/// Gradient of node values by centred differences inside and second-order
/// one-sided differences on the faces.
inline std::vector<Vec3> grid_gradient(const Grid3& grid, std::span<const double> f) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (grid.dims[a] < 3) throw InvalidArgument("grid_gradient: need at least 3 nodes per axis");
  }
  const double h = grid.spacing;
  std::vector<Vec3> g(grid.node_count());
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    const Index3 ijk = grid.unflatten(n);
    for (std::size_t a = 0; a < 3; ++a) {
      auto at = [&](std::size_t i) {
        Index3 q = ijk;
        q[a] = i;
        return f[grid.index(q)];
      };
      const std::size_t i = ijk[a], last = grid.dims[a] - 1;
      if (i == 0) {
        g[n][a] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
      } else if (i == last) {
        g[n][a] = (3.0 * at(last) - 4.0 * at(last - 1) + at(last - 2)) / (2.0 * h);
      } else {
        g[n][a] = (at(i + 1) - at(i - 1)) / (2.0 * h);
      }
    }
  }
  return g;
}

/// c_hat = 1 / |grad zeta| on the sweep grid; several probes are combined by
/// the harmonic mean of their per-probe estimates.
inline SpeedField recover_speed(std::span<const TravelTimeMap> maps) {
  if (maps.empty()) throw InvalidArgument("recover_speed: no travel-time maps");
  const Grid3& grid = maps.front().grid;
  std::vector<double> slowness(grid.node_count(), 0.0);
  for (const auto& m : maps) {
    if (!(m.grid == grid)) throw GridMismatch("recover_speed: travel-time maps on different grids");
    const auto g = grid_gradient(grid, m.zeta);
    for (std::size_t n = 0; n < g.size(); ++n) slowness[n] += g[n].norm();
  }
  std::vector<double> c(grid.node_count());
  const double count = static_cast<double>(maps.size());
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (!(slowness[n] > 0.0) || !std::isfinite(slowness[n])) {
      throw Error("recover_speed: vanishing or undefined travel-time gradient");
    }
    c[n] = count / slowness[n];
  }
  return SpeedField::gridded(grid, std::move(c));
}

inline SpeedField recover_speed(const TravelTimeMap& map) { return recover_speed(std::span<const TravelTimeMap>(&map, 1)); }

struct EikonalCheck {
  double max_error = 0.0;
  double bound = 0.0;  // 3 h / min c_hat
  bool passed = false;
};

/// Re-marches the recovered speed from the sweep faces that look toward the
/// probe (seeded with the measured times) and compares against every node.
inline EikonalCheck eikonal_consistency(const SpeedField& c_hat, const TravelTimeMap& map) {
  const Grid3& grid = map.grid;
  if (!(c_hat.grid() == grid)) throw GridMismatch("eikonal_consistency: speed and map grids differ");
  const Vec3 lo = grid.origin, hi = grid.upper();
  std::vector<background::Seed> seeds;
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    const Index3 ijk = grid.unflatten(n);
    bool seed = false;
    for (std::size_t a = 0; a < 3; ++a) {
      if (ijk[a] == 0 && map.probe[a] < lo[a]) seed = true;
      if (ijk[a] + 1 == grid.dims[a] && map.probe[a] > hi[a]) seed = true;
    }
    if (seed) seeds.push_back({n, map.zeta[n]});
  }
  if (seeds.empty()) throw InvalidArgument("eikonal_consistency: probe lies inside the sweep box");
  const auto t = background::fast_march_from_seeds(c_hat, seeds);
  EikonalCheck out;
  for (std::size_t n = 0; n < t.size(); ++n) out.max_error = std::max(out.max_error, std::abs(t[n] - map.zeta[n]));
  out.bound = 3.0 * grid.spacing / c_hat.min();
  out.passed = out.max_error <= out.bound;
  return out;
}

struct SourceRecoveryOptions {
  wavefield::WaveOperatorOptions mollifier;
  /// Keep every `time_stride`-th sample of the recovered traces.
  std::size_t time_stride = 1;
};

/// Stacks the per-node traces into a space-time field, truncated to the
/// shortest record.
inline SpaceTimeField assemble_traces(const Grid3& grid, std::span<const TimeSignal> v_hats, std::size_t stride = 1) {
  if (v_hats.size() != grid.node_count()) throw InvalidArgument("assemble_traces: one trace per node required");
  if (stride == 0) throw InvalidArgument("assemble_traces: stride must be positive");
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& v : v_hats) {
    require_same_sampling(v, v_hats.front(), "assemble_traces");
    len = std::min(len, v.size());
  }
  const std::size_t nt = len == 0 ? 0 : (len - 1) / stride + 1;
  SpaceTimeField f = SpaceTimeField::zeros(grid, v_hats.front().t0, v_hats.front().dt * static_cast<double>(stride), nt);
  for (std::size_t node = 0; node < grid.node_count(); ++node)
    for (std::size_t n = 0; n < nt; ++n) f.at(n, node) = v_hats[node].samples[n * stride];
  return f;
}

/// J_hat = c^-2 v_tt - Lap v on the interior of the sweep grid.
inline SpaceTimeField recover_source(const Grid3& grid, std::span<const TimeSignal> v_hats, const SpeedField& speed,
                                     const SourceRecoveryOptions& opts = {}) {
  return wavefield::apply_wave_operator(assemble_traces(grid, v_hats, opts.time_stride), speed, opts.mollifier);
}

}  // namespace droplet::reconstruct
