#pragma once

// Background wave v solving c0^-2 v_tt - Lap v = J with zero initial data:
// a retarded-potential quadrature for constant speed, a leapfrog FDTD solver
// for gridded speeds, and the discrete wave operator used for source recovery.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "droplet/background.hpp"
#include "droplet/common.hpp"

namespace droplet::wavefield {

using background::SpeedField;

struct Box {
  Vec3 lo{};
  Vec3 hi{};
  bool contains(Vec3 p) const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    }
    return true;
  }
};

/// Scalar field sampled on a node grid at uniform time levels.
/// data[n * nodes + node] holds the value at time t0 + n*dt.
struct SpaceTimeField {
  Grid3 grid;
  double t0 = 0.0;
  double dt = 1.0;
  std::size_t nt = 0;
  std::vector<double> data;

  static SpaceTimeField zeros(const Grid3& grid, double t0, double dt, std::size_t nt) {
    SpaceTimeField f;
    f.grid = grid;
    f.t0 = t0;
    f.dt = dt;
    f.nt = nt;
    f.data.assign(nt * grid.node_count(), 0.0);
    return f;
  }

  std::size_t nodes() const { return grid.node_count(); }
  double time(std::size_t n) const { return t0 + dt * static_cast<double>(n); }
  double& at(std::size_t n, std::size_t node) { return data[n * nodes() + node]; }
  double at(std::size_t n, std::size_t node) const { return data[n * nodes() + node]; }
  std::span<const double> level(std::size_t n) const { return {data.data() + n * nodes(), nodes()}; }

  TimeSignal trace(std::size_t node) const {
    std::vector<double> v(nt);
    for (std::size_t n = 0; n < nt; ++n) v[n] = at(n, node);
    return {t0, dt, std::move(v)};
  }
};

/// J(y, t) given in closed form. When `general` is empty the source is the
/// separable product spatial(y) * temporal(t).
struct AnalyticSource {
  std::function<double(Vec3)> spatial;
  std::function<double(double)> temporal;
  std::function<double(Vec3, double)> general;
  /// Box containing the spatial support.
  Box support;
  /// Declared vanishing order p at t = 0 (d^k psi(0) = 0 for k <= p); -1 if undeclared.
  int vanishing_order = -1;

  bool separable() const { return !general; }
  double operator()(Vec3 y, double t) const { return general ? general(y, t) : spatial(y) * temporal(t); }
};

using SourceModel = std::variant<AnalyticSource, SpaceTimeField>;

// --- profiles -----------------------------------------------------------------

/// (1 - r^2/R^2)^power inside the ball of radius R, zero outside.
inline std::function<double(Vec3)> bump_profile(Vec3 centre, double radius, int power) {
  return [=](Vec3 y) {
    const double s = 1.0 - ((y - centre).norm() / radius) * ((y - centre).norm() / radius);
    return s > 0.0 ? std::pow(s, power) : 0.0;
  };
}

/// Gaussian of standard deviation `width`, tapered to zero at `cutoff` by a
/// (1 - r^2/cutoff^2)^3 factor so the profile stays smooth.
inline std::function<double(Vec3)> gaussian_profile(Vec3 centre, double width, double cutoff) {
  return [=](Vec3 y) {
    const double r2 = ((y - centre).norm()) * ((y - centre).norm());
    const double s = 1.0 - r2 / (cutoff * cutoff);
    return s > 0.0 ? std::exp(-0.5 * r2 / (width * width)) * s * s * s : 0.0;
  };
}

/// amplitude * (t/duration)^(p+1) * (1 - t/duration)^decay on (0, duration),
/// zero elsewhere: the first p derivatives vanish at t = 0.
inline std::function<double(double)> pulse_profile(double duration, int vanishing_order, double amplitude,
                                                   int decay_order = 4) {
  return [=](double t) {
    if (t <= 0.0 || t >= duration) return 0.0;
    const double s = t / duration;
    return amplitude * std::pow(s, vanishing_order + 1) * std::pow(1.0 - s, decay_order);
  };
}

inline AnalyticSource separable_source(std::function<double(Vec3)> spatial, std::function<double(double)> temporal,
                                       Box support, int vanishing_order = -1) {
  AnalyticSource s;
  s.spatial = std::move(spatial);
  s.temporal = std::move(temporal);
  s.support = support;
  s.vanishing_order = vanishing_order;
  return s;
}

inline Box ball_box(Vec3 c, double r) { return {{c.x - r, c.y - r, c.z - r}, {c.x + r, c.y + r, c.z + r}}; }

// --- retarded potential -------------------------------------------------------

struct RetardedOptions {
  /// Edge of the cubic quadrature cells; 0 picks support extent / 64.
  double cell = 0.0;
  /// Cell corners sit at anchor + k*cell. Put the evaluation point on a corner
  /// (the default when left unset) to keep it off cell midpoints.
  std::optional<Vec3> anchor;
  /// Retarded delays are binned at dt / oversample.
  std::size_t oversample = 1;
};

namespace detail {

// int over the unit cube [-1/2, 1/2]^3 of 1/|y| dy
inline constexpr double kUnitCubeInverseDistance = 2.380077363979553;

struct Cell {
  Vec3 centre;
  double weight;  // cell volume / (4 pi r), or the singular-cell integral
  double delay;   // r / c0
};

template <class Fn>
void for_each_cell(const Box& support, Vec3 x, double c0, double cell, Vec3 anchor, Fn&& fn) {
  std::array<long, 3> lo{}, hi{};
  for (std::size_t a = 0; a < 3; ++a) {
    lo[a] = static_cast<long>(std::floor((support.lo[a] - anchor[a]) / cell));
    hi[a] = static_cast<long>(std::ceil((support.hi[a] - anchor[a]) / cell));
  }
  const double vol = cell * cell * cell;
  const double four_pi = 4.0 * std::numbers::pi;
  for (long k = lo[2]; k < hi[2]; ++k) {
    for (long j = lo[1]; j < hi[1]; ++j) {
      for (long i = lo[0]; i < hi[0]; ++i) {
        const Vec3 y{anchor.x + (static_cast<double>(i) + 0.5) * cell, anchor.y + (static_cast<double>(j) + 0.5) * cell,
                     anchor.z + (static_cast<double>(k) + 0.5) * cell};
        const double r = distance(x, y);
        const double w = r < 1e-12 * cell ? cell * cell * kUnitCubeInverseDistance / four_pi : vol / (four_pi * r);
        fn(Cell{y, w, r / c0});
      }
    }
  }
}

}  // namespace detail

/// v(x, t) = (1/4 pi) int J(y, t - |x-y|/c0) / |x-y| dy by composite midpoint
/// quadrature over the source support. Separable sources bin the cell
/// weights by delay (linear split between neighbouring bins), which is
/// linear interpolation of psi at the retarded times.
inline TimeSignal retarded_potential(const SourceModel& source, double c0, Vec3 x, const TimeSignal& times,
                                     const RetardedOptions& opts = {}) {
  if (!(c0 > 0.0)) throw InvalidArgument("retarded_potential: c0 must be positive");
  const std::size_t m = times.size();
  TimeSignal out = TimeSignal::zeros(times.t0, times.dt, m);
  if (m == 0) return out;

  if (const auto* an = std::get_if<AnalyticSource>(&source)) {
    const Box& sup = an->support;
    double cell = opts.cell;
    if (cell <= 0.0) {
      const double extent = std::max({sup.hi.x - sup.lo.x, sup.hi.y - sup.lo.y, sup.hi.z - sup.lo.z});
      cell = extent / 64.0;
    }
    const Vec3 anchor = opts.anchor.value_or(x);
    if (an->separable()) {
      const std::size_t os = std::max<std::size_t>(1, opts.oversample);
      const double delta = times.dt / static_cast<double>(os);
      std::vector<double> hist;
      detail::for_each_cell(sup, x, c0, cell, anchor, [&](const detail::Cell& c) {
        const double phi = an->spatial(c.centre);
        if (phi == 0.0) return;
        const double s = c.delay / delta;
        const auto k = static_cast<std::size_t>(std::floor(s));
        const double f = s - static_cast<double>(k);
        if (hist.size() < k + 2) hist.resize(k + 2, 0.0);
        hist[k] += c.weight * phi * (1.0 - f);
        hist[k + 1] += c.weight * phi * f;
      });
      if (hist.empty()) return out;
      // psi at t0 + j*delta for j in [-(K-1), (m-1)*os]
      const std::size_t kmax = hist.size();
      const std::size_t span_len = (m - 1) * os + kmax;
      std::vector<double> psi(span_len);
      for (std::size_t j = 0; j < span_len; ++j) {
        const double jj = static_cast<double>(j) - static_cast<double>(kmax - 1);
        psi[j] = an->temporal(times.t0 + jj * delta);
      }
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t base = i * os + (kmax - 1);
        double acc = 0.0;
        for (std::size_t k = 0; k < kmax; ++k) acc += hist[k] * psi[base - k];
        out.samples[i] = acc;
      }
    } else {
      detail::for_each_cell(sup, x, c0, cell, anchor, [&](const detail::Cell& c) {
        for (std::size_t i = 0; i < m; ++i) {
          const double tr = times.time(i) - c.delay;
          if (tr <= 0.0) continue;
          out.samples[i] += c.weight * (*an)(c.centre, tr);
        }
      });
    }
    return out;
  }

  const auto& field = std::get<SpaceTimeField>(source);
  const double h = field.grid.spacing;
  const double vol = h * h * h;
  const double four_pi = 4.0 * std::numbers::pi;
  for (std::size_t node = 0; node < field.nodes(); ++node) {
    bool any = false;
    for (std::size_t n = 0; n < field.nt && !any; ++n) any = field.at(n, node) != 0.0;
    if (!any) continue;
    const Vec3 y = field.grid.position(node);
    const double r = distance(x, y);
    const double w = r < 1e-12 * h ? h * h * detail::kUnitCubeInverseDistance / four_pi : vol / (four_pi * r);
    const TimeSignal j = field.trace(node);
    for (std::size_t i = 0; i < m; ++i) out.samples[i] += w * j.at(times.time(i) - r / c0);
  }
  return out;
}

/// Overload that enforces the constant-speed precondition.
inline TimeSignal retarded_potential(const SourceModel& source, const SpeedField& speed, Vec3 x,
                                     const TimeSignal& times, const RetardedOptions& opts = {}) {
  if (speed.kind() != background::SpeedKind::constant) {
    throw InvalidArgument("retarded_potential: requires a constant-speed background");
  }
  return retarded_potential(source, speed.values().front(), x, times, opts);
}

// --- FDTD ---------------------------------------------------------------------

enum class BoundaryMode { absorbing, dirichlet };

struct RecordSpec {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};  // inclusive
  std::size_t stride = 1;
};

struct FdtdOptions {
  double horizon = 1.0;
  double cfl = 0.5;
  /// Explicit time step; must satisfy the CFL bound. Overrides `cfl`.
  std::optional<double> dt;
  BoundaryMode boundary = BoundaryMode::absorbing;
  std::size_t padding = 15;
  /// Exact solution used as Dirichlet data (and initial value) in test mode.
  std::function<double(Vec3, double)> exact;
  std::vector<Vec3> probes;
  bool record_field = true;
  /// Region of the physical grid to record; default is the whole grid.
  std::optional<RecordSpec> record;
  bool track_energy = false;
};

struct FdtdResult {
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<TimeSignal> probes;
  std::optional<SpaceTimeField> field;
  /// Discrete leapfrog energy at half steps (when tracked).
  std::vector<double> energy;
};

inline constexpr double kMaxCfl = 0.57735026918962573;  // 1/sqrt(3)

/// Second-order leapfrog on the speed grid (plus absorbing padding).
inline FdtdResult fdtd_solve(const SourceModel& source, const SpeedField& speed, const FdtdOptions& opts) {
  const Grid3& phys = speed.grid();
  const double h = phys.spacing;
  const double cmax = speed.max();
  if (!(opts.horizon > 0.0)) throw InvalidArgument("fdtd_solve: horizon must be positive");
  double dt = 0.0;
  if (opts.dt) {
    dt = *opts.dt;
    if (cmax * dt / h > kMaxCfl * (1.0 + 1e-12)) throw InvalidArgument("fdtd_solve: time step violates the CFL bound");
  } else {
    if (!(opts.cfl > 0.0) || opts.cfl > kMaxCfl) throw InvalidArgument("fdtd_solve: cfl must lie in (0, 1/sqrt(3)]");
    dt = opts.cfl * h / cmax;
  }
  const auto steps = static_cast<std::size_t>(std::ceil(opts.horizon / dt - 1e-9));
  dt = opts.horizon / static_cast<double>(steps);

  const bool dirichlet = opts.boundary == BoundaryMode::dirichlet;
  if (dirichlet && !opts.exact) throw InvalidArgument("fdtd_solve: Dirichlet mode needs an exact solution");
  const std::size_t pad = dirichlet ? 0 : opts.padding;

  // Source support must stay inside the physical grid, away from the padding.
  const Vec3 plo = phys.origin, phi = phys.upper();
  if (!dirichlet) {
    if (const auto* an = std::get_if<AnalyticSource>(&source)) {
      for (std::size_t a = 0; a < 3; ++a) {
        if (an->support.lo[a] < plo[a] + h || an->support.hi[a] > phi[a] - h) {
          throw InvalidArgument("fdtd_solve: source support touches the absorbing padding");
        }
      }
    }
  }
  if (const auto* gf = std::get_if<SpaceTimeField>(&source)) {
    if (!(gf->grid == phys)) throw GridMismatch("fdtd_solve: gridded source must share the speed grid");
    if (!dirichlet) {
      for (std::size_t node = 0; node < phys.node_count(); ++node) {
        const Index3 q = phys.unflatten(node);
        bool edge = false;
        for (std::size_t a = 0; a < 3; ++a) edge = edge || q[a] == 0 || q[a] + 1 == phys.dims[a];
        if (!edge) continue;
        for (std::size_t n = 0; n < gf->nt; ++n) {
          if (gf->at(n, node) != 0.0) throw InvalidArgument("fdtd_solve: source support touches the absorbing padding");
        }
      }
    }
  }

  Grid3 total;
  total.spacing = h;
  total.origin = phys.origin - static_cast<double>(pad) * Vec3{h, h, h};
  for (std::size_t a = 0; a < 3; ++a) total.dims[a] = phys.dims[a] + 2 * pad;
  const std::size_t nx = total.dims[0], ny = total.dims[1], nz = total.dims[2];
  const std::size_t nn = total.node_count();
  if (nx < 3 || ny < 3 || nz < 3) throw InvalidArgument("fdtd_solve: grid too small for the stencil");

  // c^2 dt^2 per node; padding copies the nearest physical node.
  std::vector<double> c2dt2(nn);
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        auto clampi = [&](std::size_t v, std::size_t a) {
          const long s = static_cast<long>(v) - static_cast<long>(pad);
          return static_cast<std::size_t>(std::clamp<long>(s, 0, static_cast<long>(phys.dims[a]) - 1));
        };
        const double c = speed.at_node(phys.index(clampi(i, 0), clampi(j, 1), clampi(k, 2)));
        c2dt2[total.index(i, j, k)] = c * c * dt * dt;
      }

  // Source sampling: separable analytic sources precompute phi per node.
  std::vector<std::size_t> src_nodes;
  std::vector<double> src_phi;
  std::vector<Vec3> src_pos;
  const auto* an = std::get_if<AnalyticSource>(&source);
  const auto* gsrc = std::get_if<SpaceTimeField>(&source);
  if (an) {
    for (std::size_t k = 0; k < nz; ++k)
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
          const Vec3 p = total.position(i, j, k);
          if (!an->support.contains(p)) continue;
          if (an->separable()) {
            const double phi_v = an->spatial(p);
            if (phi_v == 0.0) continue;
            src_phi.push_back(phi_v);
          }
          src_nodes.push_back(total.index(i, j, k));
          src_pos.push_back(p);
        }
  }
  auto add_source = [&](std::vector<double>& target, double t, double scale) {
    if (an) {
      if (an->separable()) {
        const double psi = an->temporal(t);
        if (psi == 0.0) return;
        for (std::size_t s = 0; s < src_nodes.size(); ++s) target[src_nodes[s]] += scale * c2dt2[src_nodes[s]] * src_phi[s] * psi;
      } else {
        for (std::size_t s = 0; s < src_nodes.size(); ++s) target[src_nodes[s]] += scale * c2dt2[src_nodes[s]] * an->general(src_pos[s], t);
      }
    } else if (gsrc) {
      for (std::size_t k = 0; k < phys.dims[2]; ++k)
        for (std::size_t j = 0; j < phys.dims[1]; ++j)
          for (std::size_t i = 0; i < phys.dims[0]; ++i) {
            const std::size_t pn = phys.index(i, j, k);
            // linear interpolation of the gridded source in time
            const double s = (t - gsrc->t0) / gsrc->dt;
            if (s < 0.0 || s > static_cast<double>(gsrc->nt - 1)) continue;
            const auto n0 = std::min(static_cast<std::size_t>(s), gsrc->nt - 1);
            const std::size_t n1 = std::min(n0 + 1, gsrc->nt - 1);
            const double f = s - static_cast<double>(n0);
            const double val = (1.0 - f) * gsrc->at(n0, pn) + f * gsrc->at(n1, pn);
            const std::size_t tn = total.index(i + pad, j + pad, k + pad);
            target[tn] += scale * c2dt2[tn] * val;
          }
    }
  };

  std::vector<double> prev(nn, 0.0), cur(nn, 0.0), next(nn, 0.0);
  const double inv_h2 = 1.0 / (h * h);
  const std::size_t sy = nx, sz = nx * ny;

  auto laplacian = [&](const std::vector<double>& u, std::size_t idx) {
    return (u[idx - 1] + u[idx + 1] + u[idx - sy] + u[idx + sy] + u[idx - sz] + u[idx + sz] - 6.0 * u[idx]) * inv_h2;
  };
  auto apply_dirichlet = [&](std::vector<double>& u, double t) {
    for (std::size_t k = 0; k < nz; ++k)
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
          if (i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz) {
            u[total.index(i, j, k)] = opts.exact(total.position(i, j, k), t);
          }
        }
  };

  if (dirichlet) {
    for (std::size_t n = 0; n < nn; ++n) cur[n] = opts.exact(total.position(n), 0.0);
  }

  // Recording.
  FdtdResult result;
  result.dt = dt;
  result.steps = steps;
  std::vector<std::array<std::size_t, 8>> probe_nodes;
  std::vector<std::array<double, 8>> probe_w;
  for (const Vec3& p : opts.probes) {
    if (!phys.contains(p)) throw InvalidArgument("fdtd_solve: probe outside the grid");
    std::array<std::size_t, 8> nodes{};
    std::array<double, 8> w{};
    std::array<std::size_t, 3> lo{};
    std::array<double, 3> fr{};
    for (std::size_t a = 0; a < 3; ++a) {
      double s = (p[a] - total.origin[a]) / h;
      auto i = static_cast<std::size_t>(std::floor(s));
      if (i + 1 >= total.dims[a]) i = total.dims[a] - 2;
      lo[a] = i;
      fr[a] = std::clamp(s - static_cast<double>(i), 0.0, 1.0);
    }
    for (int c = 0; c < 8; ++c) {
      const std::size_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
      nodes[c] = total.index(lo[0] + di, lo[1] + dj, lo[2] + dk);
      w[c] = (di ? fr[0] : 1 - fr[0]) * (dj ? fr[1] : 1 - fr[1]) * (dk ? fr[2] : 1 - fr[2]);
    }
    probe_nodes.push_back(nodes);
    probe_w.push_back(w);
    result.probes.push_back(TimeSignal::zeros(0.0, dt, steps + 1));
  }
  RecordSpec rec;
  if (opts.record) {
    rec = *opts.record;
  } else {
    rec.hi = {phys.dims[0] - 1, phys.dims[1] - 1, phys.dims[2] - 1};
  }
  if (opts.record_field) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (rec.lo[a] > rec.hi[a] || rec.hi[a] >= phys.dims[a]) throw InvalidArgument("fdtd_solve: bad record region");
    }
    if (rec.stride == 0) throw InvalidArgument("fdtd_solve: record stride must be positive");
    Grid3 rg;
    rg.spacing = h;
    rg.origin = phys.position(rec.lo[0], rec.lo[1], rec.lo[2]);
    for (std::size_t a = 0; a < 3; ++a) rg.dims[a] = rec.hi[a] - rec.lo[a] + 1;
    result.field = SpaceTimeField::zeros(rg, 0.0, dt * static_cast<double>(rec.stride), steps / rec.stride + 1);
  }
  auto record = [&](const std::vector<double>& u, std::size_t n) {
    for (std::size_t p = 0; p < probe_nodes.size(); ++p) {
      double acc = 0.0;
      for (int c = 0; c < 8; ++c) acc += probe_w[p][c] * u[probe_nodes[p][c]];
      result.probes[p].samples[n] = acc;
    }
    if (result.field && n % rec.stride == 0) {
      auto& f = *result.field;
      const std::size_t level = n / rec.stride;
      for (std::size_t k = 0; k < f.grid.dims[2]; ++k)
        for (std::size_t j = 0; j < f.grid.dims[1]; ++j)
          for (std::size_t i = 0; i < f.grid.dims[0]; ++i) {
            f.at(level, f.grid.index(i, j, k)) =
                u[total.index(rec.lo[0] + i + pad, rec.lo[1] + j + pad, rec.lo[2] + k + pad)];
          }
    }
  };
  auto energy = [&](const std::vector<double>& u0, const std::vector<double>& u1) {
    double e = 0.0;
    for (std::size_t k = 0; k + 1 < nz; ++k)
      for (std::size_t j = 0; j + 1 < ny; ++j)
        for (std::size_t i = 0; i + 1 < nx; ++i) {
          const std::size_t idx = total.index(i, j, k);
          const double vt = (u1[idx] - u0[idx]);
          double g = 0.0;
          for (std::size_t off : {std::size_t{1}, sy, sz}) g += (u1[idx + off] - u1[idx]) * (u0[idx + off] - u0[idx]);
          e += vt * vt / c2dt2[idx] + g * inv_h2;
        }
    return 0.5 * e * h * h * h;
  };

  // First step from Taylor expansion with v_t(0) = 0.
  for (std::size_t k = 1; k + 1 < nz; ++k)
    for (std::size_t j = 1; j + 1 < ny; ++j)
      for (std::size_t i = 1; i + 1 < nx; ++i) {
        const std::size_t idx = total.index(i, j, k);
        next[idx] = cur[idx] + 0.5 * c2dt2[idx] * laplacian(cur, idx);
      }
  {
    std::vector<double> s(nn, 0.0);
    add_source(s, 0.0, 0.5);
    for (std::size_t n = 0; n < nn; ++n) next[n] += s[n];
  }
  record(cur, 0);

  std::vector<double> src(nn, 0.0);
  for (std::size_t n = 1; n <= steps; ++n) {
    // `next` holds level n; boundary treatment for level n.
    if (dirichlet) {
      apply_dirichlet(next, dt * static_cast<double>(n));
    } else {
      auto mur_face = [&](std::size_t axis, bool high) {
        const std::size_t u = (axis + 1) % 3, v = (axis + 2) % 3;
        for (std::size_t jv = 0; jv < total.dims[v]; ++jv)
          for (std::size_t ju = 0; ju < total.dims[u]; ++ju) {
            Index3 q{};
            q[u] = ju;
            q[v] = jv;
            q[axis] = high ? total.dims[axis] - 1 : 0;
            Index3 in = q;
            in[axis] = high ? total.dims[axis] - 2 : 1;
            const std::size_t b = total.index(q), bi = total.index(in);
            const double cdt = std::sqrt(c2dt2[b]);
            const double mur = (cdt - h) / (cdt + h);
            next[b] = cur[bi] + mur * (next[bi] - cur[b]);
          }
      };
      for (std::size_t a = 0; a < 3; ++a) {
        mur_face(a, false);
        mur_face(a, true);
      }
    }
    prev.swap(cur);
    cur.swap(next);
    if (opts.track_energy) result.energy.push_back(energy(prev, cur));
    record(cur, n);
    if (n == steps) break;
    std::fill(src.begin(), src.end(), 0.0);
    add_source(src, dt * static_cast<double>(n), 1.0);
    for (std::size_t k = 1; k + 1 < nz; ++k)
      for (std::size_t j = 1; j + 1 < ny; ++j) {
        std::size_t idx = total.index(1, j, k);
        for (std::size_t i = 1; i + 1 < nx; ++i, ++idx) {
          next[idx] = 2.0 * cur[idx] - prev[idx] + c2dt2[idx] * laplacian(cur, idx) + src[idx];
        }
      }
  }
  return result;
}

// --- wave operator ------------------------------------------------------------

struct WaveOperatorOptions {
  /// Standard deviation (length) of the spatial Gaussian pre-mollifier; 0 disables.
  double space_width = 0.0;
  /// Standard deviation (time) of the temporal Gaussian pre-mollifier; 0 disables.
  double time_width = 0.0;
};

namespace detail {

inline std::vector<double> gaussian_weights(double sigma_cells) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma_cells));
  std::vector<double> w(2 * radius + 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    w[i] = std::exp(-0.5 * d * d / (sigma_cells * sigma_cells));
  }
  return w;
}

// Smooths `data` along one axis of extent n with stride `stride`; weights
// are renormalized where the window leaves the domain.
inline void smooth_axis(std::vector<double>& data, std::size_t n, std::size_t stride, std::size_t count_outer,
                        std::size_t outer_stride, std::size_t count_inner, const std::vector<double>& w) {
  const long radius = static_cast<long>(w.size() / 2);
  std::vector<double> line(n), out(n);
  for (std::size_t o = 0; o < count_outer; ++o) {
    for (std::size_t in = 0; in < count_inner; ++in) {
      const std::size_t base = o * outer_stride + in;
      for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * stride];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0, norm = 0.0;
        for (long d = -radius; d <= radius; ++d) {
          const long q = static_cast<long>(i) + d;
          if (q < 0 || q >= static_cast<long>(n)) continue;
          acc += w[static_cast<std::size_t>(d + radius)] * line[static_cast<std::size_t>(q)];
          norm += w[static_cast<std::size_t>(d + radius)];
        }
        out[i] = acc / norm;
      }
      for (std::size_t i = 0; i < n; ++i) data[base + i * stride] = out[i];
    }
  }
}

}  // namespace detail

/// Separable Gaussian smoothing in space and time.
inline SpaceTimeField mollify(SpaceTimeField f, double space_width, double time_width) {
  const std::size_t nodes = f.nodes();
  const auto& d = f.grid.dims;
  if (space_width > 0.0) {
    const auto w = detail::gaussian_weights(space_width / f.grid.spacing);
    // x: lines of length d0, stride 1; outer = (levels * d1 * d2) rows of stride d0
    detail::smooth_axis(f.data, d[0], 1, f.nt * d[1] * d[2], d[0], 1, w);
    // y: for each level and z-slab, d0 interleaved lines of stride d0
    detail::smooth_axis(f.data, d[1], d[0], f.nt * d[2], d[0] * d[1], d[0], w);
    // z: for each level, d0*d1 lines of stride d0*d1
    detail::smooth_axis(f.data, d[2], d[0] * d[1], f.nt, nodes, d[0] * d[1], w);
  }
  if (time_width > 0.0 && f.nt > 1) {
    const auto w = detail::gaussian_weights(time_width / f.dt);
    detail::smooth_axis(f.data, f.nt, nodes, 1, 0, nodes, w);
  }
  return f;
}

/// J_hat = c0^-2 v_tt - Lap v by centred second differences on interior nodes
/// and interior time levels. The result lives on the grid shrunk by one node
/// per side, starting one time step later.
inline SpaceTimeField apply_wave_operator(const SpaceTimeField& v_in, const SpeedField& speed,
                                          const WaveOperatorOptions& opts = {}) {
  const auto& d = v_in.grid.dims;
  if (d[0] < 3 || d[1] < 3 || d[2] < 3 || v_in.nt < 3) {
    throw InvalidArgument("apply_wave_operator: need at least 3 nodes per axis and 3 time levels");
  }
  const SpaceTimeField v = (opts.space_width > 0.0 || opts.time_width > 0.0)
                               ? mollify(v_in, opts.space_width, opts.time_width)
                               : v_in;
  Grid3 inner;
  inner.spacing = v.grid.spacing;
  inner.origin = v.grid.position(1, 1, 1);
  inner.dims = {d[0] - 2, d[1] - 2, d[2] - 2};
  SpaceTimeField out = SpaceTimeField::zeros(inner, v.t0 + v.dt, v.dt, v.nt - 2);
  const double inv_h2 = 1.0 / (v.grid.spacing * v.grid.spacing);
  const double inv_dt2 = 1.0 / (v.dt * v.dt);
  std::vector<double> inv_c2(inner.node_count());
  for (std::size_t q = 0; q < inner.node_count(); ++q) {
    const double c = speed.at(inner.position(q));
    inv_c2[q] = 1.0 / (c * c);
  }
  const std::size_t sy = d[0], sz = d[0] * d[1];
  for (std::size_t n = 1; n + 1 < v.nt; ++n) {
    const double* um = v.data.data() + (n - 1) * v.nodes();
    const double* u0 = v.data.data() + n * v.nodes();
    const double* up = v.data.data() + (n + 1) * v.nodes();
    for (std::size_t k = 1; k + 1 < d[2]; ++k)
      for (std::size_t j = 1; j + 1 < d[1]; ++j)
        for (std::size_t i = 1; i + 1 < d[0]; ++i) {
          const std::size_t idx = v.grid.index(i, j, k);
          const double lap =
              (u0[idx - 1] + u0[idx + 1] + u0[idx - sy] + u0[idx + sy] + u0[idx - sz] + u0[idx + sz] - 6.0 * u0[idx]) *
              inv_h2;
          const double vtt = (up[idx] - 2.0 * u0[idx] + um[idx]) * inv_dt2;
          const std::size_t q = inner.index(i - 1, j - 1, k - 1);
          out.at(n - 1, q) = inv_c2[q] * vtt - lap;
        }
  }
  return out;
}

}  // namespace droplet::wavefield
