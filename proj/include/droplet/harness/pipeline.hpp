#pragma once

// End-to-end experiment: background wave at every sweep centre, synthetic
// droplet measurements at the probe, and the full recovery chain with error
// metrics against the known ground truth.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "droplet/background.hpp"
#include "droplet/droplet_response.hpp"
#include "droplet/harness/io.hpp"
#include "droplet/harness/parallel.hpp"
#include "droplet/harness/scenario.hpp"
#include "droplet/reconstruct.hpp"
#include "droplet/spectrum.hpp"
#include "droplet/wavefield.hpp"

namespace droplet::harness {

using background::SpeedField;
using wavefield::AnalyticSource;
using wavefield::SpaceTimeField;

// --- model construction ---------------------------------------------------------

inline std::function<double(Vec3)> radial_speed(const SpeedSpec& sp) {
  return [sp](Vec3 y) {
    const double r2 = (y - sp.center).norm() * (y - sp.center).norm();
    return sp.value * (1.0 + sp.contrast * std::exp(-0.5 * r2 / (sp.width * sp.width)));
  };
}

inline SpeedField make_speed(const Scenario& s) {
  const Grid3 g = s.domain_grid();
  if (s.speed.kind == "constant") return SpeedField::constant(g, s.speed.value);
  if (s.speed.kind == "radial") return SpeedField::from_function(g, radial_speed(s.speed));
  const auto [dir, stem] = field_location(resolve_path(s, s.speed.file));
  auto f = read_field(dir, stem);
  if (!(f.grid == g)) throw InvalidArgument("speed.file: field grid does not match the domain grid");
  return SpeedField::gridded(g, std::move(f.values));
}

/// Exact c0 at a point (analytic for constant and radial speeds).
inline double true_speed_at(const Scenario& s, const SpeedField& field, Vec3 p) {
  if (s.speed.kind == "radial") return radial_speed(s.speed)(p);
  return field.at(p);
}

inline AnalyticSource make_source(const Scenario& s) {
  const auto& src = s.source;
  auto spatial = src.profile == "gaussian" ? wavefield::gaussian_profile(src.center, src.width, src.radius)
                                           : wavefield::bump_profile(src.center, src.radius, src.power);
  auto temporal = wavefield::pulse_profile(src.duration, src.vanishing_order, src.amplitude, src.decay_order);
  return wavefield::separable_source(std::move(spatial), std::move(temporal), wavefield::ball_box(src.center, src.radius),
                                     src.vanishing_order);
}

struct Model {
  Scenario scenario;
  SpeedField speed;
  AnalyticSource source;
  Grid3 sweep;
  spectrum::EigenSystem eigensystem;
  background::BackgroundModel background;
  TimeSignal time_grid;
};

inline Model build_model(const Scenario& s) {
  Model m;
  m.scenario = s;
  m.speed = make_speed(s);
  m.source = make_source(s);
  m.sweep = s.sweep_grid();
  m.eigensystem = spectrum::build_eigensystem(s.sweep.radius, s.n_max);
  m.background.speed = m.speed;
  if (!m.background.is_constant()) m.background.probe_times = background::fast_march(m.speed, s.probe);
  m.time_grid = TimeSignal::zeros(0.0, s.dt, s.time_samples());
  return m;
}

/// v(p, .) on the scenario time grid for each point.
inline std::vector<TimeSignal> forward_traces(const Model& m, std::span<const Vec3> points, std::size_t workers) {
  const Scenario& s = m.scenario;
  std::vector<TimeSignal> out(points.size());
  if (s.forward.method == "retarded") {
    wavefield::RetardedOptions ro;
    ro.cell = s.forward.quadrature_cell;
    ro.oversample = s.forward.oversample;
    parallel_for(points.size(), workers, [&](std::size_t i) {
      out[i] = wavefield::retarded_potential(m.source, s.speed.value, points[i], m.time_grid, ro);
    });
    return out;
  }
  wavefield::FdtdOptions fo;
  fo.horizon = s.horizon;
  fo.dt = s.dt;
  fo.padding = s.forward.padding;
  fo.probes.assign(points.begin(), points.end());
  fo.record_field = false;
  auto res = wavefield::fdtd_solve(m.source, m.speed, fo);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = std::move(res.probes[i]);
    out[i].dt = s.dt;  // identical up to rounding; pin it to the scenario grid
  }
  return out;
}

// --- results ----------------------------------------------------------------------

struct DropletResult {
  std::size_t index = 0;
  Vec3 z{};
  double zeta_true = 0.0;
  double c0_true = 0.0;
  double alpha = 0.0;
  double alpha_tail = 0.0;
  double kernel_norm = 0.0;
  double kernel_tail = 0.0;
  double synthesis_tail = 0.0;
  bool sigma_approximate = false;
  /// Samples of the synthesized w (before remainder and noise) that are
  /// nonzero at or before zeta; must be 0.
  std::size_t causality_violations = 0;
  double noise_floor = 0.0;
  double threshold = 0.0;
  std::optional<double> zeta_hat;
  bool filled = false;
  double zeta_used = 0.0;
  double c0_used = 0.0;
  /// ||v_hat - v|| / ||v|| on [0, T - zeta]; NaN when v was not recovered.
  double v_error = std::numeric_limits<double>::quiet_NaN();

  TimeSignal v;
  TimeSignal w;
  TimeSignal v_hat;
};

struct SourceErrors {
  double relative_l2 = 0.0;
  double max_abs = 0.0;
};

struct ReconstructionReport {
  std::string scenario_hash;
  std::string zeta_provenance;
  std::vector<DropletResult> droplets;
  std::optional<reconstruct::TravelTimeMap> zeta_map;
  std::optional<SpeedField> speed_hat;
  std::optional<reconstruct::EikonalCheck> eikonal;
  std::optional<SpaceTimeField> source_hat;
  std::optional<SourceErrors> source_errors;
  std::vector<std::string> notes;
};

struct MetricsRecord {
  double v_error_max = 0.0;
  double v_error_mean = 0.0;
  std::size_t usable = 0;
  std::size_t unusable = 0;
  double zeta_error_max = 0.0;
  double zeta_bound = 0.0;
  double zeta_within_fraction = 0.0;
  double speed_error_interior_max = std::numeric_limits<double>::quiet_NaN();
  double speed_error_max = std::numeric_limits<double>::quiet_NaN();
  double source_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t causality_violations = 0;
  std::map<std::string, double> runtimes;
};

struct PipelineResult {
  ReconstructionReport report;
  MetricsRecord metrics;
};

/// A pipeline stage failed. `partial()` holds whatever finished before it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, std::shared_ptr<const PipelineResult> partial = nullptr)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const { return stage_; }
  const PipelineResult* partial() const { return partial_.get(); }

 private:
  std::string stage_;
  std::shared_ptr<const PipelineResult> partial_;
};

struct PipelineOptions {
  std::size_t workers = 1;
  /// Stage progress messages.
  std::function<void(std::string_view stage, std::string_view message)> progress;
  /// Precomputed v traces at the sweep nodes (skips the forward stage).
  const std::vector<TimeSignal>* v_traces = nullptr;
};

/// Travel-time tolerance max(2 dt, a^{(1 - eps)/(p + 2)}) with eps = 0.1.
inline double travel_time_bound(double dt, double a, int p, double eps = 0.1) {
  return std::max(2.0 * dt, std::pow(a, (1.0 - eps) / (p + 2.0)));
}

/// Per-droplet noise stream: depends only on the seed and the droplet index.
inline std::mt19937_64 droplet_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  return std::mt19937_64(seq);
}

namespace detail {

inline bool interior_node(const Grid3& g, std::size_t n) {
  const Index3 q = g.unflatten(n);
  for (std::size_t a = 0; a < 3; ++a) {
    if (q[a] == 0 || q[a] + 1 == g.dims[a]) return false;
  }
  return true;
}

}  // namespace detail

inline SourceErrors source_errors(const SpaceTimeField& j_hat, const AnalyticSource& j) {
  double num = 0.0, den = 0.0, mx = 0.0;
  for (std::size_t n = 0; n < j_hat.nt; ++n) {
    const double t = j_hat.time(n);
    for (std::size_t q = 0; q < j_hat.nodes(); ++q) {
      const double exact = j(j_hat.grid.position(q), t);
      const double d = j_hat.at(n, q) - exact;
      num += d * d;
      den += exact * exact;
      mx = std::max(mx, std::abs(d));
    }
  }
  return {den > 0.0 ? std::sqrt(num / den) : std::sqrt(num), mx};
}

/// Kernel and measured trace for sweep node n: fills the forward-side fields
/// of `d` (truth, kernel diagnostics, v, w with remainder and noise added)
/// and returns the kernel.
inline response::ResponseKernel synthesize_droplet(const Model& m, std::size_t n, const TimeSignal& v, DropletResult& d,
                                                   const std::string& provenance) {
  const Scenario& s = m.scenario;
  d.index = n;
  d.z = m.sweep.position(n);
  const response::DropletSpec spec{d.z, s.sweep.radius, s.sweep.kappa};
  const auto path = response::path_data(m.background, s.probe, spec);
  d.zeta_true = path.zeta;
  d.c0_true = path.c0_center;
  auto k = response::assemble_kernel(m.eigensystem, path, spec, s.horizon, s.dt, provenance);
  d.alpha = k.alpha;
  d.alpha_tail = k.alpha_tail;
  d.kernel_norm = k.kernel_norm;
  d.kernel_tail = k.kernel_tail;
  d.sigma_approximate = k.sigma_approximate;
  d.v = v;
  TimeSignal w = response::synthesize_w(k, d.v);
  d.synthesis_tail = response::synthesis_tail(k, d.v);
  d.causality_violations = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.time(i) <= d.zeta_true && w.samples[i] != 0.0) ++d.causality_violations;
  }
  if (s.remainder_constant != 0.0) {
    const auto r = response::synthetic_remainder(s.dt, w.size(), d.zeta_true, s.sweep.radius, s.remainder_constant);
    for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] += r.samples[i];
  }
  if (s.noise.level > 0.0) {
    auto rng = droplet_rng(s.noise.seed, n);
    std::normal_distribution<double> gauss(0.0, s.noise.level);
    for (double& x : w.samples) x += gauss(rng);
  }
  d.w = std::move(w);
  return k;
}

/// Runs every stage on an already-built model.
inline PipelineResult run_pipeline(const Model& m, const PipelineOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const Scenario& s = m.scenario;
  PipelineResult out;
  auto& rep = out.report;
  auto& met = out.metrics;
  rep.scenario_hash = scenario_hash(s);
  rep.zeta_provenance = m.background.travel_time_provenance();
  auto note = [&](std::string_view stage, std::string_view msg) {
    if (opts.progress) opts.progress(stage, msg);
  };
  auto timed = [&](const std::string& stage, auto&& body) {
    const auto t0 = clock::now();
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what(), std::make_shared<const PipelineResult>(out));
    }
    met.runtimes[stage] = std::chrono::duration<double>(clock::now() - t0).count();
  };

  const std::size_t count = m.sweep.node_count();
  std::vector<Vec3> centres(count);
  for (std::size_t n = 0; n < count; ++n) centres[n] = m.sweep.position(n);
  rep.droplets.resize(count);

  // forward
  std::vector<TimeSignal> v_traces;
  timed("forward", [&] {
    note("forward", s.forward.method + " at " + std::to_string(count) + " centres");
    if (opts.v_traces) {
      if (opts.v_traces->size() != count) throw InvalidArgument("precomputed traces do not match the sweep");
      v_traces = *opts.v_traces;
    } else {
      v_traces = forward_traces(m, centres, opts.workers);
    }
  });

  // synthesize + detect
  double zeta_min = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < count; ++n) zeta_min = std::min(zeta_min, m.background.travel_time(s.probe, centres[n]));
  const double window_end = 0.5 * zeta_min;
  std::vector<response::ResponseKernel> kernels(count);
  timed("synthesize", [&] {
    note("synthesize", "kernels and measured traces");
    parallel_for(count, opts.workers, [&](std::size_t n) {
      kernels[n] = synthesize_droplet(m, n, v_traces[n], rep.droplets[n], rep.zeta_provenance);
    });
  });

  timed("detect", [&] {
    note("detect", "jump detection");
    std::vector<double> thresholds(count);
    for (std::size_t n = 0; n < count; ++n) {
      auto& d = rep.droplets[n];
      d.noise_floor = reconstruct::noise_floor(d.w, window_end);
      d.threshold = reconstruct::calibrated_threshold(d.noise_floor, s.threshold_constant, s.sweep.radius);
      thresholds[n] = d.threshold;
    }
    std::vector<TimeSignal> ws(count);
    for (std::size_t n = 0; n < count; ++n) ws[n] = rep.droplets[n].w;
    rep.zeta_map = reconstruct::sweep_travel_times(s.probe, m.sweep, ws, thresholds);
    for (std::size_t n = 0; n < count; ++n) {
      if (rep.zeta_map->usable[n]) rep.droplets[n].zeta_hat = rep.zeta_map->zeta[n];
    }
  });

  timed("speed", [&] {
    auto& map = *rep.zeta_map;
    if (!reconstruct::fill_unusable(map)) {
      rep.notes.emplace_back("no usable droplet centres; speed map left empty");
      note("speed", "no usable centres");
      return;
    }
    for (std::size_t n = 0; n < count; ++n) rep.droplets[n].filled = map.filled[n] != 0;
    if (m.sweep.dims[0] < 3 || m.sweep.dims[1] < 3 || m.sweep.dims[2] < 3) {
      rep.notes.emplace_back("sweep grid has fewer than 3 nodes on some axis; speed not recovered");
      return;
    }
    note("speed", "eikonal inversion");
    rep.speed_hat = reconstruct::recover_speed(map);
    rep.eikonal = reconstruct::eikonal_consistency(*rep.speed_hat, map);
  });

  timed("recover_v", [&] {
    const bool estimated = s.recovery.kernel == "estimated";
    if (estimated && !rep.speed_hat) {
      rep.notes.emplace_back("estimated kernel needs a recovered speed; v not recovered");
      return;
    }
    note("recover_v", estimated ? "estimated kernels" : "forward kernels");
    parallel_for(count, opts.workers, [&](std::size_t n) {
      DropletResult& d = rep.droplets[n];
      response::ResponseKernel k;
      if (estimated) {
        response::PathData p;
        p.zeta = rep.zeta_map->zeta[n];
        p.c0_center = rep.speed_hat->at_node(n);
        const response::DropletSpec spec{d.z, s.sweep.radius, s.sweep.kappa};
        k = response::assemble_kernel(m.eigensystem, p, spec, s.horizon, s.dt, "detected");
      } else {
        k = kernels[n];
      }
      d.zeta_used = k.zeta;
      d.c0_used = estimated ? rep.speed_hat->at_node(n) : d.c0_true;
      d.v_hat = reconstruct::recover_v(d.w, k);
      const std::size_t len = std::min(d.v_hat.size(), d.v.size());
      d.v_error = relative_l2_error(std::span(d.v_hat.samples).first(len), std::span(d.v.samples).first(len));
    });
  });

  timed("source", [&] {
    if (!rep.speed_hat) return;
    for (const auto& d : rep.droplets) {
      if (d.v_hat.empty()) return;
    }
    note("source", "wave operator on recovered traces");
    std::vector<TimeSignal> vh(count);
    for (std::size_t n = 0; n < count; ++n) vh[n] = rep.droplets[n].v_hat;
    reconstruct::SourceRecoveryOptions so;
    so.mollifier.space_width = s.recovery.space_width;
    so.mollifier.time_width = s.recovery.time_width;
    so.time_stride = s.recovery.time_stride;
    const SpeedField speed = s.recovery.source_speed == "true" ? m.speed : *rep.speed_hat;
    rep.source_hat = reconstruct::recover_source(m.sweep, vh, speed, so);
    rep.source_errors = source_errors(*rep.source_hat, m.source);
  });

  // metrics
  const double bound = travel_time_bound(s.dt, s.sweep.radius, s.source.vanishing_order);
  met.zeta_bound = bound;
  std::size_t within = 0, recovered = 0;
  double err_sum = 0.0;
  for (const auto& d : rep.droplets) {
    met.causality_violations += d.causality_violations;
    if (d.zeta_hat) {
      ++met.usable;
      const double e = std::abs(*d.zeta_hat - d.zeta_true);
      met.zeta_error_max = std::max(met.zeta_error_max, e);
      if (e <= bound) ++within;
    } else {
      ++met.unusable;
    }
    if (!std::isnan(d.v_error)) {
      ++recovered;
      err_sum += d.v_error;
      met.v_error_max = std::max(met.v_error_max, d.v_error);
    }
  }
  met.v_error_mean = recovered ? err_sum / static_cast<double>(recovered) : 0.0;
  met.zeta_within_fraction = met.usable ? static_cast<double>(within) / static_cast<double>(met.usable) : 0.0;
  if (rep.speed_hat) {
    double e_int = 0.0, e_all = 0.0;
    for (std::size_t n = 0; n < count; ++n) {
      const double c = true_speed_at(s, m.speed, centres[n]);
      const double e = std::abs(rep.speed_hat->at_node(n) - c) / c;
      e_all = std::max(e_all, e);
      if (detail::interior_node(m.sweep, n)) e_int = std::max(e_int, e);
    }
    met.speed_error_max = e_all;
    met.speed_error_interior_max = e_int;
  }
  if (rep.source_errors) met.source_error = rep.source_errors->relative_l2;
  return out;
}

inline PipelineResult run_pipeline(const Scenario& s, const PipelineOptions& opts = {}) {
  Model m;
  try {
    m = build_model(s);
  } catch (const std::exception& e) {
    throw StageError("build", e.what());
  }
  return run_pipeline(m, opts);
}

// --- serialization ----------------------------------------------------------------

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

/// Deterministic report document (no timings).
inline json report_json(const ReconstructionReport& rep) {
  json droplets = json::array();
  for (const auto& d : rep.droplets) {
    droplets.push_back({{"index", d.index},
                        {"z", detail::vec_json(d.z)},
                        {"zeta_true", d.zeta_true},
                        {"zeta_hat", d.zeta_hat ? json(*d.zeta_hat) : json(nullptr)},
                        {"usable", d.zeta_hat.has_value()},
                        {"filled", d.filled},
                        {"zeta_used", d.zeta_used},
                        {"c0_true", d.c0_true},
                        {"c0_used", d.c0_used},
                        {"alpha", d.alpha},
                        {"alpha_tail", d.alpha_tail},
                        {"kernel_norm", d.kernel_norm},
                        {"kernel_tail", d.kernel_tail},
                        {"synthesis_tail", d.synthesis_tail},
                        {"sigma_approximate", d.sigma_approximate},
                        {"causality_violations", d.causality_violations},
                        {"noise_floor", d.noise_floor},
                        {"threshold", d.threshold},
                        {"v_error", detail::number_or_null(d.v_error)}});
  }
  json doc = {{"scenario_hash", rep.scenario_hash},
              {"zeta_provenance", rep.zeta_provenance},
              {"droplets", droplets},
              {"notes", rep.notes}};
  if (rep.speed_hat) {
    doc["speed"] = {{"min", rep.speed_hat->min()}, {"max", rep.speed_hat->max()}, {"field", "fields/speed_hat"}};
  } else {
    doc["speed"] = nullptr;
  }
  if (rep.eikonal) {
    doc["eikonal_consistency"] = {
        {"max_error", rep.eikonal->max_error}, {"bound", rep.eikonal->bound}, {"passed", rep.eikonal->passed}};
  }
  if (rep.source_hat) {
    doc["source"] = {{"field", "fields/source_hat"},
                     {"relative_l2", rep.source_errors->relative_l2},
                     {"max_abs", rep.source_errors->max_abs}};
  }
  return doc;
}

inline json metrics_json(const MetricsRecord& m) {
  using detail::number_or_null;
  return {{"v_error_max", m.v_error_max},
          {"v_error_mean", m.v_error_mean},
          {"usable", m.usable},
          {"unusable", m.unusable},
          {"zeta_error_max", m.zeta_error_max},
          {"zeta_bound", m.zeta_bound},
          {"zeta_within_fraction", m.zeta_within_fraction},
          {"speed_error_interior_max", number_or_null(m.speed_error_interior_max)},
          {"speed_error_max", number_or_null(m.speed_error_max)},
          {"source_error", number_or_null(m.source_error)},
          {"causality_violations", m.causality_violations},
          {"runtimes_s", m.runtimes}};
}

/// Writes the run directory layout:
///   scenario.json, report.json, metrics.json,
///   fields/<name>.bin + .json, traces/<kind>_<index>.csv
inline void write_run_directory(const fs::path& dir, const Scenario& s, const PipelineResult& res) {
  fs::create_directories(dir);
  const std::string hash = scenario_hash(s);
  write_json(dir / "scenario.json", to_json(s));
  const auto& rep = res.report;
  if (s.output.fields) {
    const fs::path fdir = dir / "fields";
    const SpeedField truth = make_speed(s);
    write_field(fdir, "speed_true", truth.grid(), truth.values(),
                {background::to_string(truth.kind()), "length/time", "scenario", hash});
    if (rep.zeta_map) {
      write_field(fdir, "zeta_hat", rep.zeta_map->grid, rep.zeta_map->zeta, {"travel_time", "time", "detect_jump", hash});
    }
    if (rep.speed_hat) {
      write_field(fdir, "speed_hat", rep.speed_hat->grid(), rep.speed_hat->values(),
                  {"gridded", "length/time", "recover_speed", hash});
    }
    if (rep.source_hat) write_space_time_field(fdir, "source_hat", *rep.source_hat, {"source", "1/time^2 (signal/length^2)", "recover_source", hash});
  }
  if (s.output.traces) {
    const fs::path tdir = dir / "traces";
    for (const auto& d : rep.droplets) {
      const std::string id = std::to_string(d.index);
      if (!d.v.empty()) write_trace_csv(tdir / ("v_" + id + ".csv"), d.v);
      if (!d.w.empty()) write_trace_csv(tdir / ("w_" + id + ".csv"), d.w);
      if (!d.v_hat.empty()) write_trace_csv(tdir / ("vhat_" + id + ".csv"), d.v_hat);
    }
  }
  write_json(dir / "report.json", report_json(rep));
  write_json(dir / "metrics.json", metrics_json(res.metrics));
}

}  // namespace droplet::harness
