#pragma once

// Convergence studies: rerun an experiment over a ladder of one parameter and
// fit log-log slopes of the error it controls.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "droplet/harness/pipeline.hpp"

namespace droplet::harness {

enum class StudyAxis { a, h, dt, n_max, spacing };

inline std::string to_string(StudyAxis axis) {
  switch (axis) {
    case StudyAxis::a: return "a";
    case StudyAxis::h: return "h";
    case StudyAxis::dt: return "dt";
    case StudyAxis::n_max: return "n_max";
    case StudyAxis::spacing: return "spacing";
  }
  return "?";
}

inline StudyAxis parse_axis(std::string_view name) {
  if (name == "a") return StudyAxis::a;
  if (name == "h") return StudyAxis::h;
  if (name == "dt") return StudyAxis::dt;
  if (name == "n_max" || name == "nmax") return StudyAxis::n_max;
  if (name == "spacing") return StudyAxis::spacing;
  throw InvalidArgument("unknown study axis '" + std::string(name) + "' (expected a, h, dt, n_max or spacing)");
}

struct StudyLevel {
  double level = 0.0;
  double measure = 0.0;
  json detail;
};

struct StudyResult {
  StudyAxis axis = StudyAxis::a;
  /// What `measure` holds at each level.
  std::string measure;
  std::vector<StudyLevel> levels;
  /// Least-squares slope of log(measure) against log(level); NaN when the
  /// axis has no rate (n_max).
  double slope = std::numeric_limits<double>::quiet_NaN();
  /// measure[i] / measure[i + 1].
  std::vector<double> ratios;
};

struct StudyOptions {
  std::size_t workers = 1;
  std::function<void(std::string_view stage, std::string_view message)> progress;
  /// Evaluation points for the h axis; the sweep nodes when empty.
  std::vector<Vec3> probes;
};

// --- forward consistency ------------------------------------------------------------

struct ForwardConsistency {
  std::vector<double> h;
  /// errors[level][probe]: relative L2 error of the FDTD trace against the
  /// retarded potential on the coarsest level's time grid.
  std::vector<std::vector<double>> errors;
  std::vector<double> max_error;
};

/// FDTD at each spacing in `hs` (CFL 0.5) against the retarded-potential
/// oracle. Finer levels are sampled at the coarse times, so the time steps
/// should nest (halving h does this).
inline ForwardConsistency fdtd_vs_retarded(const Scenario& s, std::span<const double> hs, std::span<const Vec3> probes,
                                           std::size_t workers = 1) {
  if (s.speed.kind != "constant") throw InvalidArgument("fdtd_vs_retarded: needs a constant speed");
  if (hs.empty() || probes.empty()) throw InvalidArgument("fdtd_vs_retarded: need levels and probes");
  const AnalyticSource src = make_source(s);
  ForwardConsistency out;
  std::vector<std::vector<TimeSignal>> traces;
  for (double h : hs) {
    Scenario sl = s;
    sl.h = h;
    wavefield::FdtdOptions fo;
    fo.horizon = s.horizon;
    fo.cfl = 0.5;
    fo.padding = s.forward.padding;
    fo.probes.assign(probes.begin(), probes.end());
    fo.record_field = false;
    auto res = wavefield::fdtd_solve(src, SpeedField::constant(sl.domain_grid(), s.speed.value), fo);
    traces.push_back(std::move(res.probes));
    out.h.push_back(h);
  }
  const TimeSignal& coarse = traces.front().front();
  const auto count = static_cast<std::size_t>(std::floor(s.horizon / coarse.dt + 1e-9)) + 1;
  const TimeSignal grid = TimeSignal::zeros(0.0, coarse.dt, count);
  wavefield::RetardedOptions ro;
  ro.cell = s.forward.quadrature_cell;
  ro.oversample = s.forward.oversample;
  std::vector<TimeSignal> exact(probes.size());
  parallel_for(probes.size(), workers, [&](std::size_t q) {
    exact[q] = wavefield::retarded_potential(src, s.speed.value, probes[q], grid, ro);
  });
  for (const auto& level : traces) {
    std::vector<double> errs;
    for (std::size_t q = 0; q < probes.size(); ++q) {
      std::vector<double> sampled(count);
      for (std::size_t i = 0; i < count; ++i) sampled[i] = level[q].at(grid.time(i), level[q].samples.back());
      errs.push_back(relative_l2_error(sampled, exact[q].samples));
    }
    out.max_error.push_back(*std::max_element(errs.begin(), errs.end()));
    out.errors.push_back(std::move(errs));
  }
  return out;
}

// --- studies ---------------------------------------------------------------------

namespace detail {

inline void revalidate(const Scenario& s) {
  const double file_max = s.speed.kind == "file" ? make_speed(s).max() : 0.0;
  auto v = validate(s, file_max);
  if (!v.empty()) throw ValidationError(std::move(v));
}

inline std::vector<Vec3> sweep_points(const Grid3& g) {
  std::vector<Vec3> p(g.node_count());
  for (std::size_t n = 0; n < p.size(); ++n) p[n] = g.position(n);
  return p;
}

inline json metrics_detail(const MetricsRecord& m) {
  json j = metrics_json(m);
  j.erase("runtimes_s");
  return j;
}

inline void finish(StudyResult& r, bool fit) {
  for (std::size_t i = 0; i + 1 < r.levels.size(); ++i) {
    const double next = r.levels[i + 1].measure;
    r.ratios.push_back(next > 0.0 ? r.levels[i].measure / next : std::numeric_limits<double>::quiet_NaN());
  }
  if (!fit) return;
  std::vector<double> x, y;
  for (const auto& l : r.levels) {
    x.push_back(l.level);
    y.push_back(l.measure);
  }
  r.slope = loglog_slope(x, y);
}

}  // namespace detail

/// Reruns the experiment once per level of `axis`:
///   a        droplet radius; max round-trip v error (v traces shared)
///   h        grid spacing; max FDTD vs retarded-potential error
///   dt       time step; max round-trip v error
///   n_max    mode count; max change of w against the largest level, with
///            the summed synthesis tails as the allowed change
///   spacing  sweep spacing over a fixed sweep box; source error
inline StudyResult convergence_study(const Scenario& s, StudyAxis axis, std::vector<double> levels,
                                     const StudyOptions& opts = {}) {
  if (levels.size() < 3) throw InvalidArgument("convergence_study: need at least 3 levels");
  for (double l : levels) {
    if (!(l > 0.0) || !std::isfinite(l)) throw InvalidArgument("convergence_study: levels must be positive");
  }
  auto note = [&](const std::string& msg) {
    if (opts.progress) opts.progress("study", msg);
  };
  PipelineOptions po;
  po.workers = opts.workers;
  po.progress = opts.progress;

  StudyResult r;
  r.axis = axis;
  switch (axis) {
    case StudyAxis::a: {
      r.measure = "v_error_max";
      std::vector<TimeSignal> v;
      {
        const Model m0 = build_model(s);
        v = forward_traces(m0, detail::sweep_points(m0.sweep), opts.workers);
      }
      po.v_traces = &v;
      for (double a : levels) {
        Scenario sl = s;
        sl.sweep.radius = a;
        detail::revalidate(sl);
        note("a = " + format_double(a));
        const auto res = run_pipeline(build_model(sl), po);
        r.levels.push_back({a, res.metrics.v_error_max, detail::metrics_detail(res.metrics)});
      }
      detail::finish(r, true);
      break;
    }
    case StudyAxis::h: {
      r.measure = "fdtd_error_max";
      for (double h : levels) {
        Scenario sl = s;
        sl.h = h;
        detail::revalidate(sl);
      }
      const auto probes = opts.probes.empty() ? detail::sweep_points(s.sweep_grid()) : opts.probes;
      note("fdtd vs retarded potential at " + std::to_string(probes.size()) + " points");
      const auto fc = fdtd_vs_retarded(s, levels, probes, opts.workers);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        r.levels.push_back({levels[l], fc.max_error[l], json{{"errors", fc.errors[l]}}});
      }
      detail::finish(r, true);
      break;
    }
    case StudyAxis::dt: {
      r.measure = "v_error_max";
      for (double dt : levels) {
        Scenario sl = s;
        sl.dt = dt;
        detail::revalidate(sl);
        note("dt = " + format_double(dt));
        const auto res = run_pipeline(sl, po);
        r.levels.push_back({dt, res.metrics.v_error_max, detail::metrics_detail(res.metrics)});
      }
      detail::finish(r, true);
      break;
    }
    case StudyAxis::n_max: {
      r.measure = "w_change_max";
      for (double l : levels) {
        if (l != std::floor(l)) throw InvalidArgument("convergence_study: n_max levels must be integers");
      }
      std::vector<TimeSignal> v;
      {
        const Model m0 = build_model(s);
        v = forward_traces(m0, detail::sweep_points(m0.sweep), opts.workers);
      }
      po.v_traces = &v;
      std::vector<PipelineResult> runs;
      for (double l : levels) {
        Scenario sl = s;
        sl.n_max = static_cast<int>(l);
        detail::revalidate(sl);
        note("n_max = " + std::to_string(sl.n_max));
        runs.push_back(run_pipeline(build_model(sl), po));
      }
      const std::size_t ref = static_cast<std::size_t>(std::max_element(levels.begin(), levels.end()) - levels.begin());
      const auto& rd = runs[ref].report.droplets;
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& ld = runs[l].report.droplets;
        double change = 0.0, allowed = std::numeric_limits<double>::infinity();
        bool within = true;
        for (std::size_t n = 0; n < ld.size(); ++n) {
          double c = 0.0;
          for (std::size_t i = 0; i < ld[n].w.size(); ++i) c = std::max(c, std::abs(ld[n].w.samples[i] - rd[n].w.samples[i]));
          const double tail = ld[n].synthesis_tail + rd[n].synthesis_tail;
          change = std::max(change, c);
          allowed = std::min(allowed, tail);
          within = within && c <= tail;
        }
        r.levels.push_back({levels[l], change, json{{"tail_min", allowed}, {"within_tail", within}}});
      }
      detail::finish(r, false);
      break;
    }
    case StudyAxis::spacing: {
      r.measure = "source_error";
      for (double sp : levels) {
        Scenario sl = s;
        for (std::size_t a = 0; a < 3; ++a) {
          const double extent = static_cast<double>(s.sweep.dims[a] - 1) * s.sweep.spacing;
          const double cells = extent / sp;
          if (std::abs(cells - std::round(cells)) > 1e-6) {
            throw InvalidArgument("convergence_study: spacing " + format_double(sp) + " does not divide the sweep box");
          }
          sl.sweep.dims[a] = static_cast<std::size_t>(std::llround(cells)) + 1;
        }
        sl.sweep.spacing = sp;
        detail::revalidate(sl);
        note("spacing = " + format_double(sp));
        const auto res = run_pipeline(sl, po);
        if (std::isnan(res.metrics.source_error)) throw Error("convergence_study: source was not recovered at spacing " + format_double(sp));
        r.levels.push_back({sp, res.metrics.source_error, detail::metrics_detail(res.metrics)});
      }
      detail::finish(r, true);
      break;
    }
  }
  return r;
}

inline json study_json(const StudyResult& r) {
  json levels = json::array(), ratios = json::array();
  for (double q : r.ratios) ratios.push_back(detail::number_or_null(q));
  for (const auto& l : r.levels) levels.push_back({{"level", l.level}, {"measure", l.measure}, {"detail", l.detail}});
  return {{"axis", to_string(r.axis)},
          {"measure", r.measure},
          {"levels", levels},
          {"ratios", ratios},
          {"slope", detail::number_or_null(r.slope)}};
}

/// One row per level: level, measure, ratio to the next level.
inline std::string study_table(const StudyResult& r) {
  std::string out = "level," + r.measure + ",ratio\n";
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    out += format_double(r.levels[i].level) + "," + format_double(r.levels[i].measure) + ",";
    if (i < r.ratios.size() && std::isfinite(r.ratios[i])) out += format_double(r.ratios[i]);
    out += "\n";
  }
  return out;
}

}  // namespace droplet::harness
