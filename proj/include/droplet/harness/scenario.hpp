#pragma once

// Scenario configuration: parsing, validation and the canonical persisted
// form (every default spelled out) whose git-blob hash tags all outputs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "droplet/common.hpp"
#include "droplet/harness/io.hpp"
#include "droplet/spectrum.hpp"

namespace droplet::harness {

/// Raised when a scenario breaks one or more invariants; lists all of them.
class ValidationError : public InvalidArgument {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : InvalidArgument(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid scenario:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

struct DomainSpec {
  Vec3 origin{-0.5, -0.5, -0.5};
  Vec3 extent{1.0, 1.0, 1.0};
};

/// constant: c = value. radial: c = value * (1 + contrast * exp(-|y - centre|^2 / (2 width^2))).
/// file: a field dump (`<stem>.json` + `<stem>.bin`) on the domain grid.
struct SpeedSpec {
  std::string kind = "constant";
  double value = 1.0;
  Vec3 center{};
  double contrast = 0.0;
  double width = 0.25;
  std::string file;
};

/// J = amplitude * phi(y) * s^(p+1) (1 - s)^decay, s = t / duration. phi is a
/// (1 - r^2/R^2)^power bump or a tapered Gaussian of std `width` cut at R.
struct SourceSpec {
  std::string profile = "bump";
  Vec3 center{};
  double radius = 0.3;
  double width = 0.1;
  int power = 4;
  double duration = 0.5;
  int vanishing_order = 1;
  double amplitude = 1.0;
  int decay_order = 4;
};

struct SweepSpec {
  Vec3 origin{-0.2, -0.2, -0.2};
  double spacing = 0.1;
  Index3 dims{5, 5, 5};
  double radius = 0.02;  // droplet radius a
  double kappa = 0.5;    // c1 = kappa * a
};

struct NoiseSpec {
  double level = 0.0;  // standard deviation, signal units
  std::uint64_t seed = 0;
};

struct ForwardSpec {
  std::string method = "retarded";  // retarded | fdtd
  double quadrature_cell = 0.0;     // 0: support extent / 64
  std::size_t oversample = 1;
  std::size_t padding = 15;
};

struct RecoverySpec {
  /// forward: kernel from the model's zeta and c0; estimated: from the
  /// detected zeta_hat and the recovered c_hat.
  std::string kernel = "forward";
  /// recovered | true: speed used in the wave operator for the source.
  std::string source_speed = "recovered";
  double space_width = 0.0;
  double time_width = 0.0;
  std::size_t time_stride = 1;
};

struct OutputSpec {
  bool traces = true;
  bool fields = true;
};

struct Scenario {
  DomainSpec domain;
  double h = 1.0 / 32.0;
  SpeedSpec speed;
  SourceSpec source;
  Vec3 probe{0.5, 0.0, 0.0};
  SweepSpec sweep;
  double horizon = 1.0;
  double dt = 5e-4;
  int n_max = spectrum::kDefaultModeCount;
  double tol = 1e-8;
  NoiseSpec noise;
  double remainder_constant = 0.0;
  double threshold_constant = 1e-3;
  int tier = 1;
  ForwardSpec forward;
  RecoverySpec recovery;
  OutputSpec output;
  /// Directory used to resolve relative paths (not persisted).
  std::filesystem::path base_dir;

  Grid3 domain_grid() const {
    Grid3 g;
    g.origin = domain.origin;
    g.spacing = h;
    for (std::size_t a = 0; a < 3; ++a) g.dims[a] = static_cast<std::size_t>(std::llround(domain.extent[a] / h)) + 1;
    return g;
  }
  Grid3 sweep_grid() const { return {sweep.origin, sweep.spacing, sweep.dims}; }
  std::size_t time_samples() const { return static_cast<std::size_t>(std::llround(horizon / dt)) + 1; }
};

namespace detail {

inline json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Reads `key` from `obj` into `out` when present; records type errors and
// remembers the key as consumed.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path("") + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, Vec3>) {
        out = vec_from(obj_.at(key));
      } else if constexpr (std::is_same_v<T, Index3>) {
        const auto& a = obj_.at(key);
        if (!a.is_array() || a.size() != 3) throw InvalidArgument("expected 3 integers");
        out = {a[0].get<std::size_t>(), a[1].get<std::size_t>(), a[2].get<std::size_t>()};
      } else {
        out = obj_.at(key).get<T>();
      }
    } catch (const std::exception& e) {
      errors_.push_back(path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  void reject_unknown() {
    if (!obj_.is_object()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) errors_.push_back(path(it.key().c_str()) + ": unknown key");
    }
  }

  std::string path(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const Scenario& s) {
  using detail::vec_json;
  return {
      {"domain", {{"origin", vec_json(s.domain.origin)}, {"extent", vec_json(s.domain.extent)}}},
      {"h", s.h},
      {"speed",
       {{"kind", s.speed.kind},
        {"value", s.speed.value},
        {"center", vec_json(s.speed.center)},
        {"contrast", s.speed.contrast},
        {"width", s.speed.width},
        {"file", s.speed.file}}},
      {"source",
       {{"profile", s.source.profile},
        {"center", vec_json(s.source.center)},
        {"radius", s.source.radius},
        {"width", s.source.width},
        {"power", s.source.power},
        {"duration", s.source.duration},
        {"vanishing_order", s.source.vanishing_order},
        {"amplitude", s.source.amplitude},
        {"decay_order", s.source.decay_order}}},
      {"probe", vec_json(s.probe)},
      {"sweep",
       {{"origin", vec_json(s.sweep.origin)},
        {"spacing", s.sweep.spacing},
        {"dims", {s.sweep.dims[0], s.sweep.dims[1], s.sweep.dims[2]}},
        {"radius", s.sweep.radius},
        {"kappa", s.sweep.kappa}}},
      {"horizon", s.horizon},
      {"dt", s.dt},
      {"n_max", s.n_max},
      {"tol", s.tol},
      {"noise", {{"level", s.noise.level}, {"seed", s.noise.seed}}},
      {"remainder", {{"constant", s.remainder_constant}}},
      {"threshold", {{"constant", s.threshold_constant}}},
      {"tier", s.tier},
      {"forward",
       {{"method", s.forward.method},
        {"quadrature_cell", s.forward.quadrature_cell},
        {"oversample", s.forward.oversample},
        {"padding", s.forward.padding}}},
      {"recovery",
       {{"kernel", s.recovery.kernel},
        {"source_speed", s.recovery.source_speed},
        {"space_width", s.recovery.space_width},
        {"time_width", s.recovery.time_width},
        {"time_stride", s.recovery.time_stride}}},
      {"output", {{"traces", s.output.traces}, {"fields", s.output.fields}}},
  };
}

/// Canonical text of the scenario: the fully defaulted JSON, compact, keys sorted.
inline std::string canonical_text(const Scenario& s) { return to_json(s).dump(); }

inline std::string scenario_hash(const Scenario& s) { return git_blob_hash(canonical_text(s)); }

/// Upper bound on c0 implied by the speed spec (the file case needs the field).
inline double speed_upper_bound(const Scenario& s, double file_max = 0.0) {
  if (s.speed.kind == "constant") return s.speed.value;
  if (s.speed.kind == "radial") return s.speed.value * (1.0 + std::max(s.speed.contrast, 0.0));
  return file_max;
}

inline double speed_lower_bound(const Scenario& s) {
  if (s.speed.kind == "radial") return s.speed.value * (1.0 + std::min(s.speed.contrast, 0.0));
  return s.speed.value;
}

/// Every invariant violation, each naming the offending key. `file_max` is
/// the maximum of a file-backed speed field (ignored otherwise).
inline std::vector<std::string> validate(const Scenario& s, double file_max = 0.0) {
  std::vector<std::string> v;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  need(s.h > 0.0, "h: grid spacing must be positive");
  for (std::size_t a = 0; a < 3; ++a) need(s.domain.extent[a] > 0.0, "domain.extent: extents must be positive");
  if (s.h > 0.0) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double cells = s.domain.extent[a] / s.h;
      need(std::abs(cells - std::round(cells)) < 1e-6 && cells >= 2.0,
           "h: domain extent must be a whole number (>= 2) of cells along every axis");
    }
  }
  const Vec3 lo = s.domain.origin, hi = s.domain.origin + s.domain.extent;
  auto inside = [&](Vec3 p, double margin) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (p[a] < lo[a] + margin || p[a] > hi[a] - margin) return false;
    }
    return true;
  };

  // speed
  const std::set<std::string> kinds{"constant", "radial", "file"};
  need(kinds.count(s.speed.kind) == 1, "speed.kind: must be constant, radial or file");
  need(s.speed.kind == "file" || s.speed.value > 0.0, "speed.value: speed must be positive");
  if (s.speed.kind == "radial") {
    need(s.speed.contrast > -1.0, "speed.contrast: must exceed -1 to keep the speed positive");
    need(s.speed.width > 0.0, "speed.width: must be positive");
  }
  if (s.speed.kind == "file") need(!s.speed.file.empty(), "speed.file: path required for a file-backed speed");
  const double cmax = speed_upper_bound(s, file_max);

  // tier and forward method
  need(s.tier == 1 || s.tier == 2, "tier: must be 1 or 2");
  if (s.tier == 1) need(s.speed.kind == "constant", "tier: tier 1 requires a constant speed");
  if (s.tier == 2) need(s.speed.kind != "constant", "tier: tier 2 requires a radial or file speed");
  need(s.forward.method == "retarded" || s.forward.method == "fdtd", "forward.method: must be retarded or fdtd");
  if (s.forward.method == "retarded") {
    need(s.speed.kind == "constant", "forward.method: the retarded potential requires a constant speed");
  }
  need(s.forward.quadrature_cell >= 0.0, "forward.quadrature_cell: must be non-negative");
  need(s.forward.oversample >= 1, "forward.oversample: must be at least 1");

  // source
  need(s.source.profile == "bump" || s.source.profile == "gaussian", "source.profile: must be bump or gaussian");
  need(s.source.radius > 0.0, "source.radius: must be positive");
  if (s.source.profile == "gaussian") need(s.source.width > 0.0, "source.width: must be positive");
  need(s.source.power >= 1, "source.power: must be at least 1");
  need(s.source.vanishing_order >= 0, "source.vanishing_order: must be non-negative");
  need(s.source.decay_order >= 1, "source.decay_order: must be at least 1");
  need(std::isfinite(s.source.amplitude), "source.amplitude: must be finite");
  need(s.source.duration > 0.0 && s.source.duration < s.horizon,
       "source.duration: the pulse must end inside (0, horizon)");
  need(inside(s.source.center, s.source.radius), "source.radius: source support must lie inside the domain");

  // probe on the boundary
  {
    bool on_face = false;
    for (std::size_t a = 0; a < 3; ++a) {
      const double tol = 1e-9 * std::max(1.0, s.domain.extent[a]);
      if (std::abs(s.probe[a] - lo[a]) < tol || std::abs(s.probe[a] - hi[a]) < tol) on_face = true;
    }
    need(on_face && inside(s.probe, -1e-9), "probe: must lie on the boundary of the domain");
  }

  // droplet sweep
  need(s.sweep.spacing > 0.0, "sweep.spacing: must be positive");
  need(s.sweep.dims[0] >= 1 && s.sweep.dims[1] >= 1 && s.sweep.dims[2] >= 1, "sweep.dims: must be at least 1");
  need(s.sweep.radius > 0.0, "sweep.radius: droplet radius must be positive");
  need(s.sweep.kappa > 0.0, "sweep.kappa: must be positive");
  if (s.sweep.spacing > 0.0 && s.sweep.radius > 0.0) {
    const Grid3 g = s.sweep_grid();
    bool all_inside = true;
    bool probe_clear = true;
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      const Vec3 z = g.position(n);
      all_inside = all_inside && inside(z, s.sweep.radius);
      probe_clear = probe_clear && distance(z, s.probe) > s.sweep.radius;
    }
    need(all_inside, "sweep: droplet balls must lie strictly inside the domain");
    need(probe_clear, "sweep: the probe must lie outside every droplet");
  }
  need(s.horizon > 0.0, "horizon: must be positive");
  if (s.sweep.radius > 0.0 && s.sweep.kappa > 0.0 && s.horizon > 0.0) {
    need(spectrum::check_riesz_condition(s.sweep.radius, s.sweep.kappa * s.sweep.radius, s.horizon),
         "sweep.kappa: Riesz condition c1 T < a violated (kappa * horizon = " +
             format_double(s.sweep.kappa * s.horizon) + " must be < 1)");
  }

  // time stepping
  need(s.dt > 0.0 && s.dt < s.horizon, "dt: must lie in (0, horizon)");
  if (s.dt > 0.0 && s.horizon > 0.0) {
    const double steps = s.horizon / s.dt;
    need(std::abs(steps - std::round(steps)) < 1e-6 * std::max(1.0, steps), "dt: horizon must be a whole number of steps");
  }
  if (s.dt > 0.0 && s.h > 0.0 && cmax > 0.0) {
    need(s.dt <= s.h / (std::sqrt(3.0) * cmax) * (1.0 + 1e-12), "dt: must satisfy dt <= h / (sqrt(3) max c0)");
  }
  need(s.n_max >= 1, "n_max: must be at least 1");
  need(s.tol > 0.0, "tol: must be positive");
  need(s.noise.level >= 0.0, "noise.level: must be non-negative");
  need(s.threshold_constant > 0.0, "threshold.constant: must be positive");
  need(std::isfinite(s.remainder_constant), "remainder.constant: must be finite");
  need(s.recovery.kernel == "forward" || s.recovery.kernel == "estimated", "recovery.kernel: must be forward or estimated");
  need(s.recovery.source_speed == "recovered" || s.recovery.source_speed == "true",
       "recovery.source_speed: must be recovered or true");
  need(s.recovery.space_width >= 0.0 && s.recovery.time_width >= 0.0, "recovery: mollifier widths must be non-negative");
  need(s.recovery.time_stride >= 1, "recovery.time_stride: must be at least 1");
  return v;
}

/// Parses a scenario document; unknown keys and type errors are reported
/// together with the invariant violations.
inline Scenario parse_scenario(const json& doc, std::vector<std::string>& errors) {
  Scenario s;
  detail::Reader top(doc, "", errors);
  if (const json* d = top.child("domain")) {
    detail::Reader r(*d, "domain", errors);
    r.get("origin", s.domain.origin);
    r.get("extent", s.domain.extent);
    r.reject_unknown();
  }
  top.get("h", s.h);
  if (const json* d = top.child("speed")) {
    detail::Reader r(*d, "speed", errors);
    r.get("kind", s.speed.kind);
    r.get("value", s.speed.value);
    r.get("center", s.speed.center);
    r.get("contrast", s.speed.contrast);
    r.get("width", s.speed.width);
    r.get("file", s.speed.file);
    r.reject_unknown();
  }
  if (const json* d = top.child("source")) {
    detail::Reader r(*d, "source", errors);
    r.get("profile", s.source.profile);
    r.get("center", s.source.center);
    r.get("radius", s.source.radius);
    r.get("width", s.source.width);
    r.get("power", s.source.power);
    r.get("duration", s.source.duration);
    r.get("vanishing_order", s.source.vanishing_order);
    r.get("amplitude", s.source.amplitude);
    r.get("decay_order", s.source.decay_order);
    r.reject_unknown();
  }
  top.get("probe", s.probe);
  if (const json* d = top.child("sweep")) {
    detail::Reader r(*d, "sweep", errors);
    r.get("origin", s.sweep.origin);
    r.get("spacing", s.sweep.spacing);
    r.get("dims", s.sweep.dims);
    r.get("radius", s.sweep.radius);
    r.get("kappa", s.sweep.kappa);
    r.reject_unknown();
  }
  top.get("horizon", s.horizon);
  top.get("dt", s.dt);
  top.get("n_max", s.n_max);
  top.get("tol", s.tol);
  if (const json* d = top.child("noise")) {
    detail::Reader r(*d, "noise", errors);
    r.get("level", s.noise.level);
    r.get("seed", s.noise.seed);
    r.reject_unknown();
  }
  if (const json* d = top.child("remainder")) {
    detail::Reader r(*d, "remainder", errors);
    r.get("constant", s.remainder_constant);
    r.reject_unknown();
  }
  if (const json* d = top.child("threshold")) {
    detail::Reader r(*d, "threshold", errors);
    r.get("constant", s.threshold_constant);
    r.reject_unknown();
  }
  top.get("tier", s.tier);
  if (const json* d = top.child("forward")) {
    detail::Reader r(*d, "forward", errors);
    r.get("method", s.forward.method);
    r.get("quadrature_cell", s.forward.quadrature_cell);
    r.get("oversample", s.forward.oversample);
    r.get("padding", s.forward.padding);
    r.reject_unknown();
  }
  if (const json* d = top.child("recovery")) {
    detail::Reader r(*d, "recovery", errors);
    r.get("kernel", s.recovery.kernel);
    r.get("source_speed", s.recovery.source_speed);
    r.get("space_width", s.recovery.space_width);
    r.get("time_width", s.recovery.time_width);
    r.get("time_stride", s.recovery.time_stride);
    r.reject_unknown();
  }
  if (const json* d = top.child("output")) {
    detail::Reader r(*d, "output", errors);
    r.get("traces", s.output.traces);
    r.get("fields", s.output.fields);
    r.reject_unknown();
  }
  top.reject_unknown();
  return s;
}

/// Parses and validates; throws ValidationError listing every problem.
inline Scenario scenario_from_json(const json& doc, std::filesystem::path base_dir = {}, double file_max = 0.0) {
  std::vector<std::string> errors;
  Scenario s = parse_scenario(doc, errors);
  s.base_dir = std::move(base_dir);
  const auto more = validate(s, file_max);
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return s;
}

/// Resolves a file-backed speed path against the scenario directory.
inline std::filesystem::path resolve_path(const Scenario& s, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || s.base_dir.empty() ? path : s.base_dir / path;
}

/// Splits "dir/stem" (with or without a .json/.bin suffix) into dir and stem.
inline std::pair<std::filesystem::path, std::string> field_location(const std::filesystem::path& p) {
  std::filesystem::path q = p;
  if (q.extension() == ".json" || q.extension() == ".bin") q.replace_extension();
  return {q.parent_path().empty() ? std::filesystem::path(".") : q.parent_path(), q.filename().string()};
}

/// Reads, parses and validates a scenario file.
inline Scenario load_scenario(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("scenario parse error: ") + e.what());
  }
  const auto base = path.parent_path();
  double file_max = 0.0;
  // A file-backed speed needs its maximum for the CFL check.
  if (doc.is_object() && doc.contains("speed") && doc["speed"].is_object() && doc["speed"].value("kind", "") == "file") {
    const std::string f = doc["speed"].value("file", "");
    if (!f.empty()) {
      Scenario tmp;
      tmp.base_dir = base;
      const auto [dir, stem] = field_location(resolve_path(tmp, f));
      try {
        const auto field = read_field(dir, stem);
        for (double c : field.values) file_max = std::max(file_max, c);
      } catch (const std::exception& e) {
        throw ValidationError({std::string("speed.file: ") + e.what()});
      }
    }
  }
  return scenario_from_json(doc, base, file_max);
}

}  // namespace droplet::harness
