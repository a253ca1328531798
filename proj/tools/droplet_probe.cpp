// droplet-probe: command-line front end for the forward model, the droplet
// synthesizer, the Volterra inversion, the full pipeline and the
// convergence studies.
//
// Exit codes: 0 success, 2 invalid input, 3 a stage failed.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "droplet/harness/pipeline.hpp"
#include "droplet/harness/study.hpp"
#include "droplet/spectrum.hpp"
#include "droplet/volterra.hpp"

namespace {

using namespace droplet;
using namespace droplet::harness;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitStage = 3;

/// Thrown for failures after the inputs were accepted.
struct StageFailure : Error {
  using Error::Error;
};

struct Common {
  std::string config;
  std::string out;
  std::size_t workers = default_workers();
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
};

Scenario load(const Common& c) {
  if (c.config.empty()) throw InvalidArgument("--config is required");
  Scenario s;
  try {
    s = load_scenario(c.config);
  } catch (const InvalidArgument&) {
    throw;
  } catch (const Error& e) {
    throw InvalidArgument(e.what());  // unreadable config
  }
  if (c.seed) s.noise.seed = *c.seed;
  spdlog::info("scenario {} (hash {})", c.config, scenario_hash(s).substr(0, 12));
  return s;
}

auto progress() {
  return [](std::string_view stage, std::string_view msg) { spdlog::info("[{}] {}", stage, msg); };
}

template <class F>
auto as_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(stage + ": " + e.what());
  }
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    if (item.empty()) throw InvalidArgument("--levels: empty entry");
    try {
      const auto slash = item.find('/');
      if (slash == std::string::npos) {
        out.push_back(std::stod(item));
      } else {
        out.push_back(std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
      }
    } catch (const std::logic_error&) {
      throw InvalidArgument("--levels: cannot parse '" + item + "'");
    }
    pos = comma + 1;
  }
  return out;
}

// --- subcommands ------------------------------------------------------------------

int run_spectrum(const Common& c, double radius, int n_max) {
  if (!c.config.empty()) {
    const Scenario s = load(c);
    radius = s.sweep.radius;
    n_max = s.n_max;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto sys = spectrum::build_eigensystem(radius, n_max);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string lines;
  for (const auto& m : sys.modes) {
    const json row = {{"n", m.n},           {"m", m.m},         {"gamma", m.gamma},
                      {"lambda", m.lambda}, {"avg", m.avg},     {"series_term", m.series_term()},
                      {"residual", spectrum::root_residual(m.n, m.gamma)}};
    lines += row.dump() + "\n";
  }
  lines += json{{"radius", radius}, {"n_max", n_max}, {"series_sum", sys.series_sum}, {"tail_bound", sys.tail_bound},
                {"runtime_s", elapsed}}
               .dump() +
           "\n";
  if (c.out.empty()) {
    std::cout << lines;
  } else {
    write_atomic(c.out, lines);
    spdlog::info("wrote {} modes to {}", sys.modes.size(), c.out);
  }
  return kExitOk;
}

std::vector<TimeSignal> compute_forward(const Model& m, std::size_t workers) {
  std::vector<Vec3> centres(m.sweep.node_count());
  for (std::size_t n = 0; n < centres.size(); ++n) centres[n] = m.sweep.position(n);
  return forward_traces(m, centres, workers);
}

int run_forward(const Common& c) {
  const Scenario s = load(c);
  if (c.out.empty()) throw InvalidArgument("--out is required");
  const fs::path dir = c.out;
  const Model m = as_stage("build", [&] { return build_model(s); });
  spdlog::info("[forward] {} at {} centres", s.forward.method, m.sweep.node_count());
  const auto t0 = std::chrono::steady_clock::now();
  const auto v = as_stage("forward", [&] { return compute_forward(m, c.workers); });
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "scenario.json", to_json(s));
  json centres = json::array();
  for (std::size_t n = 0; n < v.size(); ++n) {
    write_trace_csv(dir / "traces" / ("v_" + std::to_string(n) + ".csv"), v[n]);
    centres.push_back(detail::vec_json(m.sweep.position(n)));
  }
  write_json(dir / "forward.json", {{"scenario_hash", scenario_hash(s)},
                                    {"method", s.forward.method},
                                    {"centres", centres},
                                    {"traces", "traces/v_<index>.csv"},
                                    {"runtime_s", elapsed}});
  spdlog::info("wrote {} traces to {}", v.size(), dir.string());
  return kExitOk;
}

int run_synthesize(const Common& c, const std::string& from) {
  const Scenario s = load(c);
  if (c.out.empty()) throw InvalidArgument("--out is required");
  const fs::path dir = c.out;
  const Model m = as_stage("build", [&] { return build_model(s); });
  const std::size_t count = m.sweep.node_count();
  std::vector<TimeSignal> v;
  if (from.empty()) {
    v = as_stage("forward", [&] { return compute_forward(m, c.workers); });
  } else {
    for (std::size_t n = 0; n < count; ++n) v.push_back(read_trace_csv(fs::path(from) / "traces" / ("v_" + std::to_string(n) + ".csv")));
  }
  std::vector<DropletResult> droplets(count);
  std::vector<response::ResponseKernel> kernels(count);
  const std::string provenance = m.background.travel_time_provenance();
  as_stage("synthesize", [&] {
    parallel_for(count, c.workers, [&](std::size_t n) { kernels[n] = synthesize_droplet(m, n, v[n], droplets[n], provenance); });
    return 0;
  });
  write_json(dir / "scenario.json", to_json(s));
  json rows = json::array();
  for (std::size_t n = 0; n < count; ++n) {
    const auto& d = droplets[n];
    const std::string id = std::to_string(n);
    write_trace_csv(dir / "traces" / ("w_" + id + ".csv"), d.w);
    write_trace_csv(dir / "kernels" / ("K_" + id + ".csv"), kernels[n].K);
    rows.push_back({{"index", n},
                    {"z", detail::vec_json(d.z)},
                    {"zeta", d.zeta_true},
                    {"zeta_provenance", kernels[n].zeta_provenance},
                    {"alpha", d.alpha},
                    {"alpha_tail", d.alpha_tail},
                    {"kernel_norm", d.kernel_norm},
                    {"kernel_tail", d.kernel_tail},
                    {"synthesis_tail", d.synthesis_tail},
                    {"sigma_approximate", d.sigma_approximate},
                    {"causality_violations", d.causality_violations}});
  }
  write_json(dir / "synthesize.json", {{"scenario_hash", scenario_hash(s)}, {"droplets", rows}});
  spdlog::info("wrote {} measured traces and kernels to {}", count, dir.string());
  return kExitOk;
}

int run_invert(const Common& c, const std::string& kernel_path, const std::string& trace_path, double alpha,
               const std::string& method, double tol) {
  if (kernel_path.empty() || trace_path.empty()) throw InvalidArgument("--kernel and --trace are required");
  if (method != "direct" && method != "neumann") throw InvalidArgument("--method must be direct or neumann");
  const TimeSignal kernel = read_trace_csv(kernel_path);
  const TimeSignal g = read_trace_csv(trace_path);
  const volterra::VolterraOp op(alpha, kernel);
  json summary = {{"method", method}, {"alpha", alpha}, {"samples", g.size()}};
  const TimeSignal f = as_stage("invert", [&] {
    if (method == "direct") return volterra::invert_direct(op, g);
    auto r = volterra::invert_neumann(op, g, tol);
    summary["terms"] = r.terms;
    summary["certified_bound"] = r.certified_bound;
    return r.solution;
  });
  summary["residual"] = volterra::residual(op, f, g);
  if (c.out.empty()) {
    std::cout << trace_csv(f);
  } else {
    write_trace_csv(c.out, f);
  }
  std::cerr << summary.dump() << "\n";
  return kExitOk;
}

int run_pipeline_cmd(const Common& c) {
  const Scenario s = load(c);
  if (c.out.empty()) throw InvalidArgument("--out is required");
  PipelineOptions po;
  po.workers = c.workers;
  po.progress = progress();
  try {
    const auto res = run_pipeline(s, po);
    write_run_directory(c.out, s, res);
    const auto& met = res.metrics;
    spdlog::info("usable {}/{}, v error max {:.3e}, speed error (interior) {}, source error {}", met.usable,
                 met.usable + met.unusable, met.v_error_max, met.speed_error_interior_max, met.source_error);
    spdlog::info("run directory {}", c.out);
    return kExitOk;
  } catch (const StageError& e) {
    if (e.partial()) write_run_directory(c.out, s, *e.partial());
    json failure = {{"stage", e.stage()}, {"error", e.what()}};
    write_json(fs::path(c.out) / "failure.json", failure);
    throw;
  }
}

int run_study(const Common& c, const std::string& axis_name, const std::string& levels_text) {
  const Scenario s = load(c);
  const StudyAxis axis = parse_axis(axis_name);
  const auto levels = parse_levels(levels_text);
  if (levels.size() < 3) throw InvalidArgument("--levels: need at least 3 levels");
  StudyOptions so;
  so.workers = c.workers;
  so.progress = progress();
  const auto res = as_stage("study", [&] { return convergence_study(s, axis, levels, so); });
  const std::string table = study_table(res);
  std::cout << table;
  if (std::isfinite(res.slope)) std::cout << "slope," << format_double(res.slope) << "\n";
  if (!c.out.empty()) {
    const fs::path dir = c.out;
    write_json(dir / "scenario.json", to_json(s));
    write_json(dir / "study.json", study_json(res));
    write_atomic(dir / "study.csv", table);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Droplet-probe inverse source toolkit"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", c.config, "Scenario file (JSON)");
    if (needs_config) opt->required();
    sub->add_option("--out", c.out, "Output file or directory");
    sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", c.seed, "Override the noise seed");
    sub->add_option("--log-level", c.log_level, "trace|debug|info|warn|error|off");
  };

  double radius = 1.0;
  int n_max = spectrum::kDefaultModeCount;
  auto* spec = app.add_subcommand("spectrum", "Eigensystem of the droplet's Newtonian operator (JSON lines)");
  add_common(spec, false);
  spec->add_option("--radius", radius, "Droplet radius")->check(CLI::PositiveNumber);
  spec->add_option("--nmax", n_max, "Number of modes")->check(CLI::PositiveNumber);

  auto* fwd = app.add_subcommand("forward", "Background wave at every sweep centre");
  add_common(fwd, true);

  std::string from;
  auto* syn = app.add_subcommand("synthesize", "Droplet kernels and measured traces at the probe");
  add_common(syn, true);
  syn->add_option("--from", from, "Directory written by 'forward' (skips the forward solve)");

  std::string kernel_path, trace_path, method = "direct";
  double alpha = 0.0, tol = volterra::kDefaultTolerance;
  auto* inv = app.add_subcommand("invert", "Solve (alpha I + K*) f = g for one trace");
  add_common(inv, false);
  inv->add_option("--kernel", kernel_path, "Kernel CSV (t,value)")->required();
  inv->add_option("--trace", trace_path, "Right-hand side CSV (t,value)")->required();
  inv->add_option("--alpha", alpha, "Identity coefficient")->required();
  inv->add_option("--method", method, "direct|neumann");
  inv->add_option("--tol", tol, "Neumann truncation tolerance");

  auto* pipe = app.add_subcommand("pipeline", "Full recovery chain with a run directory");
  add_common(pipe, true);

  std::string axis, levels;
  auto* study = app.add_subcommand("study", "Convergence study along one axis");
  add_common(study, true);
  study->add_option("--axis", axis, "a|h|dt|n_max|spacing")->required();
  study->add_option("--levels", levels, "Comma-separated levels (fractions like 1/24 allowed)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  auto logger = spdlog::stderr_color_mt("droplet-probe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S %^%l%$ %v");
  const auto level = spdlog::level::from_str(c.log_level);
  if (level == spdlog::level::off && c.log_level != "off") {
    std::cerr << "--log-level: unknown level '" << c.log_level << "'\n";
    return kExitInvalid;
  }
  spdlog::set_level(level);

  try {
    if (*spec) return run_spectrum(c, radius, n_max);
    if (*fwd) return run_forward(c);
    if (*syn) return run_synthesize(c, from);
    if (*inv) return run_invert(c, kernel_path, trace_path, alpha, method, tol);
    if (*pipe) return run_pipeline_cmd(c);
    if (*study) return run_study(c, axis, levels);
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  } catch (const StageFailure& e) {
    spdlog::error("stage failed: {}", e.what());
    return kExitStage;
  } catch (const ValidationError& e) {
    for (const auto& v : e.violations()) spdlog::error("invalid scenario: {}", v);
    return kExitInvalid;
  } catch (const InvalidArgument& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  }
  return kExitOk;
}
