#pragma once

// Run-directory persistence: atomic file writes, CSV traces, raw field dumps
// with JSON sidecars and the git-style content hash.

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "droplet/common.hpp"
#include "droplet/wavefield.hpp"

namespace droplet::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "field dumps assume a little-endian host");

/// Hex SHA-1 of the git blob object for `content` ("blob <size>\0" prefix),
/// so the value matches `git hash-object`.
inline std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size()) + '\0';
  blob.append(content);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) throw Error("SHA-1 digest failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

/// Writes to `<path>.tmp` and renames over `path`, so readers never see a
/// partially written file.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& path, const json& doc) { write_atomic(path, doc.dump(2) + "\n"); }

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trace_csv(const TimeSignal& s) {
  std::string out = "t,value\n";
  out.reserve(out.size() + s.size() * 44);
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_double(s.time(i));
    out += ',';
    out += format_double(s.samples[i]);
    out += '\n';
  }
  return out;
}

inline void write_trace_csv(const fs::path& path, const TimeSignal& s) { write_atomic(path, trace_csv(s)); }

/// Reads a two-column (t, value) CSV with a header line; the time column
/// must be uniformly spaced.
inline TimeSignal read_trace_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<double> t, v;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidArgument("trace csv: malformed line in " + path.string());
    t.push_back(std::stod(line.substr(0, comma)));
    v.push_back(std::stod(line.substr(comma + 1)));
  }
  if (t.size() < 2) throw InvalidArgument("trace csv: need at least two samples in " + path.string());
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs(t[i] - t[0] - dt * static_cast<double>(i)) > 1e-6 * dt) {
      throw InvalidArgument("trace csv: non-uniform time column in " + path.string());
    }
  }
  return {t.front(), dt, std::move(v)};
}

inline json grid_json(const Grid3& g) {
  return {{"origin", {g.origin.x, g.origin.y, g.origin.z}},
          {"spacing", g.spacing},
          {"dims", {g.dims[0], g.dims[1], g.dims[2]}}};
}

inline Grid3 grid_from_json(const json& j) {
  Grid3 g;
  const auto& o = j.at("origin");
  g.origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
  g.spacing = j.at("spacing").get<double>();
  const auto& d = j.at("dims");
  g.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
  return g;
}

struct FieldMeta {
  std::string kind;
  std::string units;
  std::string provenance;
  std::string scenario_hash;
};

/// `<stem>.bin` holds the values as little-endian float64 in node-major
/// order (time-major for space-time fields); `<stem>.json` describes them.
inline void write_field(const fs::path& dir, const std::string& stem, const Grid3& grid, std::span<const double> values,
                        const FieldMeta& meta, std::optional<json> time_axis = std::nullopt) {
  std::string bytes(values.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), values.data(), bytes.size());
  write_atomic(dir / (stem + ".bin"), bytes);
  json side = grid_json(grid);
  side["kind"] = meta.kind;
  side["units"] = meta.units;
  side["provenance"] = meta.provenance;
  side["scenario_hash"] = meta.scenario_hash;
  side["dtype"] = "float64-le";
  side["count"] = values.size();
  if (time_axis) side["time"] = *time_axis;
  write_json(dir / (stem + ".json"), side);
}

inline void write_space_time_field(const fs::path& dir, const std::string& stem, const wavefield::SpaceTimeField& f,
                                   const FieldMeta& meta) {
  write_field(dir, stem, f.grid, f.data, meta, json{{"t0", f.t0}, {"dt", f.dt}, {"nt", f.nt}});
}

struct LoadedField {
  Grid3 grid;
  json sidecar;
  std::vector<double> values;
};

inline LoadedField read_field(const fs::path& dir, const std::string& stem) {
  LoadedField f;
  f.sidecar = json::parse(read_file(dir / (stem + ".json")));
  f.grid = grid_from_json(f.sidecar);
  const std::string bytes = read_file(dir / (stem + ".bin"));
  if (bytes.size() % sizeof(double) != 0) throw InvalidArgument("field dump size is not a multiple of 8 bytes");
  f.values.resize(bytes.size() / sizeof(double));
  std::memcpy(f.values.data(), bytes.data(), bytes.size());
  return f;
}

}  // namespace droplet::harness
