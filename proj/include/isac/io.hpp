// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

#include "isac/channel.hpp"
#include "isac/pipeline.hpp"
#include "isac/scene.hpp"

namespace isac {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw std::invalid_argument(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
  }
}

inline Point2 read_point(const json& j, const char* where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw std::invalid_argument(std::string(where) + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json point_json(Point2 p) { return json::array({p.x, p.y}); }

}  // namespace detail

/// @brief Scene from JSON. Absent keys keep the values of `base`; unknown
/// keys are rejected. The element spacing defaults to half a wavelength of
/// the (possibly overridden) carrier.
inline SceneConfig scene_from_json(const json& j, SceneConfig base) {
  using detail::read;
  detail::check_keys(j, "config", {"ofdm", "array", "geometry", "offsets", "noise", "channel", "estimation", "fusion"});
  SceneConfig s = std::move(base);
  const double old_half_lambda = s.ofdm.wavelength() / 2.0;
  const bool spacing_was_half = std::abs(s.array.element_spacing - old_half_lambda) <= 1e-12 * old_half_lambda;

  if (j.contains("ofdm")) {
    const json& o = j["ofdm"];
    detail::check_keys(o, "ofdm", {"n_subcarriers", "n_symbols", "carrier_freq_hz", "subcarrier_spacing_hz", "cp_duration_s"});
    read(o, "n_subcarriers", s.ofdm.n_subcarriers);
    read(o, "n_symbols", s.ofdm.n_symbols);
    read(o, "carrier_freq_hz", s.ofdm.carrier_freq);
    read(o, "subcarrier_spacing_hz", s.ofdm.subcarrier_spacing);
    read(o, "cp_duration_s", s.ofdm.cp_duration);
  }
  bool spacing_set = false;
  if (j.contains("array")) {
    const json& a = j["array"];
    detail::check_keys(a, "array", {"n_tx_per_tbs", "n_rx_pbs", "element_spacing_m", "tx_streams"});
    read(a, "n_tx_per_tbs", s.array.n_tx_per_tbs);
    read(a, "n_rx_pbs", s.array.n_rx_pbs);
    if (a.contains("element_spacing_m") && !a["element_spacing_m"].is_null()) {
      read(a, "element_spacing_m", s.array.element_spacing);
      spacing_set = true;
    }
    if (a.contains("tx_streams")) {
      const auto v = a["tx_streams"].get<std::string>();
      if (v == "independent") s.array.tx_streams = TxStreams::independent;
      else if (v == "common") s.array.tx_streams = TxStreams::common;
      else throw std::invalid_argument("array.tx_streams: expected independent|common");
    }
  }
  if (!spacing_set && (spacing_was_half || !(s.array.element_spacing > 0.0)))
    s.array.element_spacing = s.ofdm.wavelength() / 2.0;

  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    detail::check_keys(g, "geometry", {"pbs", "tbs", "target"});
    if (g.contains("pbs")) {
      const json& p = g["pbs"];
      detail::check_keys(p, "geometry.pbs", {"position", "broadside_rad"});
      if (p.contains("position")) s.geometry.pbs_position = detail::read_point(p["position"], "geometry.pbs.position");
      read(p, "broadside_rad", s.geometry.pbs_broadside);
    }
    if (g.contains("tbs")) {
      const json& list = g["tbs"];
      if (!list.is_array() || list.empty()) throw std::invalid_argument("geometry.tbs: expected a non-empty list");
      s.geometry.tbs_positions.clear();
      s.geometry.tbs_broadside.clear();
      for (const auto& t : list) {
        detail::check_keys(t, "geometry.tbs[]", {"position", "broadside_rad"});
        if (!t.contains("position") || !t.contains("broadside_rad"))
          throw std::invalid_argument("geometry.tbs[]: position and broadside_rad are required");
        s.geometry.tbs_positions.push_back(detail::read_point(t["position"], "geometry.tbs[].position"));
        s.geometry.tbs_broadside.push_back(t["broadside_rad"].get<double>());
      }
      if (s.offsets.per_tbs.size() != s.geometry.n_tbs()) {
        const TbsOffset fill = s.offsets.per_tbs.empty() ? TbsOffset{} : s.offsets.per_tbs.front();
        s.offsets.per_tbs.resize(s.geometry.n_tbs(), fill);
      }
    }
    if (g.contains("target")) {
      const json& t = g["target"];
      detail::check_keys(t, "geometry.target", {"position", "speed_mps", "heading_rad"});
      if (t.contains("position")) s.geometry.target_position = detail::read_point(t["position"], "geometry.target.position");
      read(t, "speed_mps", s.geometry.target_speed);
      read(t, "heading_rad", s.geometry.target_heading);
    }
  }

  if (j.contains("offsets")) {
    const json& o = j["offsets"];
    detail::check_keys(o, "offsets", {"mode", "time_offset_s", "cfo_frac", "per_tbs"});
    if (o.contains("mode")) {
      const auto v = o["mode"].get<std::string>();
      if (v == "constant") s.offsets.mode = OffsetMode::constant;
      else if (v == "linear_drift") s.offsets.mode = OffsetMode::linear_drift;
      else throw std::invalid_argument("offsets.mode: expected constant|linear_drift");
    }
    if (o.contains("time_offset_s") || o.contains("cfo_frac")) {
      if (o.contains("per_tbs")) throw std::invalid_argument("offsets: give either uniform values or per_tbs");
      double to = s.offsets.per_tbs.empty() ? 0.0 : s.offsets.per_tbs.front().time_offset;
      double cf = s.offsets.per_tbs.empty() ? 0.0 : s.offsets.per_tbs.front().cfo / s.ofdm.subcarrier_spacing;
      read(o, "time_offset_s", to);
      read(o, "cfo_frac", cf);
      set_uniform_offsets(s, to, cf);
    }
    if (o.contains("per_tbs")) {
      const json& list = o["per_tbs"];
      if (!list.is_array()) throw std::invalid_argument("offsets.per_tbs: expected a list");
      s.offsets.per_tbs.clear();
      for (const auto& t : list) {
        detail::check_keys(t, "offsets.per_tbs[]", {"time_offset_s", "cfo_hz", "time_offset_drift_s", "cfo_drift_hz"});
        TbsOffset x;
        read(t, "time_offset_s", x.time_offset);
        read(t, "cfo_hz", x.cfo);
        read(t, "time_offset_drift_s", x.time_offset_drift);
        read(t, "cfo_drift_hz", x.cfo_drift);
        s.offsets.per_tbs.push_back(x);
      }
    }
  }

  if (j.contains("noise")) {
    const json& n = j["noise"];
    detail::check_keys(n, "noise", {"snr_db", "seed", "enabled"});
    read(n, "snr_db", s.noise.snr_db);
    read(n, "seed", s.noise.rng_seed);
    read(n, "enabled", s.noise.enabled);
  }

  if (j.contains("channel")) {
    const json& c = j["channel"];
    detail::check_keys(c, "channel", {"attenuation_mode", "reflecting_factor"});
    if (c.contains("attenuation_mode")) {
      const auto v = c["attenuation_mode"].get<std::string>();
      if (v == "normalized") s.channel.attenuation_mode = AttenuationMode::normalized;
      else if (v == "physical") s.channel.attenuation_mode = AttenuationMode::physical;
      else throw std::invalid_argument("channel.attenuation_mode: expected normalized|physical");
    }
    if (c.contains("reflecting_factor")) {
      s.channel.reflecting_factor.clear();
      for (const auto& b : c["reflecting_factor"]) {
        const Point2 z = detail::read_point(b, "channel.reflecting_factor[]");
        s.channel.reflecting_factor.emplace_back(z.x, z.y);
      }
    }
  }
  s.validate();
  return s;
}

inline json scene_to_json(const SceneConfig& s) {
  json j;
  j["ofdm"] = {{"n_subcarriers", s.ofdm.n_subcarriers},
               {"n_symbols", s.ofdm.n_symbols},
               {"carrier_freq_hz", s.ofdm.carrier_freq},
               {"subcarrier_spacing_hz", s.ofdm.subcarrier_spacing},
               {"cp_duration_s", s.ofdm.cp_duration}};
  j["array"] = {{"n_tx_per_tbs", s.array.n_tx_per_tbs},
                {"n_rx_pbs", s.array.n_rx_pbs},
                {"element_spacing_m", s.array.element_spacing},
                {"tx_streams", s.array.tx_streams == TxStreams::independent ? "independent" : "common"}};
  json tbs = json::array();
  for (std::size_t i = 0; i < s.geometry.n_tbs(); ++i)
    tbs.push_back({{"position", detail::point_json(s.geometry.tbs_positions[i])},
                   {"broadside_rad", s.geometry.tbs_broadside[i]}});
  j["geometry"] = {{"pbs", {{"position", detail::point_json(s.geometry.pbs_position)},
                            {"broadside_rad", s.geometry.pbs_broadside}}},
                   {"tbs", tbs},
                   {"target", {{"position", detail::point_json(s.geometry.target_position)},
                               {"speed_mps", s.geometry.target_speed},
                               {"heading_rad", s.geometry.target_heading}}}};
  json off = json::array();
  for (const auto& o : s.offsets.per_tbs)
    off.push_back({{"time_offset_s", o.time_offset},
                   {"cfo_hz", o.cfo},
                   {"time_offset_drift_s", o.time_offset_drift},
                   {"cfo_drift_hz", o.cfo_drift}});
  j["offsets"] = {{"mode", s.offsets.mode == OffsetMode::constant ? "constant" : "linear_drift"}, {"per_tbs", off}};
  j["noise"] = {{"snr_db", s.noise.snr_db}, {"seed", s.noise.rng_seed}, {"enabled", s.noise.enabled}};
  json beta = json::array();
  for (const auto& b : s.channel.reflecting_factor) beta.push_back(json::array({b.real(), b.imag()}));
  j["channel"] = {{"attenuation_mode", s.channel.attenuation_mode == AttenuationMode::normalized ? "normalized" : "physical"},
                  {"reflecting_factor", beta}};
  return j;
}

/// @brief Processing settings from the "estimation" and "fusion" sections.
inline PipelineConfig pipeline_from_json(const json& j, PipelineConfig p = {}) {
  using detail::read;
  if (j.contains("estimation")) {
    const json& e = j["estimation"];
    detail::check_keys(e, "estimation",
                       {"aoa_step_rad", "aod_step_rad", "rho_scale", "snapshot_stride", "rough_source", "weighting"});
    read(e, "aoa_step_rad", p.angle.aoa_step);
    read(e, "aod_step_rad", p.angle.aod_step);
    read(e, "rho_scale", p.angle.covariance.rho_scale);
    read(e, "snapshot_stride", p.angle.covariance.snapshot_stride);
    if (e.contains("rough_source")) {
      const auto v = e["rough_source"].get<std::string>();
      if (v == "principal_eigenvector") p.angle.rough_source = RoughSource::principal_eigenvector;
      else if (v == "initial_snapshot") p.angle.rough_source = RoughSource::initial_snapshot;
      else throw std::invalid_argument("estimation.rough_source: expected principal_eigenvector|initial_snapshot");
    }
    if (e.contains("weighting")) {
      const auto v = e["weighting"].get<std::string>();
      if (v == "phase_only") p.weighting = SymbolWeighting::phase_only;
      else if (v == "matched") p.weighting = SymbolWeighting::matched;
      else throw std::invalid_argument("estimation.weighting: expected phase_only|matched");
    }
  }
  if (j.contains("fusion")) {
    const json& f = j["fusion"];
    detail::check_keys(f, "fusion", {"position", "velocity"});
    if (f.contains("position")) {
      const json& q = f["position"];
      detail::check_keys(q, "fusion.position",
                         {"center", "width_m", "step_m", "coarse_to_fine", "coarse_center", "coarse_width_m", "coarse_step_m"});
      if (q.contains("center")) p.position.scope.center = detail::read_point(q["center"], "fusion.position.center");
      read(q, "width_m", p.position.scope.width);
      read(q, "step_m", p.position.step);
      read(q, "coarse_to_fine", p.position.coarse_to_fine);
      if (q.contains("coarse_center"))
        p.position.coarse_scope.center = detail::read_point(q["coarse_center"], "fusion.position.coarse_center");
      read(q, "coarse_width_m", p.position.coarse_scope.width);
      read(q, "coarse_step_m", p.position.coarse_step);
    }
    if (f.contains("velocity")) {
      const json& v = f["velocity"];
      detail::check_keys(v, "fusion.velocity", {"speed_min_mps", "speed_max_mps", "speed_step_mps", "angle_step_rad"});
      read(v, "speed_min_mps", p.velocity.speed_min);
      read(v, "speed_max_mps", p.velocity.speed_max);
      read(v, "speed_step_mps", p.velocity.speed_step);
      read(v, "angle_step_rad", p.velocity.angle_step);
    }
  }
  if (!(p.angle.aoa_step > 0.0) || !(p.angle.aod_step > 0.0)) throw std::invalid_argument("estimation: steps must be > 0");
  if (!(p.position.step > 0.0) || !(p.position.coarse_step > 0.0)) throw std::invalid_argument("fusion.position: steps must be > 0");
  return p;
}

inline json pipeline_to_json(const PipelineConfig& p) {
  json j;
  j["estimation"] = {
      {"aoa_step_rad", p.angle.aoa_step},
      {"aod_step_rad", p.angle.aod_step},
      {"rho_scale", p.angle.covariance.rho_scale},
      {"snapshot_stride", p.angle.covariance.snapshot_stride},
      {"rough_source", p.angle.rough_source == RoughSource::principal_eigenvector ? "principal_eigenvector" : "initial_snapshot"},
      {"weighting", p.weighting == SymbolWeighting::phase_only ? "phase_only" : "matched"}};
  j["fusion"] = {{"position", {{"center", detail::point_json(p.position.scope.center)},
                               {"width_m", p.position.scope.width},
                               {"step_m", p.position.step},
                               {"coarse_to_fine", p.position.coarse_to_fine},
                               {"coarse_center", detail::point_json(p.position.coarse_scope.center)},
                               {"coarse_width_m", p.position.coarse_scope.width},
                               {"coarse_step_m", p.position.coarse_step}}},
                 {"velocity", {{"speed_min_mps", p.velocity.speed_min},
                               {"speed_max_mps", p.velocity.speed_max},
                               {"speed_step_mps", p.velocity.speed_step},
                               {"angle_step_rad", p.velocity.angle_step}}}};
  return j;
}

struct LoadedConfig {
  SceneConfig scene;
  PipelineConfig pipeline;
};

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

inline LoadedConfig load_config(const std::filesystem::path& path, const SceneConfig& base) {
  const json j = read_json_file(path);
  return {scene_from_json(j, base), pipeline_from_json(j)};
}

/// @brief 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// @brief Hash of the canonical (sorted-key) JSON form of the scene.
inline std::uint64_t scene_hash(const SceneConfig& s) { return fnv1a(scene_to_json(s).dump()); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Cube dump: text header lines ending in "end\n", then re/im float64 pairs,
// little-endian, rx index fastest, then subcarrier, then symbol.
inline void write_cube(const std::filesystem::path& path, const Cube& c, std::uint64_t hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "isac-cube 1\nshape " << c.n_rx << ' ' << c.n_subcarriers << ' ' << c.n_symbols << "\nscene_hash "
      << hex64(hash) << "\nend\n";
  auto put = [&](double v) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    char b[8];
    std::memcpy(b, &u, 8);
    out.write(b, 8);
  };
  const cdouble* p = c.data.data();
  for (Eigen::Index k = 0; k < c.data.size(); ++k) {
    put(p[k].real());
    put(p[k].imag());
  }
  out.close();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct CubeFile {
  Cube cube;
  std::uint64_t scene_hash{0};
};

inline CubeFile read_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line, tag;
  std::getline(in, line);
  if (line != "isac-cube 1") throw std::runtime_error(path.string() + ": not a cube dump");
  std::size_t nr = 0, nc = 0, ms = 0;
  std::uint64_t hash = 0;
  bool have_shape = false;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "shape") {
      ls >> nr >> nc >> ms;
      have_shape = bool(ls);
    } else if (tag == "scene_hash") {
      std::string h;
      ls >> h;
      hash = std::stoull(h, nullptr, 16);
    }
  }
  if (!have_shape || line != "end") throw std::runtime_error(path.string() + ": malformed header");
  CubeFile f{Cube(nr, nc, ms), hash};
  cdouble* p = f.cube.data.data();
  auto get = [&]() {
    char b[8];
    if (!in.read(b, 8)) throw std::runtime_error(path.string() + ": truncated data");
    std::uint64_t u;
    std::memcpy(&u, b, 8);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    return std::bit_cast<double>(u);
  };
  for (Eigen::Index k = 0; k < f.cube.data.size(); ++k) {
    const double re = get();
    p[k] = {re, get()};
  }
  return f;
}

}  // namespace isac
