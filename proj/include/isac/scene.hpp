// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using cdouble = std::complex<double>;

struct Point2 {
  double x{0.0};
  double y{0.0};
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Direction of `to` seen from `from`, counterclockwise from +x.
inline double bearing(Point2 from, Point2 to) { return std::atan2(to.y - from.y, to.x - from.x); }

// Wraps to (-pi, pi].
inline double wrap_pi(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

// Wraps to [0, 2pi).
inline double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// @brief OFDM numerology. The symbol duration is derived, never stored.
struct OfdmConfig {
  std::size_t n_subcarriers{128};
  std::size_t n_symbols{64};
  double carrier_freq{24e9};
  double subcarrier_spacing{120e3};
  double cp_duration{1.33e-6};

  double symbol_duration() const { return 1.0 / subcarrier_spacing + cp_duration; }
  double wavelength() const { return kSpeedOfLight / carrier_freq; }

  void validate() const {
    if (n_subcarriers < 2) throw std::invalid_argument("ofdm: n_subcarriers must be >= 2");
    if (n_symbols < 2) throw std::invalid_argument("ofdm: n_symbols must be >= 2");
    if (!(subcarrier_spacing > 0.0) || !std::isfinite(subcarrier_spacing))
      throw std::invalid_argument("ofdm: subcarrier_spacing must be > 0");
    if (!(carrier_freq > 0.0) || !std::isfinite(carrier_freq))
      throw std::invalid_argument("ofdm: carrier_freq must be > 0");
    if (!(cp_duration >= 0.0) || !std::isfinite(cp_duration))
      throw std::invalid_argument("ofdm: cp_duration must be >= 0");
  }
};

enum class TxStreams {
  independent,  // one QPSK stream per transmit element
  common,       // the same symbol on every element
};

struct ArrayConfig {
  std::size_t n_tx_per_tbs{16};
  std::size_t n_rx_pbs{16};
  double element_spacing{0.0};  // meters
  TxStreams tx_streams{TxStreams::independent};

  double spacing_over_lambda(const OfdmConfig& ofdm) const { return element_spacing / ofdm.wavelength(); }

  void validate() const {
    if (n_tx_per_tbs < 1 || n_rx_pbs < 1) throw std::invalid_argument("array: antenna counts must be >= 1");
    if (!(element_spacing > 0.0) || !std::isfinite(element_spacing))
      throw std::invalid_argument("array: element_spacing must be > 0");
  }
};

/// @brief Scene layout. Each BS carries the broadside direction of its ULA
/// in the global frame; steering phases use sin(angle - broadside).
struct Geometry {
  std::vector<Point2> tbs_positions;
  std::vector<double> tbs_broadside;
  Point2 pbs_position;
  double pbs_broadside{0.0};
  Point2 target_position;
  double target_speed{0.0};
  double target_heading{0.0};

  std::size_t n_tbs() const { return tbs_positions.size(); }

  void validate() const {
    if (tbs_positions.empty()) throw std::invalid_argument("geometry: at least one TBS required");
    if (tbs_broadside.size() != tbs_positions.size())
      throw std::invalid_argument("geometry: one broadside per TBS required");
    auto finite = [](Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); };
    if (!finite(pbs_position) || !finite(target_position))
      throw std::invalid_argument("geometry: non-finite position");
    if (distance(target_position, pbs_position) == 0.0)
      throw std::invalid_argument("geometry: target coincides with the PBS");
    for (std::size_t i = 0; i < tbs_positions.size(); ++i) {
      if (!finite(tbs_positions[i])) throw std::invalid_argument("geometry: non-finite TBS position");
      if (distance(tbs_positions[i], pbs_position) == 0.0)
        throw std::invalid_argument("geometry: TBS " + std::to_string(i) + " coincides with the PBS");
      if (distance(tbs_positions[i], target_position) == 0.0)
        throw std::invalid_argument("geometry: target coincides with TBS " + std::to_string(i));
    }
    if (!(target_speed >= 0.0) || !std::isfinite(target_speed))
      throw std::invalid_argument("geometry: target_speed must be finite and >= 0");
    if (!(target_heading >= 0.0 && target_heading < kTwoPi))
      throw std::invalid_argument("geometry: target_heading must lie in [0, 2pi)");
  }
};

enum class OffsetMode { constant, linear_drift };

/// @brief TO/CFO of one TBS relative to the PBS clock. In drift mode the
/// offsets grow linearly with the OFDM symbol index.
struct TbsOffset {
  double time_offset{0.0};        // s
  double cfo{0.0};                // Hz
  double time_offset_drift{0.0};  // s per symbol
  double cfo_drift{0.0};          // Hz per symbol
};

struct SyncOffsets {
  OffsetMode mode{OffsetMode::constant};
  std::vector<TbsOffset> per_tbs;

  double time_offset(std::size_t tbs, std::size_t m) const {
    const auto& o = per_tbs.at(tbs);
    return mode == OffsetMode::constant ? o.time_offset : o.time_offset + o.time_offset_drift * double(m);
  }
  double cfo(std::size_t tbs, std::size_t m) const {
    const auto& o = per_tbs.at(tbs);
    return mode == OffsetMode::constant ? o.cfo : o.cfo + o.cfo_drift * double(m);
  }

  void validate(std::size_t n_tbs) const {
    if (per_tbs.size() != n_tbs) throw std::invalid_argument("offsets: one entry per TBS required");
    for (const auto& o : per_tbs)
      if (!std::isfinite(o.time_offset) || !std::isfinite(o.cfo) || !std::isfinite(o.time_offset_drift) ||
          !std::isfinite(o.cfo_drift))
        throw std::invalid_argument("offsets: non-finite value");
  }
};

struct NoiseConfig {
  double snr_db{-5.0};
  std::uint64_t rng_seed{1};
  bool enabled{true};

  void validate() const {
    if (enabled && !std::isfinite(snr_db)) throw std::invalid_argument("noise: snr_db must be finite");
  }
};

enum class AttenuationMode { normalized, physical };

struct ChannelParams {
  AttenuationMode attenuation_mode{AttenuationMode::normalized};
  std::vector<cdouble> reflecting_factor;  // per TBS, empty means 1

  cdouble beta(std::size_t tbs) const {
    if (attenuation_mode == AttenuationMode::normalized || reflecting_factor.empty()) return {1.0, 0.0};
    return reflecting_factor.at(tbs);
  }
};

struct SceneConfig {
  OfdmConfig ofdm;
  ArrayConfig array;
  Geometry geometry;
  SyncOffsets offsets;
  NoiseConfig noise;
  ChannelParams channel;

  std::size_t n_tbs() const { return geometry.n_tbs(); }

  void validate() const {
    ofdm.validate();
    array.validate();
    geometry.validate();
    offsets.validate(geometry.n_tbs());
    noise.validate();
    if (!channel.reflecting_factor.empty() && channel.reflecting_factor.size() != geometry.n_tbs())
      throw std::invalid_argument("channel: one reflecting factor per TBS required");
  }
};

/// @brief Keeps the first `count` TBSs of a scene.
inline SceneConfig with_tbs_count(SceneConfig s, std::size_t count) {
  if (count < 1 || count > s.n_tbs()) throw std::invalid_argument("tbs count out of range");
  s.geometry.tbs_positions.resize(count);
  s.geometry.tbs_broadside.resize(count);
  s.offsets.per_tbs.resize(count);
  if (!s.channel.reflecting_factor.empty()) s.channel.reflecting_factor.resize(count);
  return s;
}

/// @brief Sets the same TO and CFO (CFO as a fraction of the subcarrier
/// spacing) on every TBS, keeping drift rates.
inline void set_uniform_offsets(SceneConfig& s, double time_offset, double cfo_frac) {
  s.offsets.per_tbs.resize(s.n_tbs());
  for (auto& o : s.offsets.per_tbs) {
    o.time_offset = time_offset;
    o.cfo = cfo_frac * s.ofdm.subcarrier_spacing;
  }
}

/// @brief Four-TBS reference scene at full size (512 subcarriers,
/// 256 symbols, 64 elements per array).
inline SceneConfig full_scene() {
  SceneConfig s;
  s.ofdm = OfdmConfig{512, 256, 24e9, 120e3, 1.33e-6};
  s.array.n_tx_per_tbs = 64;
  s.array.n_rx_pbs = 64;
  s.array.element_spacing = s.ofdm.wavelength() / 2.0;
  s.geometry.tbs_positions = {{40, 0}, {0, 40}, {0, 80}, {80, 0}};
  s.geometry.tbs_broadside = {1.4, 0.15, -0.65, 2.2};
  s.geometry.pbs_position = {80, 80};
  s.geometry.pbs_broadside = 4.0;
  s.geometry.target_position = {40, 40};
  s.geometry.target_speed = 27.0;
  s.geometry.target_heading = 0.785;
  s.offsets.mode = OffsetMode::constant;
  s.offsets.per_tbs.assign(4, TbsOffset{30e-9, 0.03 * 120e3, 0.0, 0.0});
  s.noise = NoiseConfig{-5.0, 1, true};
  return s;
}

/// @brief The reference scene shrunk to 128 subcarriers, 64 symbols and
/// 16-element arrays.
inline SceneConfig desk_scene() {
  SceneConfig s = full_scene();
  s.ofdm.n_subcarriers = 128;
  s.ofdm.n_symbols = 64;
  s.array.n_tx_per_tbs = 16;
  s.array.n_rx_pbs = 16;
  return s;
}

/// @brief Bistatic geometry of one TBS. Global angles follow the scene
/// frame; the *_local angles are relative to the respective ULA broadside.
struct PathParameters {
  double r_i_ns{0};  // TBS -> target
  double r_p_ns{0};  // target -> PBS
  double r_i_s{0};   // TBS -> PBS
  double tau_p_ns{0};
  double tau_i_s{0};
  double aod_nlos{0};  // TBS -> target
  double aoa_nlos{0};  // PBS -> target
  double los_aod{0};   // TBS -> PBS
  double los_aoa{0};   // PBS -> TBS
  double aod_nlos_local{0};
  double aoa_nlos_local{0};
  double los_aod_local{0};
  double los_aoa_local{0};
};

inline PathParameters derive_path_parameters(const Geometry& g, std::size_t tbs) {
  if (tbs >= g.n_tbs()) throw std::out_of_range("derive_path_parameters: TBS index out of range");
  const Point2 t = g.tbs_positions[tbs];
  const Point2 p = g.pbs_position;
  const Point2 x = g.target_position;
  PathParameters pp;
  pp.r_i_ns = distance(t, x);
  pp.r_p_ns = distance(x, p);
  pp.r_i_s = distance(t, p);
  if (!(pp.r_i_ns > 0.0) || !(pp.r_p_ns > 0.0) || !(pp.r_i_s > 0.0))
    throw std::invalid_argument("derive_path_parameters: zero-length path");
  pp.tau_p_ns = (pp.r_i_ns + pp.r_p_ns) / kSpeedOfLight;
  pp.tau_i_s = pp.r_i_s / kSpeedOfLight;
  pp.aod_nlos = bearing(t, x);
  pp.aoa_nlos = bearing(p, x);
  pp.los_aod = bearing(t, p);
  pp.los_aoa = bearing(p, t);
  const double bt = g.tbs_broadside.empty() ? 0.0 : g.tbs_broadside.at(tbs);
  pp.aod_nlos_local = wrap_pi(pp.aod_nlos - bt);
  pp.aoa_nlos_local = wrap_pi(pp.aoa_nlos - g.pbs_broadside);
  pp.los_aod_local = wrap_pi(pp.los_aod - bt);
  pp.los_aoa_local = wrap_pi(pp.los_aoa - g.pbs_broadside);
  return pp;
}

enum class DopplerModel { approximate, exact };

/// @brief Second-order velocity term that the exact Doppler mode adds.
inline double doppler_quadratic_term(double speed, double heading, double aod, double aoa, double carrier_freq) {
  return speed * speed * carrier_freq * std::cos(heading - aoa) * std::cos(heading - aod) /
         (kSpeedOfLight * kSpeedOfLight);
}


/// @brief Bistatic Doppler of the TBS -> target -> PBS path for global
/// angles aod (TBS to target) and aoa (PBS to target).
inline double bistatic_doppler(double speed, double heading, double aod, double aoa, double carrier_freq,
                               DopplerModel model = DopplerModel::approximate) {
  if (!(speed >= 0.0) || !std::isfinite(speed)) throw std::invalid_argument("bistatic_doppler: speed must be >= 0");
  if (!(carrier_freq > 0.0)) throw std::invalid_argument("bistatic_doppler: carrier_freq must be > 0");
  const double ca = std::cos(heading - aoa);
  const double cd = std::cos(heading - aod);
  double f = -(speed * carrier_freq / kSpeedOfLight) * (ca + cd);
  if (model == DopplerModel::exact) f += doppler_quadratic_term(speed, heading, aod, aoa, carrier_freq);
  return f;
}

inline double bistatic_doppler(const Geometry& g, std::size_t tbs, double carrier_freq,
                               DopplerModel model = DopplerModel::approximate) {
  const auto pp = derive_path_parameters(g, tbs);
  return bistatic_doppler(g.target_speed, g.target_heading, pp.aod_nlos, pp.aoa_nlos, carrier_freq, model);
}

}  // namespace isac
