// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "isac/rng.hpp"
#include "isac/scene.hpp"

namespace isac {

/// @brief ULA response. Entry J (1-based) is exp(j J 2pi (d/lambda) sin(angle)).
struct SteeringVector {
  Eigen::VectorXcd entries;
  double angle{0.0};
};

inline Eigen::VectorXcd steering(double angle, std::size_t n, double spacing_over_lambda) {
  Eigen::VectorXcd a(static_cast<Eigen::Index>(n));
  const double psi = kTwoPi * spacing_over_lambda * std::sin(angle);
  for (std::size_t j = 0; j < n; ++j) a[Eigen::Index(j)] = std::polar(1.0, double(j + 1) * psi);
  return a;
}

inline SteeringVector steering_vector(double angle, std::size_t n_elements, double element_spacing,
                                      double wavelength) {
  if (n_elements < 1) throw std::invalid_argument("steering_vector: n_elements must be >= 1");
  return {steering(angle, n_elements, element_spacing / wavelength), angle};
}

/// @brief Per-element transmit symbols. Row k is the stream of element k,
/// column n + N_c*m holds subcarrier n of OFDM symbol m.
struct TxSymbols {
  std::size_t n_subcarriers{0};
  std::size_t n_symbols{0};
  Eigen::MatrixXcd data;

  std::size_t n_streams() const { return std::size_t(data.rows()); }
  Eigen::Index column(std::size_t n, std::size_t m) const { return Eigen::Index(n + n_subcarriers * m); }
  cdouble at(std::size_t k, std::size_t n, std::size_t m) const { return data(Eigen::Index(k), column(n, m)); }
};

inline cdouble qpsk_symbol(unsigned two_bits) {
  const double h = 1.0 / std::sqrt(2.0);
  return {(two_bits & 1u) ? -h : h, (two_bits & 2u) ? -h : h};
}

inline TxSymbols generate_tx_symbols(const OfdmConfig& ofdm, std::size_t n_streams, TxStreams mode,
                                     std::uint64_t seed) {
  if (n_streams < 1) throw std::invalid_argument("generate_tx_symbols: n_streams must be >= 1");
  Rng rng(seed);
  TxSymbols tx;
  tx.n_subcarriers = ofdm.n_subcarriers;
  tx.n_symbols = ofdm.n_symbols;
  const auto cols = Eigen::Index(ofdm.n_subcarriers * ofdm.n_symbols);
  const auto rows = Eigen::Index(n_streams);
  tx.data.resize(rows, cols);
  std::uint64_t word = 0;
  int left = 0;
  auto next = [&]() {
    if (left == 0) {
      word = rng.bits();
      left = 32;
    }
    const unsigned b = unsigned(word & 3u);
    word >>= 2;
    --left;
    return qpsk_symbol(b);
  };
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (mode == TxStreams::common) {
      tx.data.col(c).setConstant(next());
    } else {
      for (Eigen::Index k = 0; k < rows; ++k) tx.data(k, c) = next();
    }
  }
  return tx;
}

// Single-stream convenience form.
inline TxSymbols generate_tx_symbols(const OfdmConfig& ofdm, std::uint64_t seed) {
  return generate_tx_symbols(ofdm, 1, TxStreams::independent, seed);
}

/// @brief Received symbols of one path: rows are PBS elements, column
/// n + N_c*m is subcarrier n of OFDM symbol m.
struct Cube {
  std::size_t n_rx{0};
  std::size_t n_subcarriers{0};
  std::size_t n_symbols{0};
  Eigen::MatrixXcd data;

  Cube() = default;
  Cube(std::size_t rx, std::size_t sc, std::size_t sym)
      : n_rx(rx), n_subcarriers(sc), n_symbols(sym), data(Eigen::MatrixXcd::Zero(Eigen::Index(rx), Eigen::Index(sc * sym))) {}

  Eigen::Index column(std::size_t n, std::size_t m) const { return Eigen::Index(n + n_subcarriers * m); }
  cdouble at(std::size_t j, std::size_t n, std::size_t m) const { return data(Eigen::Index(j), column(n, m)); }
  cdouble& at(std::size_t j, std::size_t n, std::size_t m) { return data(Eigen::Index(j), column(n, m)); }
  bool same_shape(const Cube& o) const {
    return n_rx == o.n_rx && n_subcarriers == o.n_subcarriers && n_symbols == o.n_symbols;
  }
};

inline Cube operator+(const Cube& a, const Cube& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("cube shape mismatch");
  Cube r = a;
  r.data += b.data;
  return r;
}

/// @brief Echo of one TBS at the PBS. The LoS and NLoS components are kept
/// apart (ideal path separation) and each carries its own noise draw.
struct EchoCube {
  std::size_t tbs_index{0};
  Cube los;
  Cube nlos;
  Cube los_noise;
  Cube nlos_noise;
  TxSymbols tx_symbols;
  double noise_variance{0.0};

  Cube nlos_observation() const { return nlos + nlos_noise; }
  Cube los_observation() const { return los + los_noise; }
  Cube combined() const { return los + nlos + nlos_noise; }
};

struct PathGains {
  cdouble nlos{1.0, 0.0};
  double los{1.0};
};

inline PathGains path_gains(const SceneConfig& scene, std::size_t tbs) {
  PathGains g;
  if (scene.channel.attenuation_mode == AttenuationMode::normalized) return g;
  const auto pp = derive_path_parameters(scene.geometry, tbs);
  const double lam = scene.ofdm.wavelength();
  const double k = std::pow(4.0 * kPi, 3.0);
  g.nlos = std::sqrt(lam * lam / (k * pp.r_i_ns * pp.r_i_ns * pp.r_p_ns * pp.r_p_ns)) * scene.channel.beta(tbs);
  g.los = std::sqrt(lam * lam / (k * std::pow(pp.r_i_s, 4.0)));
  return g;
}

namespace detail {

// One specular path: gain * exp(j2pi m T (f + cfo(m))) * exp(-j2pi n df (tau + to(m))) * a_rx * (a_tx^T x).
inline Cube synthesize_path(const SceneConfig& scene, std::size_t tbs, const TxSymbols& tx, cdouble gain,
                            double doppler, double delay, double aoa_local, double aod_local) {
  const auto& o = scene.ofdm;
  const std::size_t nr = scene.array.n_rx_pbs;
  const double dl = scene.array.spacing_over_lambda(o);
  const Eigen::VectorXcd ar = steering(aoa_local, nr, dl);
  const Eigen::VectorXcd at = steering(aod_local, tx.n_streams(), dl);
  // Transmit array factor per snapshot: a_tx^T x.
  const Eigen::RowVectorXcd s = at.transpose() * tx.data;
  const double T = o.symbol_duration();
  Cube c(nr, o.n_subcarriers, o.n_symbols);
  for (std::size_t m = 0; m < o.n_symbols; ++m) {
    const double fm = doppler + scene.offsets.cfo(tbs, m);
    const double tm = delay + scene.offsets.time_offset(tbs, m);
    for (std::size_t n = 0; n < o.n_subcarriers; ++n) {
      const double ph = kTwoPi * double(m) * T * fm - kTwoPi * double(n) * o.subcarrier_spacing * tm;
      const Eigen::Index col = c.column(n, m);
      c.data.col(col) = (gain * std::polar(1.0, ph) * s[col]) * ar;
    }
  }
  return c;
}

inline void add_noise(Cube& c, double variance, Rng& rng) {
  for (Eigen::Index col = 0; col < c.data.cols(); ++col)
    for (Eigen::Index j = 0; j < c.data.rows(); ++j) c.data(j, col) = rng.complex_normal(variance);
}

}  // namespace detail

inline double mean_power(const Cube& c) {
  return c.data.squaredNorm() / double(c.data.size());
}

/// @brief Synthesizes the LoS and NLoS echo of TBS `tbs`. Noise variance is
/// the mean per-element NLoS power divided by the linear SNR; the NLoS
/// noise is drawn first, then the LoS noise, both from `rng`.
inline EchoCube synthesize_tbs_echo(const SceneConfig& scene, std::size_t tbs, const TxSymbols& tx, Rng& rng) {
  if (tbs >= scene.n_tbs()) throw std::out_of_range("synthesize_tbs_echo: TBS index out of range");
  if (tx.n_subcarriers != scene.ofdm.n_subcarriers || tx.n_symbols != scene.ofdm.n_symbols ||
      tx.n_streams() != scene.array.n_tx_per_tbs)
    throw std::invalid_argument("synthesize_tbs_echo: tx symbol shape does not match the scene");
  const auto pp = derive_path_parameters(scene.geometry, tbs);
  const auto g = path_gains(scene, tbs);
  const double fd = bistatic_doppler(scene.geometry.target_speed, scene.geometry.target_heading, pp.aod_nlos,
                                     pp.aoa_nlos, scene.ofdm.carrier_freq);
  EchoCube e;
  e.tbs_index = tbs;
  e.tx_symbols = tx;
  e.nlos = detail::synthesize_path(scene, tbs, tx, g.nlos, fd, pp.tau_p_ns, pp.aoa_nlos_local, pp.aod_nlos_local);
  e.los = detail::synthesize_path(scene, tbs, tx, cdouble(g.los, 0.0), 0.0, pp.tau_i_s, pp.los_aoa_local,
                                  pp.los_aod_local);
  e.nlos_noise = Cube(e.nlos.n_rx, e.nlos.n_subcarriers, e.nlos.n_symbols);
  e.los_noise = e.nlos_noise;
  if (scene.noise.enabled) {
    e.noise_variance = mean_power(e.nlos) / std::pow(10.0, scene.noise.snr_db / 10.0);
    detail::add_noise(e.nlos_noise, e.noise_variance, rng);
    detail::add_noise(e.los_noise, e.noise_variance, rng);
  }
  return e;
}

/// @brief Seeds for TBS `tbs` under a scene seed: derive_seed(seed, tbs)
/// feeds derive_seed(., stream::tx_symbols) and derive_seed(., stream::nlos_noise).
inline std::uint64_t tbs_seed(std::uint64_t scene_seed, std::size_t tbs) { return derive_seed(scene_seed, tbs); }

inline EchoCube synthesize_tbs_echo(const SceneConfig& scene, std::size_t tbs, std::uint64_t scene_seed) {
  const std::uint64_t s = tbs_seed(scene_seed, tbs);
  const TxSymbols tx = generate_tx_symbols(scene.ofdm, scene.array.n_tx_per_tbs, scene.array.tx_streams,
                                           derive_seed(s, stream::tx_symbols));
  Rng rng(derive_seed(s, stream::nlos_noise));
  return synthesize_tbs_echo(scene, tbs, tx, rng);
}

inline std::vector<EchoCube> synthesize_scene(const SceneConfig& scene, std::uint64_t scene_seed) {
  scene.validate();
  std::vector<EchoCube> out;
  out.reserve(scene.n_tbs());
  for (std::size_t i = 0; i < scene.n_tbs(); ++i) out.push_back(synthesize_tbs_echo(scene, i, scene_seed));
  return out;
}

inline std::vector<EchoCube> synthesize_scene(const SceneConfig& scene) {
  return synthesize_scene(scene, scene.noise.rng_seed);
}

}  // namespace isac
