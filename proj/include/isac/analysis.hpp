// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "isac/angle_est.hpp"
#include "isac/scene.hpp"

namespace isac {

/// @brief Operation counts of the two-stage estimator and of exhaustive
/// 2-D MUSIC for one TBS.
struct ComplexityReport {
  std::size_t n_rx{0};
  std::size_t n_tx{0};
  std::uint64_t snapshots{0};

  std::uint64_t rough_ops{0};
  std::uint64_t covariance_ops{0};
  std::uint64_t evd_ops{0};
  std::uint64_t restricted_search_ops{0};
  std::uint64_t full_search_ops{0};
  std::uint64_t fine_ops{0};
  std::uint64_t proposed_total{0};
  std::uint64_t baseline_total{0};

  // Lattice cell counts of the restricted (eps) and full (gamma) grids.
  std::size_t eps_aoa{0};
  std::size_t eps_aod{0};
  std::size_t gamma_aoa{0};
  std::size_t gamma_aod{0};
  double gamma_aoa_nominal{0.0};  // pi / step
  double gamma_aod_nominal{0.0};
  double lattice_step_aoa{0.0};
  double lattice_step_aod{0.0};
  // Interval width over eps, the effective step of the restricted grid.
  double effective_step_aoa{0.0};
  double effective_step_aod{0.0};
  AngleInterval aoa_interval;
  AngleInterval aod_interval;

  double ratio() const { return double(baseline_total) / double(proposed_total); }
};

inline ComplexityReport complexity_report(std::size_t n_rx, std::size_t n_tx, std::uint64_t snapshots,
                                          double spacing_over_lambda, double step_aoa, double step_aod, int mu_aoa,
                                          int mu_aod) {
  if (!(step_aoa > 0.0) || !(step_aod > 0.0)) throw std::invalid_argument("complexity_report: steps must be > 0");
  if (n_rx < 1 || n_tx < 1) throw std::invalid_argument("complexity_report: antenna counts must be >= 1");
  ComplexityReport r;
  r.n_rx = n_rx;
  r.n_tx = n_tx;
  r.snapshots = snapshots;
  const AngleLattice la{step_aoa}, ld{step_aod};
  r.aoa_interval = search_interval(mu_aoa, n_rx, spacing_over_lambda);
  r.aod_interval = search_interval(mu_aod, n_tx, spacing_over_lambda);
  r.eps_aoa = la.within(r.aoa_interval).count;
  r.eps_aod = ld.within(r.aod_interval).count;
  r.gamma_aoa = la.size();
  r.gamma_aod = ld.size();
  r.gamma_aoa_nominal = kPi / step_aoa;
  r.gamma_aod_nominal = kPi / step_aod;
  r.lattice_step_aoa = step_aoa;
  r.lattice_step_aod = step_aod;
  r.effective_step_aoa = r.eps_aoa ? (r.aoa_interval.hi - r.aoa_interval.lo) / double(r.eps_aoa) : 0.0;
  r.effective_step_aod = r.eps_aod ? (r.aod_interval.hi - r.aod_interval.lo) / double(r.eps_aod) : 0.0;

  r.rough_ops = cost::rough(n_rx, n_tx);
  r.covariance_ops = snapshots * cost::covariance_per_snapshot(n_rx, n_tx);
  r.evd_ops = cost::evd(n_rx, n_tx);
  const std::uint64_t per = cost::per_spectrum_eval(n_rx, n_tx);
  r.restricted_search_ops = std::uint64_t(r.eps_aoa) * std::uint64_t(r.eps_aod) * per;
  r.full_search_ops = std::uint64_t(r.gamma_aoa) * std::uint64_t(r.gamma_aod) * per;
  r.fine_ops = r.covariance_ops + r.evd_ops + r.restricted_search_ops;
  r.proposed_total = r.rough_ops + r.fine_ops;
  r.baseline_total = r.covariance_ops + r.evd_ops + r.full_search_ops;
  return r;
}

inline ComplexityReport complexity_report(const ArrayConfig& array, const OfdmConfig& ofdm, double step_aoa,
                                          double step_aod, int mu_aoa, int mu_aod) {
  return complexity_report(array.n_rx_pbs, array.n_tx_per_tbs, std::uint64_t(ofdm.n_subcarriers * ofdm.n_symbols),
                           array.spacing_over_lambda(ofdm), step_aoa, step_aod, mu_aoa, mu_aod);
}

inline std::string format_report(const ComplexityReport& r) {
  std::ostringstream o;
  o << "antennas rx=" << r.n_rx << " tx=" << r.n_tx << " snapshots=" << r.snapshots << "\n"
    << "grid cells: restricted " << r.eps_aoa << " x " << r.eps_aod << ", full " << r.gamma_aoa << " x "
    << r.gamma_aod << " (pi/step = " << r.gamma_aoa_nominal << " x " << r.gamma_aod_nominal << ")\n"
    << "rough stage       " << r.rough_ops << "\n"
    << "covariance        " << r.covariance_ops << "\n"
    << "eigendecomposition " << r.evd_ops << "\n"
    << "restricted search " << r.restricted_search_ops << "\n"
    << "full search       " << r.full_search_ops << "\n"
    << "proposed total    " << r.proposed_total << "\n"
    << "full-grid total   " << r.baseline_total << "\n"
    << "ratio             " << r.ratio() << "\n";
  return o.str();
}

/// @brief Coherent gains of the fused position and velocity profiles over
/// one delay-Doppler element.
struct SnrGainReport {
  std::size_t n_tbs{0};
  double g_position{0.0};
  double g_velocity{0.0};
  std::optional<double> measured_g_position;
  std::optional<double> measured_g_velocity;
};

inline SnrGainReport snr_gain_report(const OfdmConfig& ofdm, std::size_t n_tbs,
                                     std::optional<double> measured_position = std::nullopt,
                                     std::optional<double> measured_velocity = std::nullopt) {
  if (n_tbs < 1) throw std::invalid_argument("snr_gain_report: at least one TBS required");
  SnrGainReport r;
  r.n_tbs = n_tbs;
  r.g_position = double(ofdm.n_subcarriers - 1) * double(n_tbs);
  r.g_velocity = double(ofdm.n_symbols - 1) * double(n_tbs);
  r.measured_g_position = measured_position;
  r.measured_g_velocity = measured_velocity;
  return r;
}

inline double to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace isac
