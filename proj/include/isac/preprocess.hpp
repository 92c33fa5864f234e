// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>

#include "isac/channel.hpp"
#include "isac/scene.hpp"

namespace isac {

enum class MatrixKind { nlos, los, corrected };

/// @brief N_c x M_sym matrix; rows are subcarriers, columns OFDM symbols.
struct DelayDopplerMatrix {
  Eigen::MatrixXcd matrix;
  MatrixKind kind{MatrixKind::nlos};
  std::size_t tbs_index{0};
};

struct FeatureVectors {
  Eigen::VectorXcd range_fv;     // N_c - 1
  Eigen::VectorXcd velocity_fv;  // M_sym - 1
  std::size_t tbs_index{0};
};

// Transmit array factor a_t^T x per snapshot (1 x N_c*M_sym).
inline Eigen::RowVectorXcd tx_array_factor(const TxSymbols& tx, double aod_local, double spacing_over_lambda) {
  return steering(aod_local, tx.n_streams(), spacing_over_lambda).transpose() * tx.data;
}

/// @brief Real gain left on each element by the compensation: |a_t^T x|
/// times the antenna accumulation factor |sum_J e^{j J psi}| / N_Rx, where
/// psi is the receive phase mismatch between the true and assumed angle.
inline Eigen::MatrixXd compensation_gain(const TxSymbols& tx, double aod_local, double spacing_over_lambda,
                                         double aoa_true, double aoa_assumed, std::size_t n_rx) {
  const double psi = kTwoPi * spacing_over_lambda * (std::sin(aoa_true) - std::sin(aoa_assumed));
  cdouble acc{0.0, 0.0};
  for (std::size_t j = 1; j <= n_rx; ++j) acc += std::polar(1.0, double(j) * psi);
  const double rx = std::abs(acc) / double(n_rx);
  const Eigen::RowVectorXd s = tx_array_factor(tx, aod_local, spacing_over_lambda).cwiseAbs();
  return Eigen::Map<const Eigen::MatrixXd>(s.data(), Eigen::Index(tx.n_subcarriers), Eigen::Index(tx.n_symbols)) * rx;
}

enum class SymbolWeighting {
  phase_only,  // conj(s) / |s|
  matched,     // conj(s), kappa = |s|^2
};

namespace detail {

// Phase-only removal of a_r(aoa), a_t(aod)^T x and, optionally, a known delay.
inline Eigen::MatrixXcd compensate(const Cube& obs, const TxSymbols& tx, double aoa_local, double aod_local,
                                   double spacing_over_lambda, double known_delay, double subcarrier_spacing,
                                   SymbolWeighting weighting) {
  if (obs.n_subcarriers != tx.n_subcarriers || obs.n_symbols != tx.n_symbols)
    throw std::invalid_argument("compensate: cube and tx symbol shapes differ");
  const Eigen::VectorXcd ar = steering(aoa_local, obs.n_rx, spacing_over_lambda);
  const Eigen::RowVectorXcd acc = (ar.adjoint() * obs.data) / double(obs.n_rx);
  const Eigen::RowVectorXcd s = tx_array_factor(tx, aod_local, spacing_over_lambda);
  const auto nc = Eigen::Index(obs.n_subcarriers);
  const auto ms = Eigen::Index(obs.n_symbols);
  Eigen::MatrixXcd d(nc, ms);
  for (Eigen::Index m = 0; m < ms; ++m)
    for (Eigen::Index n = 0; n < nc; ++n) {
      const Eigen::Index c = n + nc * m;
      const double mag = std::abs(s[c]);
      cdouble w = std::conj(s[c]);
      if (weighting == SymbolWeighting::phase_only) w = mag > 1e-12 ? w / mag : cdouble{0.0, 0.0};
      d(n, m) = acc[c] * w;
    }
  if (known_delay != 0.0)
    for (Eigen::Index n = 0; n < nc; ++n) d.row(n) *= std::polar(1.0, kTwoPi * double(n) * subcarrier_spacing * known_delay);
  return d;
}

}  // namespace detail

inline DelayDopplerMatrix compensate_accumulate_nlos(const Cube& obs, const TxSymbols& tx, double aoa_local,
                                                     double aod_local, double spacing_over_lambda,
                                                     std::size_t tbs_index = 0,
                                                     SymbolWeighting weighting = SymbolWeighting::phase_only) {
  return {detail::compensate(obs, tx, aoa_local, aod_local, spacing_over_lambda, 0.0, 0.0, weighting), MatrixKind::nlos,
          tbs_index};
}

/// @brief LoS counterpart: the LoS angles and delay are known from the
/// BS layout and removed.
inline DelayDopplerMatrix compensate_accumulate_los(const Cube& obs, const TxSymbols& tx, const SceneConfig& scene,
                                                    std::size_t tbs_index,
                                                    SymbolWeighting weighting = SymbolWeighting::phase_only) {
  const auto pp = derive_path_parameters(scene.geometry, tbs_index);
  return {detail::compensate(obs, tx, pp.los_aoa_local, pp.los_aod_local, scene.array.spacing_over_lambda(scene.ofdm),
                             pp.tau_i_s, scene.ofdm.subcarrier_spacing, weighting),
          MatrixKind::los, tbs_index};
}

/// @brief Elementwise D_nlos * conj(D_los).
inline DelayDopplerMatrix nlcc(const DelayDopplerMatrix& nlos, const DelayDopplerMatrix& los) {
  if (nlos.matrix.rows() != los.matrix.rows() || nlos.matrix.cols() != los.matrix.cols())
    throw std::invalid_argument("nlcc: shape mismatch");
  if (nlos.tbs_index != los.tbs_index) throw std::invalid_argument("nlcc: matrices belong to different TBSs");
  return {nlos.matrix.cwiseProduct(los.matrix.conjugate()), MatrixKind::corrected, nlos.tbs_index};
}

/// @brief Row n' (n' >= 1) times conj(row 0), averaged over symbols.
inline Eigen::VectorXcd compress_range(const DelayDopplerMatrix& d) {
  const Eigen::Index nc = d.matrix.rows();
  const Eigen::Index ms = d.matrix.cols();
  if (nc < 2) throw std::invalid_argument("compress_range: need at least two subcarriers");
  const Eigen::RowVectorXcd ref = d.matrix.row(0).conjugate();
  Eigen::VectorXcd f(nc - 1);
  for (Eigen::Index n = 1; n < nc; ++n) f[n - 1] = d.matrix.row(n).cwiseProduct(ref).sum() / double(ms);
  return f;
}

/// @brief Column m' (m' >= 1) times conj(column 0), averaged over subcarriers.
inline Eigen::VectorXcd compress_velocity(const DelayDopplerMatrix& d) {
  const Eigen::Index nc = d.matrix.rows();
  const Eigen::Index ms = d.matrix.cols();
  if (ms < 2) throw std::invalid_argument("compress_velocity: need at least two symbols");
  const Eigen::VectorXcd ref = d.matrix.col(0).conjugate();
  Eigen::VectorXcd e(ms - 1);
  for (Eigen::Index m = 1; m < ms; ++m) e[m - 1] = d.matrix.col(m).cwiseProduct(ref).sum() / double(nc);
  return e;
}

inline FeatureVectors extract_features(const DelayDopplerMatrix& d) {
  return {compress_range(d), compress_velocity(d), d.tbs_index};
}

}  // namespace isac
