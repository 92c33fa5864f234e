// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "isac/channel.hpp"
#include "isac/scene.hpp"

namespace isac {

/// @brief Abstract complex multiply-accumulate counts per processing step.
/// Each step adds its unit cost every time the work is actually done.
struct OpCounts {
  std::uint64_t rough{0};
  std::uint64_t covariance{0};
  std::uint64_t evd{0};
  std::uint64_t search{0};
  std::uint64_t total() const { return rough + covariance + evd + search; }
  OpCounts& operator+=(const OpCounts& o) {
    rough += o.rough;
    covariance += o.covariance;
    evd += o.evd;
    search += o.search;
    return *this;
  }
};

namespace cost {
inline std::uint64_t rough(std::uint64_t nr, std::uint64_t nt) { return nr * nt * (nr * nr + nt * nt); }
inline std::uint64_t covariance_per_snapshot(std::uint64_t nr, std::uint64_t nt) { return (nr * nt) * (nr * nt); }
inline std::uint64_t evd(std::uint64_t nr, std::uint64_t nt) { return (nr * nt) * (nr * nt) * (nr * nt); }
inline std::uint64_t per_spectrum_eval(std::uint64_t nr, std::uint64_t nt) { return (nr * nt + 1) * (nr * nt - 1); }
}  // namespace cost

struct AllAntennaMatrix {
  Eigen::MatrixXcd matrix;  // N_Rx x N_Tx
  std::size_t symbol_index{0};
  std::size_t subcarrier_index{0};
  double regularization{0.0};
};

/// @brief Y = y x^H (x x^H + rho I)^-1, via the rank-one identity
/// x^H (x x^H + rho I)^-1 = x^H / (|x|^2 + rho).
inline AllAntennaMatrix all_antenna_matrix(const Eigen::VectorXcd& y, const Eigen::VectorXcd& x, double rho,
                                           std::size_t m = 0, std::size_t n = 0) {
  if (!(rho >= 0.0)) throw std::invalid_argument("all_antenna_matrix: rho must be >= 0");
  const double xx = x.squaredNorm();
  if (!(xx > 0.0)) throw std::invalid_argument("all_antenna_matrix: tx vector is zero");
  if (xx + rho == 0.0 || !std::isfinite(xx + rho)) throw std::invalid_argument("all_antenna_matrix: singular");
  AllAntennaMatrix a;
  a.matrix = y * x.adjoint() / (xx + rho);
  a.symbol_index = m;
  a.subcarrier_index = n;
  a.regularization = rho;
  return a;
}

struct AngleInterval {
  double lo{0.0};
  double hi{0.0};
  bool clamped{false};
  bool contains(double a) const { return a >= lo && a <= hi; }
};

// Maps DFT bin k of an N-point transform to a signed index in [-N/2, N/2).
inline int signed_bin(std::size_t k, std::size_t n) {
  const auto ki = static_cast<long>(k);
  const auto ni = static_cast<long>(n);
  return static_cast<int>(2 * ki >= ni ? ki - ni : ki);
}

// sin(angle) = lambda mu / (d N); throws when the bin is outside the visible region.
inline double bin_to_angle(double mu, std::size_t n, double spacing_over_lambda) {
  const double s = mu / (spacing_over_lambda * double(n));
  if (s < -1.0 || s > 1.0)
    throw std::domain_error("rough_estimate: arcsin argument " + std::to_string(s) + " outside [-1, 1] (aliasing)");
  return std::asin(s);
}

inline double rough_resolution(std::size_t n, double spacing_over_lambda) {
  return std::asin(std::min(1.0, 1.0 / (spacing_over_lambda * double(n))));
}

// [asin(lambda (mu - 1) / (d N)), asin(lambda (mu + 1) / (d N))], clamped to [-1, 1].
inline AngleInterval search_interval(int mu, std::size_t n, double spacing_over_lambda) {
  double lo = double(mu - 1) / (spacing_over_lambda * double(n));
  double hi = double(mu + 1) / (spacing_over_lambda * double(n));
  AngleInterval iv;
  if (lo < -1.0) lo = -1.0, iv.clamped = true;
  if (hi > 1.0) hi = 1.0, iv.clamped = true;
  iv.lo = std::asin(lo);
  iv.hi = std::asin(hi);
  return iv;
}

inline Eigen::MatrixXcd dft_matrix(std::size_t n) {
  Eigen::MatrixXcd f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      f(Eigen::Index(k), Eigen::Index(j)) = std::polar(1.0, -kTwoPi * double((k * (j + 1)) % n) / double(n));
  return f;
}

struct RoughEstimate {
  int mu_aoa{0};
  int mu_aod{0};
  double aoa{0.0};
  double aod{0.0};
  AngleInterval aoa_interval;
  AngleInterval aod_interval;
  Eigen::MatrixXd magnitude;  // |F_R Y F_T|, unshifted bins
};

/// @brief Peak of the 2-D DFT magnitude of an N_Rx x N_Tx all-antenna
/// matrix. The DFT kernel includes the 1-based element phase so an
/// on-bin steering vector maps to exactly one bin.
inline RoughEstimate rough_estimate(const Eigen::MatrixXcd& y, double spacing_over_lambda,
                                    OpCounts* ops = nullptr) {
  if (y.size() == 0 || y.cwiseAbs().maxCoeff() == 0.0) throw std::invalid_argument("rough_estimate: zero matrix");
  const auto nr = std::size_t(y.rows());
  const auto nt = std::size_t(y.cols());
  const Eigen::MatrixXcd prof = dft_matrix(nr) * y * dft_matrix(nt).transpose();
  if (ops) ops->rough += cost::rough(nr, nt);
  RoughEstimate r;
  r.magnitude = prof.cwiseAbs();
  Eigen::Index bi = 0, bj = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < r.magnitude.rows(); ++i)
    for (Eigen::Index j = 0; j < r.magnitude.cols(); ++j)
      if (r.magnitude(i, j) > best) {
        best = r.magnitude(i, j);
        bi = i;
        bj = j;
      }
  r.mu_aoa = signed_bin(std::size_t(bi), nr);
  r.mu_aod = signed_bin(std::size_t(bj), nt);
  r.aoa = bin_to_angle(r.mu_aoa, nr, spacing_over_lambda);
  r.aod = bin_to_angle(r.mu_aod, nt, spacing_over_lambda);
  r.aoa_interval = search_interval(r.mu_aoa, nr, spacing_over_lambda);
  r.aod_interval = search_interval(r.mu_aod, nt, spacing_over_lambda);
  return r;
}

/// @brief Search lattice shared by every grid: angle_k = -pi/2 + k * step.
/// Restricted grids are index ranges of it, so cells compare across grids.
struct AngleLattice {
  double step{0.01};

  std::size_t size() const { return std::size_t(std::floor(kPi / step + 1e-9)) + 1; }
  double angle(std::size_t k) const { return -kPi / 2.0 + double(k) * step; }

  struct Range {
    std::size_t first{0};
    std::size_t count{0};
  };
  Range full() const { return {0, size()}; }
  Range within(const AngleInterval& iv) const {
    const double a = std::ceil((iv.lo + kPi / 2.0) / step - 1e-9);
    const double b = std::floor((iv.hi + kPi / 2.0) / step + 1e-9);
    const double lo = std::max(a, 0.0);
    const double hi = std::min(b, double(size() - 1));
    if (hi < lo) return {std::size_t(std::max(lo, 0.0)), 0};
    return {std::size_t(lo), std::size_t(hi - lo) + 1};
  }
};

struct SubspaceDecomposition {
  Eigen::MatrixXcd noise_subspace;  // NM x (NM - K)
  Eigen::VectorXcd principal;       // dominant eigenvector
  Eigen::VectorXd eigenvalues;      // ascending
  std::size_t n_rx{0};
  std::size_t n_tx{0};
};

struct CovarianceOptions {
  double rho_scale{1e-3};        // rho = rho_scale * |x|^2
  std::size_t snapshot_stride{1};  // 1 = every snapshot
};

/// @brief Sample covariance of the vectorized all-antenna matrices over all
/// snapshots. Element J*N_Tx + k of a snapshot is Y(J, k), matching the
/// a_r (x) a_t ordering used by the spectrum.
inline Eigen::MatrixXcd snapshot_covariance(const Cube& obs, const TxSymbols& tx, const CovarianceOptions& opt = {},
                                            OpCounts* ops = nullptr) {
  if (obs.n_subcarriers != tx.n_subcarriers || obs.n_symbols != tx.n_symbols)
    throw std::invalid_argument("snapshot_covariance: cube and tx symbol shapes differ");
  if (opt.snapshot_stride < 1) throw std::invalid_argument("snapshot_covariance: stride must be >= 1");
  const auto nr = Eigen::Index(obs.n_rx);
  const auto nt = Eigen::Index(tx.n_streams());
  const Eigen::Index dim = nr * nt;
  const Eigen::Index total = obs.data.cols();
  const Eigen::Index block = 256;
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::MatrixXcd v(dim, block);
  Eigen::Index used = 0, fill = 0;
  auto flush = [&]() {
    if (fill == 0) return;
    r.selfadjointView<Eigen::Lower>().rankUpdate(v.leftCols(fill));
    fill = 0;
  };
  for (Eigen::Index c = 0; c < total; c += Eigen::Index(opt.snapshot_stride)) {
    const auto x = tx.data.col(c);
    const double xx = x.squaredNorm();
    const double scale = 1.0 / (xx + opt.rho_scale * xx);
    for (Eigen::Index j = 0; j < nr; ++j) {
      const cdouble yj = obs.data(j, c) * scale;
      for (Eigen::Index k = 0; k < nt; ++k) v(j * nt + k, fill) = yj * std::conj(x[k]);
    }
    ++fill;
    ++used;
    if (fill == block) flush();
  }
  flush();
  if (used == 0) throw std::invalid_argument("snapshot_covariance: no snapshots");
  if (ops) ops->covariance += std::uint64_t(used) * cost::covariance_per_snapshot(std::uint64_t(nr), std::uint64_t(nt));
  Eigen::MatrixXcd full = r.selfadjointView<Eigen::Lower>();
  return full / double(used);
}

inline SubspaceDecomposition decompose(const Eigen::MatrixXcd& r, std::size_t n_rx, std::size_t n_tx,
                                       std::size_t n_sources = 1, OpCounts* ops = nullptr) {
  const auto dim = Eigen::Index(n_rx * n_tx);
  if (r.rows() != dim || r.cols() != dim) throw std::invalid_argument("decompose: covariance size mismatch");
  if (n_sources < 1 || Eigen::Index(n_sources) >= dim) throw std::invalid_argument("decompose: bad source count");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
  if (es.info() != Eigen::Success) throw std::runtime_error("decompose: eigenvalue decomposition failed");
  if (ops) ops->evd += cost::evd(n_rx, n_tx);
  SubspaceDecomposition d;
  d.eigenvalues = es.eigenvalues();
  d.noise_subspace = es.eigenvectors().leftCols(dim - Eigen::Index(n_sources));
  d.principal = es.eigenvectors().col(dim - 1);
  d.n_rx = n_rx;
  d.n_tx = n_tx;
  return d;
}

/// @brief 1 / |E_n^H (a_r(phi) (x) a_t(theta))|^2.
inline double music_spectrum(const SubspaceDecomposition& d, double spacing_over_lambda, double aoa, double aod) {
  const Eigen::VectorXcd ar = steering(aoa, d.n_rx, spacing_over_lambda);
  const Eigen::VectorXcd at = steering(aod, d.n_tx, spacing_over_lambda);
  Eigen::VectorXcd s(Eigen::Index(d.n_rx * d.n_tx));
  for (Eigen::Index j = 0; j < ar.size(); ++j) s.segment(j * at.size(), at.size()) = ar[j] * at;
  return 1.0 / (d.noise_subspace.adjoint() * s).squaredNorm();
}

struct SpectrumSearch {
  AngleLattice::Range aoa_range;
  AngleLattice::Range aod_range;
  std::size_t aoa_index{0};  // lattice index
  std::size_t aod_index{0};
  double aoa{0.0};
  double aod{0.0};
  double peak{0.0};
  std::uint64_t evaluations{0};
  Eigen::MatrixXd surface;  // rows AoA, cols AoD; empty unless requested
};

/// @brief Evaluates the spectrum on the lattice cells of the two ranges,
/// one AoA row at a time. Ties go to the lowest row-major index.
inline SpectrumSearch search_spectrum(const SubspaceDecomposition& d, double spacing_over_lambda,
                                      const AngleLattice& lat_aoa, AngleLattice::Range ra,
                                      const AngleLattice& lat_aod, AngleLattice::Range rd, bool keep_surface = false,
                                      OpCounts* ops = nullptr) {
  if (ra.count == 0 || rd.count == 0) throw std::invalid_argument("search_spectrum: empty grid");
  const auto nt = Eigen::Index(d.n_tx);
  const auto dim = Eigen::Index(d.n_rx * d.n_tx);
  const auto nd = Eigen::Index(rd.count);
  const Eigen::MatrixXcd enh = d.noise_subspace.adjoint();
  Eigen::MatrixXcd at(nt, nd);
  for (Eigen::Index c = 0; c < nd; ++c) at.col(c) = steering(lat_aod.angle(rd.first + std::size_t(c)), d.n_tx, spacing_over_lambda);
  SpectrumSearch out;
  out.aoa_range = ra;
  out.aod_range = rd;
  if (keep_surface) out.surface.resize(Eigen::Index(ra.count), nd);
  Eigen::MatrixXcd s(dim, nd);
  Eigen::MatrixXcd proj(enh.rows(), nd);
  double best = -1.0;
  for (std::size_t i = 0; i < ra.count; ++i) {
    const Eigen::VectorXcd ar = steering(lat_aoa.angle(ra.first + i), d.n_rx, spacing_over_lambda);
    for (Eigen::Index j = 0; j < ar.size(); ++j) s.middleRows(j * nt, nt) = ar[j] * at;
    proj.noalias() = enh * s;
    for (Eigen::Index c = 0; c < nd; ++c) {
      const double v = 1.0 / proj.col(c).squaredNorm();
      if (keep_surface) out.surface(Eigen::Index(i), c) = v;
      if (v > best) {
        best = v;
        out.aoa_index = ra.first + i;
        out.aod_index = rd.first + std::size_t(c);
      }
    }
  }
  out.evaluations = std::uint64_t(ra.count) * std::uint64_t(rd.count);
  if (ops) ops->search += out.evaluations * cost::per_spectrum_eval(d.n_rx, d.n_tx);
  out.peak = best;
  out.aoa = lat_aoa.angle(out.aoa_index);
  out.aod = lat_aod.angle(out.aod_index);
  return out;
}

enum class RoughSource {
  principal_eigenvector,  // rank-one all-antenna matrix from the covariance
  initial_snapshot,       // Y(0, 0) of the first symbol and subcarrier
};

struct AngleEstimatorConfig {
  double aoa_step{0.01};
  double aod_step{0.01};
  CovarianceOptions covariance;
  RoughSource rough_source{RoughSource::principal_eigenvector};
  bool keep_surface{false};
};

struct AngleEstimate {
  double aoa{0.0};  // relative to the PBS broadside
  double aod{0.0};  // relative to the TBS broadside
  double rough_aoa{0.0};
  double rough_aod{0.0};
  int rough_mu_aoa{0};
  int rough_mu_aod{0};
  AngleInterval aoa_interval;
  AngleInterval aod_interval;
  std::size_t aoa_index{0};
  std::size_t aod_index{0};
  std::uint64_t spectrum_evals{0};
  OpCounts ops;
  Eigen::MatrixXd surface;
};

inline Eigen::MatrixXcd rough_input(const Cube& obs, const TxSymbols& tx, const SubspaceDecomposition& d,
                                    const AngleEstimatorConfig& cfg) {
  if (cfg.rough_source == RoughSource::initial_snapshot) {
    const Eigen::VectorXcd x = tx.data.col(0);
    return all_antenna_matrix(obs.data.col(0), x, cfg.covariance.rho_scale * x.squaredNorm()).matrix;
  }
  Eigen::MatrixXcd y(Eigen::Index(d.n_rx), Eigen::Index(d.n_tx));
  for (Eigen::Index j = 0; j < y.rows(); ++j)
    for (Eigen::Index k = 0; k < y.cols(); ++k) y(j, k) = d.principal[j * y.cols() + k];
  return y;
}

/// @brief Two-stage joint AoA/AoD estimate: DFT peak, then MUSIC restricted
/// to one bin either side of it.
inline AngleEstimate estimate_angles(const Cube& obs, const TxSymbols& tx, double spacing_over_lambda,
                                     const AngleEstimatorConfig& cfg = {}) {
  AngleEstimate e;
  const Eigen::MatrixXcd r = snapshot_covariance(obs, tx, cfg.covariance, &e.ops);
  const auto d = decompose(r, obs.n_rx, tx.n_streams(), 1, &e.ops);
  const auto rough = rough_estimate(rough_input(obs, tx, d, cfg), spacing_over_lambda, &e.ops);
  const AngleLattice la{cfg.aoa_step}, ld{cfg.aod_step};
  const auto res = search_spectrum(d, spacing_over_lambda, la, la.within(rough.aoa_interval), ld,
                                   ld.within(rough.aod_interval), cfg.keep_surface, &e.ops);
  e.aoa = res.aoa;
  e.aod = res.aod;
  e.rough_aoa = rough.aoa;
  e.rough_aod = rough.aod;
  e.rough_mu_aoa = rough.mu_aoa;
  e.rough_mu_aod = rough.mu_aod;
  e.aoa_interval = rough.aoa_interval;
  e.aod_interval = rough.aod_interval;
  e.aoa_index = res.aoa_index;
  e.aod_index = res.aod_index;
  e.spectrum_evals = res.evaluations;
  e.surface = res.surface;
  return e;
}

/// @brief Exhaustive 2-D MUSIC over the whole visible lattice.
inline AngleEstimate full_grid_music(const Cube& obs, const TxSymbols& tx, double spacing_over_lambda,
                                     const AngleEstimatorConfig& cfg = {}) {
  AngleEstimate e;
  const Eigen::MatrixXcd r = snapshot_covariance(obs, tx, cfg.covariance, &e.ops);
  const auto d = decompose(r, obs.n_rx, tx.n_streams(), 1, &e.ops);
  const AngleLattice la{cfg.aoa_step}, ld{cfg.aod_step};
  const auto res = search_spectrum(d, spacing_over_lambda, la, la.full(), ld, ld.full(), cfg.keep_surface, &e.ops);
  e.aoa = e.rough_aoa = res.aoa;
  e.aod = e.rough_aod = res.aod;
  e.aoa_interval = {-kPi / 2.0, kPi / 2.0, false};
  e.aod_interval = e.aoa_interval;
  e.aoa_index = res.aoa_index;
  e.aod_index = res.aod_index;
  e.spectrum_evals = res.evaluations;
  e.surface = res.surface;
  return e;
}

}  // namespace isac
