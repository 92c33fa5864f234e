#include <catch_amalgamated.hpp>

#include <cmath>

#include "isac/analysis.hpp"
#include "isac/angle_est.hpp"
#include "isac/channel.hpp"

using namespace isac;
using Catch::Approx;

namespace {

SceneConfig compact_scene(double snr_db) {
  SceneConfig s = desk_scene();
  s.ofdm.n_subcarriers = 32;
  s.ofdm.n_symbols = 16;
  s.array.n_rx_pbs = 8;
  s.array.n_tx_per_tbs = 4;
  s.noise.snr_db = snr_db;
  return s;
}

}  // namespace

TEST_CASE("all-antenna matrix matches a dense regularized solve") {
  Rng rng(4);
  Eigen::VectorXcd y(6), x(4);
  for (auto& v : y) v = rng.complex_normal(1.0);
  for (auto& v : x) v = rng.complex_normal(1.0);
  const double rho = 0.3;
  const Eigen::MatrixXcd a = x * x.adjoint() + rho * Eigen::MatrixXcd::Identity(4, 4);
  // Y A = y x^H  <=>  A^H Y^H = x y^H.
  const Eigen::MatrixXcd oracle = a.adjoint().fullPivLu().solve(x * y.adjoint()).adjoint();
  const auto got = all_antenna_matrix(y, x, rho, 3, 5);
  CHECK((got.matrix - oracle).norm() < 1e-12 * oracle.norm());
  CHECK(got.symbol_index == 3);
  CHECK(got.subcarrier_index == 5);
  CHECK_THROWS_AS(all_antenna_matrix(y, Eigen::VectorXcd::Zero(4), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(all_antenna_matrix(y, x, -1.0), std::invalid_argument);
}

TEST_CASE("a common symbol on every element hides the AoD") {
  const Eigen::VectorXcd ar = steering(0.3, 6, 0.5);
  const Eigen::VectorXcd at = steering(-0.5, 4, 0.5);
  const Eigen::VectorXcd x = Eigen::VectorXcd::Constant(4, {0.7071067811865476, 0.7071067811865476});
  const Eigen::VectorXcd y = ar * (at.transpose() * x);
  const auto m = all_antenna_matrix(y, x, 1e-3).matrix;
  for (Eigen::Index k = 1; k < 4; ++k) CHECK((m.col(k) - m.col(0)).norm() < 1e-12);
}

TEST_CASE("signed bins and visible angles") {
  CHECK(signed_bin(0, 8) == 0);
  CHECK(signed_bin(3, 8) == 3);
  CHECK(signed_bin(4, 8) == -4);
  CHECK(signed_bin(7, 8) == -1);
  CHECK(signed_bin(2, 5) == 2);
  CHECK(signed_bin(3, 5) == -2);
  CHECK(bin_to_angle(-4, 8, 0.5) == Approx(-kPi / 2));
  CHECK_THROWS_AS(bin_to_angle(3, 8, 0.25), std::domain_error);
  const auto iv = search_interval(7, 8, 0.5);
  CHECK(iv.clamped);
  CHECK(iv.hi == Approx(kPi / 2));
  const auto mid = search_interval(0, 8, 0.5);
  CHECK_FALSE(mid.clamped);
  CHECK(mid.lo == Approx(-std::asin(0.25)));
}

TEST_CASE("an on-bin steering vector maps to exactly one DFT bin") {
  for (int mu : {-3, 0, 2}) {
    const double ang = std::asin(double(mu) / (0.5 * 8));
    const Eigen::VectorXcd f = dft_matrix(8) * steering(ang, 8, 0.5);
    for (int k = 0; k < 8; ++k) {
      if (signed_bin(std::size_t(k), 8) == mu) CHECK(std::abs(f[k]) == Approx(8.0));
      else CHECK(std::abs(f[k]) < 1e-12);
    }
  }
}

TEST_CASE("rough estimate of a rank-one matrix") {
  const double dl = 0.5;
  const Eigen::MatrixXcd y = steering(0.31, 16, dl) * steering(-0.42, 8, dl).transpose();
  OpCounts ops;
  const auto r = rough_estimate(y, dl, &ops);
  CHECK(r.aoa_interval.contains(0.31));
  CHECK(r.aod_interval.contains(-0.42));
  CHECK(std::abs(r.aoa - 0.31) <= rough_resolution(16, dl));
  CHECK(ops.rough == cost::rough(16, 8));
  CHECK_THROWS_AS(rough_estimate(Eigen::MatrixXcd::Zero(4, 4), dl), std::invalid_argument);
}

TEST_CASE("search lattice") {
  const AngleLattice l{0.01};
  CHECK(l.size() == 315);
  CHECK(l.angle(0) == -kPi / 2);
  const auto r = l.within({-0.1, 0.1, false});
  CHECK(l.angle(r.first) >= -0.1);
  CHECK(l.angle(r.first - 1) < -0.1);
  CHECK(l.angle(r.first + r.count - 1) <= 0.1);
  CHECK(l.angle(r.first + r.count) > 0.1);
  CHECK(l.within({2.0, 3.0, false}).count == 0);
}

TEST_CASE("noise-free estimate lands near the true angles") {
  SceneConfig s = compact_scene(0.0);
  s.noise.enabled = false;
  const double dl = s.array.spacing_over_lambda(s.ofdm);
  const AngleLattice l{0.01};
  for (std::size_t i = 0; i < s.n_tbs(); ++i) {
    const EchoCube e = synthesize_tbs_echo(s, i, 2);
    const auto est = estimate_angles(e.nlos_observation(), e.tx_symbols, dl);
    const auto pp = derive_path_parameters(s.geometry, i);
    CHECK(std::abs(est.aoa - pp.aoa_nlos_local) <= l.step / 2 + 1e-9);
    // Finite-sample cross-correlation of the independent streams leaves a
    // small AoD bias on a short frame.
    CHECK(std::abs(est.aod - pp.aod_nlos_local) <= 0.05);
    CHECK(est.aoa_interval.contains(pp.aoa_nlos_local));
    CHECK(est.aod_interval.contains(pp.aod_nlos_local));
  }
}

TEST_CASE("restricted and exhaustive MUSIC pick the same cell") {
  const SceneConfig s = compact_scene(-5.0);
  const double dl = s.array.spacing_over_lambda(s.ofdm);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const EchoCube e = synthesize_tbs_echo(s, seed % 4, seed);
    const auto a = estimate_angles(e.nlos_observation(), e.tx_symbols, dl);
    const auto b = full_grid_music(e.nlos_observation(), e.tx_symbols, dl);
    CHECK(a.aoa_index == b.aoa_index);
    CHECK(a.aod_index == b.aod_index);
  }
}

TEST_CASE("operation counters agree with the complexity formulas") {
  const SceneConfig s = compact_scene(0.0);
  const double dl = s.array.spacing_over_lambda(s.ofdm);
  const EchoCube e = synthesize_tbs_echo(s, 0, 9);
  const auto a = estimate_angles(e.nlos_observation(), e.tx_symbols, dl);
  const auto b = full_grid_music(e.nlos_observation(), e.tx_symbols, dl);
  const auto rep = complexity_report(s.array, s.ofdm, 0.01, 0.01, a.rough_mu_aoa, a.rough_mu_aod);
  CHECK(a.spectrum_evals == std::uint64_t(rep.eps_aoa) * rep.eps_aod);
  CHECK(b.spectrum_evals == std::uint64_t(rep.gamma_aoa) * rep.gamma_aod);
  CHECK(a.ops.total() == rep.proposed_total);
  CHECK(b.ops.total() == rep.baseline_total);
  CHECK(a.ops.rough == rep.rough_ops);
}

TEST_CASE("spectrum surface agrees with pointwise evaluation") {
  const SceneConfig s = compact_scene(0.0);
  const double dl = s.array.spacing_over_lambda(s.ofdm);
  const EchoCube e = synthesize_tbs_echo(s, 2, 3);
  const Cube obs = e.nlos_observation();
  const auto d = decompose(snapshot_covariance(obs, e.tx_symbols), obs.n_rx, e.tx_symbols.n_streams());
  const AngleLattice l{0.05};
  const auto ra = l.within({-0.4, 0.2, false});
  const auto rd = l.within({-0.1, 0.6, false});
  const auto res = search_spectrum(d, dl, l, ra, l, rd, true);
  for (std::size_t i = 0; i < ra.count; i += 3)
    for (std::size_t j = 0; j < rd.count; j += 2) {
      const double v = music_spectrum(d, dl, l.angle(ra.first + i), l.angle(rd.first + j));
      CHECK(res.surface(Eigen::Index(i), Eigen::Index(j)) == Approx(v).epsilon(1e-9));
    }
  CHECK(res.peak == res.surface.maxCoeff());
}

TEST_CASE("covariance is Hermitian and the snapshot stride subsamples") {
  const SceneConfig s = compact_scene(0.0);
  const EchoCube e = synthesize_tbs_echo(s, 0, 1);
  OpCounts ops;
  CovarianceOptions opt;
  opt.snapshot_stride = 4;
  const auto r = snapshot_covariance(e.nlos_observation(), e.tx_symbols, opt, &ops);
  CHECK((r - r.adjoint()).norm() < 1e-12 * r.norm());
  CHECK(ops.covariance == (32 * 16 / 4) * cost::covariance_per_snapshot(8, 4));
  opt.snapshot_stride = 0;
  CHECK_THROWS_AS(snapshot_covariance(e.nlos_observation(), e.tx_symbols, opt), std::invalid_argument);
}

TEST_CASE("initial-snapshot rough source") {
  SceneConfig s = compact_scene(0.0);
  s.noise.enabled = false;
  const double dl = s.array.spacing_over_lambda(s.ofdm);
  const EchoCube e = synthesize_tbs_echo(s, 0, 1);
  AngleEstimatorConfig cfg;
  cfg.rough_source = RoughSource::initial_snapshot;
  const auto est = estimate_angles(e.nlos_observation(), e.tx_symbols, dl, cfg);
  const auto pp = derive_path_parameters(s.geometry, 0);
  // The receive side is still identified from one snapshot.
  CHECK(est.aoa_interval.contains(pp.aoa_nlos_local));
}
