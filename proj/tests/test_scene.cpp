#include <catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>

#include "isac/scene.hpp"

using namespace isac;
using Catch::Approx;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

big big_distance(Point2 a, Point2 b) {
  const big dx = big(a.x) - big(b.x);
  const big dy = big(a.y) - big(b.y);
  return sqrt(dx * dx + dy * dy);
}

// Doppler from the central-difference rate of the summed path length.
double fd_doppler(Point2 tbs, Point2 pbs, Point2 x, double v, double heading, double fc) {
  const long double dt = 1e-6L;
  auto len = [&](long double s) {
    const long double px = x.x + s * v * std::cos(heading);
    const long double py = x.y + s * v * std::sin(heading);
    return std::hypot(px - tbs.x, py - tbs.y) + std::hypot(px - pbs.x, py - pbs.y);
  };
  const long double rate = (len(dt) - len(-dt)) / (2 * dt);
  return double(-(long double)fc / (long double)kSpeedOfLight * rate);
}

}  // namespace

TEST_CASE("path lengths and delays of a simple layout") {
  Geometry g;
  g.tbs_positions = {{40, 0}};
  g.tbs_broadside = {0.0};
  g.pbs_position = {80, 80};
  g.target_position = {40, 40};
  const auto pp = derive_path_parameters(g, 0);
  CHECK(pp.r_i_ns == Approx(40.0).epsilon(1e-15));
  CHECK(pp.r_p_ns == Approx(40.0 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(pp.r_p_ns == Approx(56.5685).epsilon(1e-6));
  CHECK(pp.tau_p_ns == Approx((pp.r_i_ns + pp.r_p_ns) / kSpeedOfLight).epsilon(1e-15));
}

TEST_CASE("collinear target halfway between TBS and PBS") {
  Geometry g;
  g.tbs_positions = {{0, 0}};
  g.tbs_broadside = {0.0};
  g.pbs_position = {80, 0};
  g.target_position = {40, 0};
  const auto pp = derive_path_parameters(g, 0);
  CHECK(pp.tau_p_ns == Approx(pp.r_i_s / kSpeedOfLight).epsilon(1e-15));
}

TEST_CASE("reference scene distances agree with a 50-digit oracle") {
  const auto s = full_scene();
  for (std::size_t i = 0; i < s.n_tbs(); ++i) {
    const auto pp = derive_path_parameters(s.geometry, i);
    const big a = big_distance(s.geometry.tbs_positions[i], s.geometry.target_position);
    const big b = big_distance(s.geometry.target_position, s.geometry.pbs_position);
    const big c = big_distance(s.geometry.tbs_positions[i], s.geometry.pbs_position);
    const big tau = (a + b) / big(kSpeedOfLight);
    CHECK(std::abs(pp.r_i_ns - a.convert_to<double>()) <= 1e-15 * pp.r_i_ns);
    CHECK(std::abs(pp.r_p_ns - b.convert_to<double>()) <= 1e-15 * pp.r_p_ns);
    CHECK(std::abs(pp.r_i_s - c.convert_to<double>()) <= 1e-15 * pp.r_i_s);
    CHECK(std::abs(pp.tau_p_ns - tau.convert_to<double>()) <= 4e-16 * pp.tau_p_ns);
  }
}

TEST_CASE("degenerate geometry is rejected") {
  Geometry g;
  g.tbs_positions = {{0, 0}};
  g.tbs_broadside = {0.0};
  g.pbs_position = {0, 0};
  g.target_position = {1, 1};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  CHECK_THROWS_AS(derive_path_parameters(g, 0), std::invalid_argument);
  g.pbs_position = {5, 5};
  g.target_position = {0, 0};
  CHECK_THROWS_AS(derive_path_parameters(g, 0), std::invalid_argument);
  CHECK_THROWS_AS(derive_path_parameters(g, 3), std::out_of_range);
}

TEST_CASE("local angles are relative to the array broadside") {
  const auto s = full_scene();
  for (std::size_t i = 0; i < s.n_tbs(); ++i) {
    const auto pp = derive_path_parameters(s.geometry, i);
    CHECK(wrap_pi(pp.aoa_nlos_local + s.geometry.pbs_broadside - pp.aoa_nlos) == Approx(0.0).margin(1e-14));
    CHECK(wrap_pi(pp.aod_nlos_local + s.geometry.tbs_broadside[i] - pp.aod_nlos) == Approx(0.0).margin(1e-14));
    CHECK(wrap_pi(pp.los_aoa - pp.los_aod - kPi) == Approx(0.0).margin(1e-14));
    // Every path of the reference scene lies in front of its array and off broadside.
    for (double a : {pp.aoa_nlos_local, pp.aod_nlos_local, pp.los_aoa_local, pp.los_aod_local}) {
      CHECK(std::abs(a) < kPi / 2.0 - 0.1);
      CHECK(std::abs(a) > 0.05);
    }
  }
}

TEST_CASE("OFDM symbol duration includes the cyclic prefix") {
  OfdmConfig o;
  CHECK(o.symbol_duration() == 1.0 / o.subcarrier_spacing + o.cp_duration);
  o.n_subcarriers = 1;
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
  o.n_subcarriers = 2;
  o.subcarrier_spacing = 0.0;
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
}

TEST_CASE("stationary and perpendicular targets have zero Doppler") {
  CHECK(bistatic_doppler(0.0, 1.0, 0.3, 2.0, 24e9) == 0.0);
  CHECK(bistatic_doppler(27.0, kPi / 2.0, 0.0, 0.0, 24e9) == Approx(0.0).margin(1e-9));
  CHECK_THROWS_AS(bistatic_doppler(-1.0, 0.0, 0.0, 0.0, 24e9), std::invalid_argument);
}

TEST_CASE("Doppler of the 27 m/s example matches the range-rate oracle") {
  // TBS west of the target (bearing 0), PBS south of it (bearing pi/2).
  const Point2 x{0, 0}, tbs{-5000, 0}, pbs{0, -5000};
  const double f = bistatic_doppler(27.0, 0.785, 0.0, kPi / 2.0, 24e9);
  const double oracle = fd_doppler(tbs, pbs, x, 27.0, 0.785, 24e9);
  CHECK(std::abs(f - oracle) <= 1e-8 * std::abs(oracle));
  CHECK(f == Approx(-3056.5).margin(0.5));
}

TEST_CASE("Doppler agrees with the range-rate oracle on random geometries") {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> pos(-200, 200), ang(0, kTwoPi), spd(0, 50);
  for (int k = 0; k < 200; ++k) {
    Geometry geo;
    geo.tbs_positions = {{pos(g), pos(g)}};
    geo.tbs_broadside = {0.0};
    geo.pbs_position = {pos(g), pos(g)};
    geo.target_position = {pos(g), pos(g)};
    geo.target_speed = spd(g);
    geo.target_heading = ang(g);
    if (distance(geo.target_position, geo.pbs_position) < 5 || distance(geo.target_position, geo.tbs_positions[0]) < 5)
      continue;
    const double f = bistatic_doppler(geo, 0, 24e9);
    const double o = fd_doppler(geo.tbs_positions[0], geo.pbs_position, geo.target_position, geo.target_speed,
                                geo.target_heading, 24e9);
    CHECK(std::abs(f - o) <= 1e-6 * std::max(std::abs(o), 1.0));
  }
}

TEST_CASE("exact Doppler adds exactly the quadratic term") {
  const double a = bistatic_doppler(40.0, 1.1, 0.2, 2.5, 24e9);
  const double e = bistatic_doppler(40.0, 1.1, 0.2, 2.5, 24e9, DopplerModel::exact);
  CHECK(e - a == Approx(doppler_quadratic_term(40.0, 1.1, 0.2, 2.5, 24e9)).epsilon(1e-6));
}

TEST_CASE("offset processes") {
  SyncOffsets o;
  o.per_tbs = {{30e-9, 3600.0, 1e-10, 5.0}};
  CHECK(o.time_offset(0, 0) == o.time_offset(0, 100));
  CHECK(o.cfo(0, 7) == 3600.0);
  o.mode = OffsetMode::linear_drift;
  CHECK(o.time_offset(0, 10) == Approx(30e-9 + 1e-9));
  CHECK(o.cfo(0, 4) == Approx(3620.0));
  o.per_tbs[0].cfo = std::nan("");
  CHECK_THROWS_AS(o.validate(1), std::invalid_argument);
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_pi(3 * kPi / 2) == Approx(-kPi / 2));
  CHECK(wrap_two_pi(-0.5) == Approx(kTwoPi - 0.5));
  CHECK(wrap_pi(0.25) == 0.25);
}

TEST_CASE("scene helpers") {
  auto s = full_scene();
  CHECK_NOTHROW(s.validate());
  CHECK(desk_scene().ofdm.n_subcarriers == 128);
  const auto t = with_tbs_count(s, 2);
  CHECK(t.n_tbs() == 2);
  CHECK(t.offsets.per_tbs.size() == 2);
  CHECK_THROWS(with_tbs_count(s, 5));
  set_uniform_offsets(s, 60e-9, 0.06);
  for (const auto& o : s.offsets.per_tbs) {
    CHECK(o.time_offset == 60e-9);
    CHECK(o.cfo == Approx(0.06 * 120e3));
  }
}
