#include <catch_amalgamated.hpp>

#include "isac/analysis.hpp"

using namespace isac;
using Catch::Approx;

TEST_CASE("64-element arrays at 0.01 rad") {
  const auto r = complexity_report(64, 64, 512 * 256, 0.5, 0.01, 0.01, 0, 0);
  CHECK(r.gamma_aoa == 315);
  CHECK(r.gamma_aod == 315);
  CHECK(r.gamma_aoa_nominal == Approx(314.159).epsilon(1e-5));
  CHECK(r.full_search_ops / r.restricted_search_ops ==
        (std::uint64_t(r.gamma_aoa) * r.gamma_aod) / (std::uint64_t(r.eps_aoa) * r.eps_aod));
  CHECK(double(r.full_search_ops) / double(r.restricted_search_ops) ==
        Approx(double(r.gamma_aoa * r.gamma_aod) / double(r.eps_aoa * r.eps_aod)).epsilon(1e-12));
  CHECK(r.proposed_total == r.rough_ops + r.fine_ops);
  CHECK(r.fine_ops == r.covariance_ops + r.evd_ops + r.restricted_search_ops);
  CHECK(r.baseline_total == r.covariance_ops + r.evd_ops + r.full_search_ops);
  // Mid-array interval: asin(+-2/64) wide, about 7 lattice cells.
  CHECK(r.eps_aoa == 7);
  CHECK(r.effective_step_aoa == Approx(2 * std::asin(1.0 / 32.0) / 7.0).epsilon(1e-12));
}

TEST_CASE("single-element arrays leave no search cost") {
  const auto r = complexity_report(1, 1, 100, 0.5, 0.01, 0.01, 0, 0);
  CHECK(r.restricted_search_ops == 0);
  CHECK(r.full_search_ops == 0);
  CHECK(r.baseline_total == r.covariance_ops + r.evd_ops);
  CHECK(r.proposed_total == r.covariance_ops + r.evd_ops + r.rough_ops);
  CHECK(r.rough_ops == 2);
}

TEST_CASE("reference configuration favours the two-stage estimator") {
  const auto s = full_scene();
  const auto r = complexity_report(s.array, s.ofdm, 0.01, 0.01, 5, -9);
  CHECK(r.proposed_total < r.baseline_total);
  CHECK(r.ratio() > 1.0);
  CHECK(format_report(r).find("ratio") != std::string::npos);
  CHECK_THROWS_AS(complexity_report(4, 4, 10, 0.5, 0.0, 0.01, 0, 0), std::invalid_argument);
}

TEST_CASE("fusion SNR gains") {
  OfdmConfig o{512, 256, 24e9, 120e3, 1.33e-6};
  CHECK(snr_gain_report(o, 3).g_position == 1533.0);
  CHECK(snr_gain_report(o, 1).g_velocity == 255.0);
  const auto m = snr_gain_report(o, 2, 1000.0, 500.0);
  CHECK(*m.measured_g_position == 1000.0);
  CHECK_FALSE(snr_gain_report(o, 2).measured_g_velocity.has_value());
  CHECK_THROWS_AS(snr_gain_report(o, 0), std::invalid_argument);
  CHECK(to_db(100.0) == Approx(20.0));
}
