#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "isac/harness.hpp"

using namespace isac;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

SceneConfig small_scene() {
  SceneConfig s = desk_scene();
  s.ofdm.n_subcarriers = 64;
  s.ofdm.n_symbols = 32;
  s.array.n_rx_pbs = 8;
  s.array.n_tx_per_tbs = 4;
  return s;
}

PipelineConfig light_pipeline() {
  PipelineConfig p;
  p.position.step = 0.02;
  p.velocity.speed_step = 0.5;
  p.velocity.angle_step = 0.01;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("noise-free trial with offsets recovers the target cell") {
  SceneConfig s = desk_scene();
  s.noise.enabled = false;
  set_uniform_offsets(s, 60e-9, 0.06);
  const auto r = run_trial(s, 1, PipelineConfig{}, {{{3, true}}, false, false, true});
  CHECK(r.estimates[0].location_error < 1e-9);
  const auto est = run_trial(s, 1, PipelineConfig{}, {{{3, true}}, false, false, false});
  CHECK(est.estimates[0].location_error < 0.1);
  const auto u = run_trial(s, 1, PipelineConfig{}, {{{3, false}}, false, false, true});
  CHECK(u.estimates[0].location_error > 0.5);
}

TEST_CASE("trials are deterministic") {
  const SceneConfig s = small_scene();
  const auto p = light_pipeline();
  TrialOptions o{{{2, true}, {3, true}, {3, false}}, true, false, false};
  const auto a = run_trial(s, 42, p, o);
  const auto b = run_trial(s, 42, p, o);
  REQUIRE(a.estimates.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.estimates[k].location.x == b.estimates[k].location.x);
    CHECK(a.estimates[k].location.y == b.estimates[k].location.y);
    CHECK(a.estimates[k].speed == b.estimates[k].speed);
    CHECK(a.estimates[k].heading == b.estimates[k].heading);
  }
}

TEST_CASE("shared velocity accumulation matches the per-variant search") {
  const SceneConfig s = small_scene();
  const auto p = light_pipeline();
  const auto shared = run_trial(s, 5, p, {{{2, true}, {3, true}}, true, false, false});
  const auto direct = run_trial(s, 5, p, {{{2, true}, {3, true}}, true, true, false});
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(shared.estimates[k].speed == direct.estimates[k].speed);
    CHECK(shared.estimates[k].heading == direct.estimates[k].heading);
  }
  REQUIRE(direct.estimates[1].velocity_detail.has_value());
  CHECK(direct.estimates[1].velocity_detail->per_tbs.size() == 3);
  REQUIRE(direct.estimates[1].location_detail.has_value());
}

TEST_CASE("single-TBS baseline intersects the AoA ray with the range ellipse") {
  SceneConfig s = desk_scene();
  s.noise.enabled = false;
  const auto r = run_trial(s, 3, PipelineConfig{}, {{{1, true}}, false, false, false});
  CHECK(r.estimates[0].location_error < 1.0);
  // Exact with oracle angles.
  const auto o = run_trial(s, 3, PipelineConfig{}, {{{1, true}}, false, false, true});
  CHECK(o.estimates[0].location_error < 0.01);
}

TEST_CASE("RMSE and its interval") {
  const auto [r1, c1] = rmse_with_ci({0.3});
  CHECK(r1 == Approx(0.3));
  CHECK(c1 == 0.0);
  const auto [r, c] = rmse_with_ci({1.0, -1.0, 1.0, -1.0});
  CHECK(r == 1.0);
  CHECK(c == 0.0);
  const auto [r2, c2] = rmse_with_ci({1.0, 2.0, 3.0});
  CHECK(r2 == Approx(std::sqrt(14.0 / 3.0)));
  CHECK(c2 > 0.0);
}

TEST_CASE("sweep application") {
  const SceneConfig s = desk_scene();
  CHECK(apply_sweep(s, SweepVariable::snr_db, -12).noise.snr_db == -12);
  const auto t = apply_sweep(s, SweepVariable::to_ns, 60);
  CHECK(t.offsets.per_tbs[3].time_offset == Approx(60e-9));
  CHECK(t.offsets.per_tbs[3].cfo == s.offsets.per_tbs[3].cfo);
  const auto c = apply_sweep(s, SweepVariable::cfo_frac, 0.06);
  CHECK(c.offsets.per_tbs[0].cfo == Approx(0.06 * 120e3));
  CHECK(c.offsets.per_tbs[0].time_offset == s.offsets.per_tbs[0].time_offset);
  CHECK_THROWS_AS(apply_sweep(s, SweepVariable::tbs_count, 5), std::invalid_argument);
  CHECK_THROWS_AS(apply_sweep(s, SweepVariable::snr_db, std::nan("")), std::invalid_argument);
}

TEST_CASE("parallel_for reports the lowest failing index") {
  std::vector<int> hit(20, 0);
  CHECK_NOTHROW(parallel_for(20, 4, [&](std::size_t i) { hit[i] = 1; }));
  CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
  try {
    parallel_for(20, 3, [&](std::size_t i) {
      if (i == 7 || i == 12) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL("no exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "fail 7");
  }
}

TEST_CASE("sweep output is independent of the thread count") {
  ExperimentSpec x;
  x.scene = small_scene();
  x.pipeline = light_pipeline();
  x.values = {-5.0, 5.0};
  x.tbs_counts = {2, 3};
  x.nlcc_modes = {true, false};
  x.trials = 3;
  x.master_seed = 77;
  x.estimate_velocity = true;
  const fs::path base = fs::temp_directory_path() / "isac_test_sweep";
  fs::remove_all(base);
  x.threads = 1;
  x.output_dir = base / "a";
  const auto a = run_sweep(x);
  x.threads = 3;
  x.output_dir = base / "b";
  const auto b = run_sweep(x);
  REQUIRE(a.files.size() == b.files.size());
  CHECK(a.files.size() == 4 + 2);
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    CHECK(a.files[k].filename() == b.files[k].filename());
    CHECK(slurp(a.files[k]) == slurp(b.files[k]));
  }
  CHECK(a.records.size() == 8);
  const auto& rec = a.find(5.0, 3, true);
  CHECK(rec.trials == 3);
  CHECK(rec.rmse_velocity_avg == Approx(0.5 * (rec.rmse_speed + rec.rmse_heading)));
  fs::remove_all(base);
}

TEST_CASE("a single trial's RMSE is its absolute error") {
  ExperimentSpec x;
  x.scene = small_scene();
  x.pipeline = light_pipeline();
  x.values = {0.0};
  x.trials = 1;
  x.estimate_velocity = false;
  const auto r = run_sweep(x);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.records[0].rmse_location == std::abs(r.rows[0].estimate.location_error));
  CHECK(std::isnan(r.records[0].rmse_speed));
}

TEST_CASE("TBS-count sweep") {
  ExperimentSpec x;
  x.scene = small_scene();
  x.pipeline = light_pipeline();
  x.variable = SweepVariable::tbs_count;
  x.values = {2, 4};
  x.trials = 2;
  x.estimate_velocity = false;
  const auto r = run_sweep(x);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].n_tbs == 2);
  CHECK(r.records[1].n_tbs == 4);
}

TEST_CASE("sweep errors carry the trial context") {
  ExperimentSpec x;
  x.scene = small_scene();
  x.pipeline = light_pipeline();
  x.values = {0.0};
  x.trials = 1;
  x.tbs_counts = {9};
  CHECK_THROWS_WITH(run_sweep(x), Catch::Matchers::ContainsSubstring("trial 0"));
  x.trials = 0;
  CHECK_THROWS_AS(run_sweep(x), std::invalid_argument);
}

TEST_CASE("angle benchmark on a small array") {
  SceneConfig s = small_scene();
  s.ofdm.n_subcarriers = 16;
  s.ofdm.n_symbols = 8;
  const auto r = angle_benchmark(s, AngleEstimatorConfig{}, 2, 3);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.all_same_cell());
  CHECK(r.all_ops_match());
  const fs::path dir = fs::temp_directory_path() / "isac_test_bench";
  fs::remove_all(dir);
  const auto files = write_angle_bench(r, dir);
  CHECK(fs::exists(files[0]));
  CHECK(fs::exists(files[1]));
  fs::remove_all(dir);
}

TEST_CASE("measured fusion gain grows with the TBS count") {
  SceneConfig s = small_scene();
  s.ofdm.n_subcarriers = 32;
  s.noise.snr_db = 0.0;
  const auto m = measure_snr_gain(s, {1, 2, 3}, 20, 5);
  REQUIRE(m.size() == 3);
  for (const auto& x : m) {
    CHECK(x.report.measured_g_position.value() > 0.0);
    CHECK(x.report.g_position == 31.0 * double(x.n_tbs));
  }
  CHECK(*m[2].report.measured_g_position > *m[0].report.measured_g_position);
  CHECK(*m[2].report.measured_g_velocity > *m[0].report.measured_g_velocity);
}
