// SPDX-License-Identifier: Apache-2.0
// Command-line front end: simulate, sweep, angle-bench, report.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "isac/isac.hpp"

namespace fs = std::filesystem;
using namespace isac;

namespace {

struct SceneOptions {
  std::string config;
  bool full_scale{false};
  std::vector<double> snr_db;
  std::vector<double> to_ns;
  std::vector<double> cfo_frac;
  std::vector<std::size_t> tbs_count;
  std::uint64_t seed{1};
  std::string out{"out"};

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Scene/pipeline JSON file")->check(CLI::ExistingFile);
    app->add_flag("--paper-scale", full_scale, "Start from the full-size scene (512x256, 64 antennas)");
    app->add_option("--snr-db", snr_db, "SNR values in dB")->delimiter(',');
    app->add_option("--to-ns", to_ns, "Time offsets in ns, applied to every TBS")->delimiter(',');
    app->add_option("--cfo-frac", cfo_frac, "CFO as a fraction of the subcarrier spacing")->delimiter(',');
    app->add_option("--tbs-count", tbs_count, "Number of TBSs used")->delimiter(',');
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--out", out, "Output directory");
  }

  LoadedConfig load() const {
    const SceneConfig base = full_scale ? full_scene() : desk_scene();
    LoadedConfig c{base, PipelineConfig{}};
    if (!config.empty()) c = load_config(config, base);
    return c;
  }
};

// Applies single-valued scene flags.
SceneConfig apply_singles(SceneConfig s, const SceneOptions& o) {
  if (o.snr_db.size() == 1) s.noise.snr_db = o.snr_db.front();
  if (o.to_ns.size() == 1) s = apply_sweep(s, SweepVariable::to_ns, o.to_ns.front());
  if (o.cfo_frac.size() == 1) s = apply_sweep(s, SweepVariable::cfo_frac, o.cfo_frac.front());
  s.validate();
  return s;
}

void print_summary(const VariantEstimate& e, const SceneConfig& s) {
  std::cout << "TBSs " << e.variant.n_tbs << (e.variant.nlcc ? " with NLCC" : " without NLCC") << "\n"
            << "location (" << e.location.x << ", " << e.location.y << ") m, error " << e.location_error << " m\n";
  if (!std::isnan(e.speed))
    std::cout << "velocity " << e.speed << " m/s at " << e.heading << " rad (truth " << s.geometry.target_speed
              << " m/s at " << s.geometry.target_heading << " rad)\n";
}

int cmd_simulate(const SceneOptions& o, bool no_nlcc, bool no_velocity, bool dump_cube, std::size_t stride) {
  auto cfg = o.load();
  SceneConfig scene = apply_singles(cfg.scene, o);
  if (o.tbs_count.size() > 1) throw std::invalid_argument("--tbs-count takes one value for simulate");
  const std::size_t k = o.tbs_count.empty() ? scene.n_tbs() : o.tbs_count.front();
  if (k < scene.n_tbs()) scene = with_tbs_count(scene, k);
  TrialOptions opt;
  opt.variants = {{k, !no_nlcc}};
  opt.keep_profiles = true;
  opt.estimate_velocity = !no_velocity;
  const TrialResult tr = run_trial(scene, o.seed, cfg.pipeline, opt);
  const auto& e = tr.estimates.front();
  const fs::path dir = o.out;
  fs::create_directories(dir);

  CsvWriter a(dir / "angles.csv", {"tbs", "aoa_local_rad", "aod_local_rad", "aoa_global_rad", "aod_global_rad",
                                   "true_aoa_global_rad", "true_aod_global_rad", "rough_aoa_rad", "rough_aod_rad"});
  for (const auto& t : tr.tbs) {
    const auto pp = derive_path_parameters(scene.geometry, t.tbs_index);
    a << t.tbs_index << t.angles.aoa << t.angles.aod << t.aoa_global << t.aod_global << pp.aoa_nlos << pp.aod_nlos
      << t.angles.rough_aoa << t.angles.rough_aod;
    a.end_row();
    const auto& fv = e.variant.nlcc ? t.corrected : t.uncorrected;
    write_feature_vector(fv.range_fv, dir / ("range_fv_tbs" + std::to_string(t.tbs_index) + ".csv"));
    write_feature_vector(fv.velocity_fv, dir / ("velocity_fv_tbs" + std::to_string(t.tbs_index) + ".csv"));
  }
  a.close();
  if (e.location_detail) {
    const auto& l = *e.location_detail;
    write_position_heatmap(l.fused, l.grid, dir / "position_fused.csv");
    for (std::size_t i = 0; i < l.per_tbs.size(); ++i)
      write_position_heatmap(l.per_tbs[i], l.grid, dir / ("position_tbs" + std::to_string(i) + ".csv"));
  }
  if (e.velocity_detail) {
    const auto& v = *e.velocity_detail;
    write_velocity_heatmap(v.fused, v.grid, stride, dir / "velocity_fused.csv");
    for (std::size_t i = 0; i < v.per_tbs.size(); ++i)
      write_velocity_heatmap(v.per_tbs[i], v.grid, stride, dir / ("velocity_tbs" + std::to_string(i) + ".csv"));
  }
  if (dump_cube) {
    const std::uint64_t h = scene_hash(scene);
    for (std::size_t i = 0; i < k; ++i) {
      const EchoCube echo = synthesize_tbs_echo(scene, i, o.seed);
      write_cube(dir / ("cube_nlos_tbs" + std::to_string(i) + ".bin"), echo.nlos_observation(), h);
      write_cube(dir / ("cube_los_tbs" + std::to_string(i) + ".bin"), echo.los_observation(), h);
    }
  }
  json summary;
  summary["scene"] = scene_to_json(scene);
  summary["pipeline"] = pipeline_to_json(cfg.pipeline);
  summary["scene_hash"] = hex64(scene_hash(scene));
  summary["seed"] = o.seed;
  summary["nlcc"] = e.variant.nlcc;
  summary["location_m"] = {e.location.x, e.location.y};
  summary["location_error_m"] = e.location_error;
  if (!no_velocity) summary["velocity"] = {{"speed_mps", e.speed}, {"heading_rad", e.heading}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  print_summary(e, scene);
  std::cout << "outputs in " << dir.string() << "\n";
  return 0;
}

int cmd_sweep(const SceneOptions& o, const std::string& nlcc, std::size_t trials, bool no_velocity, bool no_offsets,
              std::size_t threads, bool coarse) {
  auto cfg = o.load();
  ExperimentSpec x;
  x.pipeline = cfg.pipeline;
  x.pipeline.position.coarse_to_fine = x.pipeline.position.coarse_to_fine || coarse;
  x.trials = trials;
  x.master_seed = o.seed;
  x.estimate_velocity = !no_velocity;
  x.offsets_enabled = !no_offsets;
  x.threads = threads;
  x.output_dir = o.out;
  if (nlcc == "on") x.nlcc_modes = {true};
  else if (nlcc == "off") x.nlcc_modes = {false};
  else x.nlcc_modes = {true, false};

  std::vector<std::pair<SweepVariable, std::vector<double>>> multi;
  if (o.snr_db.size() > 1) multi.push_back({SweepVariable::snr_db, o.snr_db});
  if (o.to_ns.size() > 1) multi.push_back({SweepVariable::to_ns, o.to_ns});
  if (o.cfo_frac.size() > 1) multi.push_back({SweepVariable::cfo_frac, o.cfo_frac});
  if (multi.size() > 1) throw std::invalid_argument("only one of --snr-db, --to-ns, --cfo-frac may list several values");
  SceneOptions singles = o;
  if (!multi.empty()) {
    x.variable = multi.front().first;
    x.values = multi.front().second;
    if (x.variable == SweepVariable::snr_db) singles.snr_db.clear();
    if (x.variable == SweepVariable::to_ns) singles.to_ns.clear();
    if (x.variable == SweepVariable::cfo_frac) singles.cfo_frac.clear();
  }
  x.scene = apply_singles(cfg.scene, singles);
  if (multi.empty() && o.tbs_count.size() > 1) {
    x.variable = SweepVariable::tbs_count;
    for (auto k : o.tbs_count) x.values.push_back(double(k));
  } else {
    if (multi.empty()) x.values = {x.scene.noise.snr_db};
    x.tbs_counts = o.tbs_count.empty() ? std::vector<std::size_t>{x.scene.n_tbs()} : o.tbs_count;
  }
  const SweepResult r = run_sweep(x);
  std::cout << sweep_name(x.variable) << "  I  nlcc  rmse_loc_m  rmse_speed_mps  rmse_heading_rad\n";
  for (const auto& rec : r.records)
    std::cout << rec.value << "  " << rec.n_tbs << "  " << rec.nlcc << "  " << rec.rmse_location << " +/- "
              << rec.ci_location << "  " << rec.rmse_speed << "  " << rec.rmse_heading << "\n";
  for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

int cmd_angle_bench(const SceneOptions& o, std::size_t trials, std::optional<std::size_t> n_rx,
                    std::optional<std::size_t> n_tx, double step) {
  auto cfg = o.load();
  SceneConfig scene = apply_singles(cfg.scene, o);
  if (n_rx) scene.array.n_rx_pbs = *n_rx;
  if (n_tx) scene.array.n_tx_per_tbs = *n_tx;
  AngleEstimatorConfig ac = cfg.pipeline.angle;
  if (step > 0.0) ac.aoa_step = ac.aod_step = step;
  const auto r = angle_benchmark(scene, ac, trials, o.seed);
  const auto files = write_angle_bench(r, o.out);
  std::cout << "trials " << r.rows.size() << ", identical cells: " << (r.all_same_cell() ? "yes" : "no")
            << ", op counts match prediction: " << (r.all_ops_match() ? "yes" : "no")
            << ", wall-clock ratio " << r.wall_clock_ratio() << "\n";
  if (!r.rows.empty()) std::cout << format_report(r.rows.front().predicted);
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

int cmd_report(const SceneOptions& o, double step, int mu_aoa, int mu_aod) {
  auto cfg = o.load();
  const SceneConfig scene = apply_singles(cfg.scene, o);
  const double sa = step > 0.0 ? step : cfg.pipeline.angle.aoa_step;
  const double sd = step > 0.0 ? step : cfg.pipeline.angle.aod_step;
  const auto c = complexity_report(scene.array, scene.ofdm, sa, sd, mu_aoa, mu_aod);
  std::cout << format_report(c);
  std::vector<std::size_t> counts = o.tbs_count;
  if (counts.empty()) counts = {scene.n_tbs()};
  fs::create_directories(o.out);
  CsvWriter w(fs::path(o.out) / "snr_gain.csv", {"n_tbs", "n_subcarriers", "n_symbols", "g_position", "g_velocity",
                                                 "g_position_db", "g_velocity_db"});
  for (auto k : counts) {
    const auto g = snr_gain_report(scene.ofdm, k);
    std::cout << "I=" << k << "  G_P " << g.g_position << " (" << to_db(g.g_position) << " dB)  G_V " << g.g_velocity
              << " (" << to_db(g.g_velocity) << " dB)\n";
    w << k << scene.ofdm.n_subcarriers << scene.ofdm.n_symbols << g.g_position << g.g_velocity << to_db(g.g_position)
      << to_db(g.g_velocity);
    w.end_row();
  }
  w.close();
  CsvWriter cw(fs::path(o.out) / "complexity.csv", {"quantity", "value"});
  auto row = [&](const char* k, double v) {
    cw << k << v;
    cw.end_row();
  };
  row("eps_aoa", double(c.eps_aoa));
  row("eps_aod", double(c.eps_aod));
  row("gamma_aoa", double(c.gamma_aoa));
  row("gamma_aod", double(c.gamma_aod));
  row("rough_ops", double(c.rough_ops));
  row("fine_ops", double(c.fine_ops));
  row("proposed_total", double(c.proposed_total));
  row("baseline_total", double(c.baseline_total));
  row("ratio", c.ratio());
  cw.close();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-BS cooperative passive sensing simulator"};
  app.require_subcommand(1);

  SceneOptions so_sim, so_sweep, so_bench, so_report;
  bool sim_no_nlcc = false, sim_no_vel = false, sim_dump = false;
  std::size_t sim_stride = 10;
  auto* sim = app.add_subcommand("simulate", "Run one trial and export profiles");
  so_sim.attach(sim);
  sim->add_flag("--no-nlcc", sim_no_nlcc, "Skip the NLoS/LoS cross-correlation");
  sim->add_flag("--no-velocity", sim_no_vel, "Skip velocity estimation");
  sim->add_flag("--dump-cube", sim_dump, "Write the received symbol cubes");
  sim->add_option("--heatmap-stride", sim_stride, "Decimation of the velocity heatmap")->check(CLI::PositiveNumber);

  bool sw_no_nlcc = false, sw_no_vel = false, sw_no_off = false, sw_coarse = false;
  std::string sw_nlcc = "on";
  std::size_t sw_trials = 100, sw_threads = 0;
  auto* sw = app.add_subcommand("sweep", "Monte Carlo RMSE curves");
  so_sweep.attach(sw);
  sw->add_option("--trials", sw_trials, "Trials per sweep point")->check(CLI::PositiveNumber);
  sw->add_flag("--no-nlcc", sw_no_nlcc, "Disable NLCC (same as --nlcc off)");
  sw->add_option("--nlcc", sw_nlcc, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));
  sw->add_flag("--no-velocity", sw_no_vel, "Localization only");
  sw->add_flag("--no-offsets", sw_no_off, "Zero all TO/CFO");
  sw->add_flag("--coarse-to-fine", sw_coarse, "Coarse 1 m pass before the fine window");
  sw->add_option("--threads", sw_threads, "Worker threads (0 = all cores)");

  std::size_t ab_trials = 100;
  std::optional<std::size_t> ab_rx, ab_tx;
  double ab_step = 0.0;
  auto* ab = app.add_subcommand("angle-bench", "Two-stage estimator against full-grid 2-D MUSIC");
  so_bench.attach(ab);
  ab->add_option("--trials", ab_trials, "Paired trials")->check(CLI::PositiveNumber);
  ab->add_option("--n-rx", ab_rx, "PBS antennas");
  ab->add_option("--n-tx", ab_tx, "TBS antennas");
  ab->add_option("--step", ab_step, "Angle step in rad for both axes");

  double rp_step = 0.0;
  int rp_mu_aoa = 0, rp_mu_aod = 0;
  auto* rp = app.add_subcommand("report", "Complexity and SNR-gain formulas");
  so_report.attach(rp);
  rp->add_option("--step", rp_step, "Angle step in rad for both axes");
  rp->add_option("--mu-aoa", rp_mu_aoa, "Rough AoA bin (signed)");
  rp->add_option("--mu-aod", rp_mu_aod, "Rough AoD bin (signed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*sim) return cmd_simulate(so_sim, sim_no_nlcc, sim_no_vel, sim_dump, sim_stride);
    if (*sw) return cmd_sweep(so_sweep, sw_no_nlcc ? "off" : sw_nlcc, sw_trials, sw_no_vel, sw_no_off, sw_threads, sw_coarse);
    if (*ab) return cmd_angle_bench(so_bench, ab_trials, ab_rx, ab_tx, ab_step);
    if (*rp) return cmd_report(so_report, rp_step, rp_mu_aoa, rp_mu_aod);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
