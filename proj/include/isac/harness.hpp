// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "isac/analysis.hpp"
#include "isac/angle_est.hpp"
#include "isac/channel.hpp"
#include "isac/csv.hpp"
#include "isac/fusion.hpp"
#include "isac/io.hpp"
#include "isac/pipeline.hpp"
#include "isac/rng.hpp"
#include "isac/scene.hpp"

namespace isac {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// @brief Runs fn(i) for i < n on up to `threads` workers (0 = hardware
/// concurrency). The exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// One fusion configuration evaluated inside a trial.
struct Variant {
  std::size_t n_tbs{3};
  bool nlcc{true};
  bool operator==(const Variant&) const = default;
};

struct TrialOptions {
  std::vector<Variant> variants;  // empty: all scene TBSs with NLCC
  bool estimate_velocity{true};
  bool keep_profiles{false};
  bool oracle_angles{false};
};

struct VariantEstimate {
  Variant variant;
  Point2 location;
  double speed{kNaN};
  double heading{kNaN};
  double location_error{kNaN};
  double speed_error{kNaN};
  double heading_error{kNaN};  // wrapped to (-pi, pi]
  std::optional<LocationResult> location_detail;
  std::optional<VelocityResult> velocity_detail;
};

struct TrialResult {
  std::uint64_t seed{0};
  std::vector<TbsOutcome> tbs;
  std::vector<VariantEstimate> estimates;
};

/// @brief One Monte Carlo realization: synthesis, angle estimation,
/// preprocessing and fusion for every requested variant. TBS i always uses
/// the same random streams, so variants with fewer TBSs see a subset of the
/// same realization. A one-TBS variant uses the AoA/range intersection.
inline TrialResult run_trial(const SceneConfig& scene, std::uint64_t seed, const PipelineConfig& pipeline,
                             const TrialOptions& options = {}) {
  scene.validate();
  std::vector<Variant> variants = options.variants;
  if (variants.empty()) variants.push_back({scene.n_tbs(), true});
  std::size_t needed = 0;
  for (const auto& v : variants) {
    if (v.n_tbs < 1 || v.n_tbs > scene.n_tbs()) throw std::invalid_argument("run_trial: variant TBS count out of range");
    needed = std::max(needed, v.n_tbs);
  }
  TrialResult tr;
  tr.seed = seed;
  for (std::size_t i = 0; i < needed; ++i) {
    const EchoCube echo = synthesize_tbs_echo(scene, i, seed);
    tr.tbs.push_back(process_tbs(scene, echo, pipeline, options.oracle_angles));
  }
  const Geometry& g = scene.geometry;
  for (const auto& v : variants) {
    VariantEstimate e;
    e.variant = v;
    if (v.n_tbs == 1) {
      e.location = locate_single_tbs(scene, tr.tbs[0], v.nlcc);
    } else {
      auto loc = locate(fusion_inputs(scene, tr.tbs, v.n_tbs, v.nlcc), g.pbs_position, pipeline.position, scene.ofdm,
                        options.keep_profiles);
      e.location = loc.location;
      if (options.keep_profiles) e.location_detail = std::move(loc);
    }
    e.location_error = distance(e.location, g.target_position);
    tr.estimates.push_back(std::move(e));
  }
  if (!options.estimate_velocity) return tr;

  auto finish = [&](VariantEstimate& e, double speed, double heading) {
    e.speed = speed;
    e.heading = heading;
    e.speed_error = speed - g.target_speed;
    e.heading_error = wrap_pi(heading - g.target_heading);
  };
  if (options.keep_profiles) {
    for (auto& e : tr.estimates) {
      auto vel = estimate_velocity(fusion_inputs(scene, tr.tbs, e.variant.n_tbs, e.variant.nlcc), pipeline.velocity,
                                   scene.ofdm, true);
      finish(e, vel.speed, vel.heading);
      e.velocity_detail = std::move(vel);
    }
    return tr;
  }
  // Prefix accumulation: one profile per TBS and NLCC mode, shared by all
  // variants. Matches estimate_velocity bit for bit.
  const auto& vc = pipeline.velocity;
  const auto grid = build_velocity_grid(vc.speed_min, vc.speed_max, vc.speed_step, vc.angle_step);
  for (bool mode : {true, false}) {
    std::size_t top = 0;
    for (const auto& e : tr.estimates)
      if (e.variant.nlcc == mode) top = std::max(top, e.variant.n_tbs);
    if (top == 0) continue;
    const auto in = fusion_inputs(scene, tr.tbs, top, mode);
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(Eigen::Index(grid.size()));
    for (std::size_t k = 0; k < top; ++k) {
      acc += velocity_profile_direct(in[k].velocity_fv, grid, in[k].aoa, in[k].aod, scene.ofdm).values;
      bool wanted = false;
      for (const auto& e : tr.estimates) wanted = wanted || (e.variant.nlcc == mode && e.variant.n_tbs == k + 1);
      if (!wanted) continue;
      const Eigen::VectorXcd fused = acc / double(k + 1);
      const std::size_t z = peak_of(fused);
      for (auto& e : tr.estimates)
        if (e.variant.nlcc == mode && e.variant.n_tbs == k + 1) finish(e, grid.speed(z), grid.heading(z));
    }
  }
  return tr;
}

enum class SweepVariable { snr_db, to_ns, cfo_frac, tbs_count };

inline const char* sweep_name(SweepVariable v) {
  switch (v) {
    case SweepVariable::snr_db: return "snr_db";
    case SweepVariable::to_ns: return "to_ns";
    case SweepVariable::cfo_frac: return "cfo_frac";
    case SweepVariable::tbs_count: return "tbs_count";
  }
  return "?";
}

/// @brief Scene with the swept quantity set. TO and CFO sweeps set the
/// same value on every TBS; tbs_count is applied per variant instead.
inline SceneConfig apply_sweep(SceneConfig s, SweepVariable v, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("sweep value must be finite");
  const double to = s.offsets.per_tbs.empty() ? 0.0 : s.offsets.per_tbs.front().time_offset;
  const double cf = s.offsets.per_tbs.empty() ? 0.0 : s.offsets.per_tbs.front().cfo / s.ofdm.subcarrier_spacing;
  switch (v) {
    case SweepVariable::snr_db: s.noise.snr_db = value; break;
    case SweepVariable::to_ns: set_uniform_offsets(s, value * 1e-9, cf); break;
    case SweepVariable::cfo_frac: set_uniform_offsets(s, to, value); break;
    case SweepVariable::tbs_count:
      if (value < 1 || value != std::floor(value) || std::size_t(value) > s.n_tbs())
        throw std::invalid_argument("tbs_count sweep value out of range");
      break;
  }
  return s;
}

inline void zero_offsets(SceneConfig& s) {
  for (auto& o : s.offsets.per_tbs) o = TbsOffset{};
}

struct ExperimentSpec {
  SceneConfig scene;
  PipelineConfig pipeline;
  SweepVariable variable{SweepVariable::snr_db};
  std::vector<double> values;
  std::vector<std::size_t> tbs_counts{3};  // ignored for a tbs_count sweep
  std::vector<bool> nlcc_modes{true};
  bool offsets_enabled{true};
  std::size_t trials{100};
  std::uint64_t master_seed{1};
  bool estimate_velocity{true};
  std::size_t threads{0};
  std::filesystem::path output_dir;  // empty: no files
  std::string name{"sweep"};          // file name prefix

  void validate() const {
    if (trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
    if (values.empty()) throw std::invalid_argument("experiment: no sweep values");
    if (nlcc_modes.empty()) throw std::invalid_argument("experiment: no NLCC mode");
    if (variable != SweepVariable::tbs_count && tbs_counts.empty()) throw std::invalid_argument("experiment: no TBS count");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("experiment: sweep values must be finite");
  }
};

/// @brief Trial t of an experiment uses derive_seed(master, t) at every
/// sweep point.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) { return derive_seed(master, trial); }

struct RmseRecord {
  double value{0.0};
  std::size_t n_tbs{0};
  bool nlcc{true};
  std::size_t trials{0};
  double rmse_location{0.0};
  double rmse_speed{kNaN};
  double rmse_heading{kNaN};
  double rmse_velocity_avg{kNaN};
  double ci_location{0.0};  // 95% half-widths, delta method
  double ci_speed{kNaN};
  double ci_heading{kNaN};
};

/// @brief RMSE and a delta-method 95% half-width from errors in trial order.
inline std::pair<double, double> rmse_with_ci(const std::vector<double>& e) {
  if (e.empty()) return {kNaN, kNaN};
  const double n = double(e.size());
  double m = 0.0;
  for (double x : e) m += x * x;
  m /= n;
  const double rmse = std::sqrt(m);
  if (e.size() < 2 || rmse == 0.0) return {rmse, 0.0};
  double v = 0.0;
  for (double x : e) v += (x * x - m) * (x * x - m);
  v /= n - 1.0;
  return {rmse, 1.96 * std::sqrt(v / n) / (2.0 * rmse)};
}

struct TrialRow {
  double value{0.0};
  std::size_t trial{0};
  std::uint64_t seed{0};
  VariantEstimate estimate;  // without profile details
};

struct SweepResult {
  std::vector<RmseRecord> records;
  std::vector<TrialRow> rows;
  std::vector<std::filesystem::path> files;

  const RmseRecord& find(double value, std::size_t n_tbs, bool nlcc) const {
    for (const auto& r : records)
      if (r.value == value && r.n_tbs == n_tbs && r.nlcc == nlcc) return r;
    throw std::out_of_range("SweepResult: no such record");
  }
};

namespace detail {

inline std::string curve_file_name(const ExperimentSpec& x, std::size_t n_tbs, bool nlcc) {
  std::string s = x.name + "_" + sweep_name(x.variable);
  if (x.variable != SweepVariable::tbs_count) s += "_I" + std::to_string(n_tbs);
  return s + (nlcc ? "_nlcc.csv" : "_no_nlcc.csv");
}

}  // namespace detail

inline void write_sweep_files(const ExperimentSpec& x, SweepResult& r) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::size_t, bool>> curves;
  for (const auto& rec : r.records) {
    const std::size_t key = x.variable == SweepVariable::tbs_count ? 0 : rec.n_tbs;
    if (std::find(curves.begin(), curves.end(), std::make_pair(key, rec.nlcc)) == curves.end())
      curves.push_back({key, rec.nlcc});
  }
  for (const auto& [key, nlcc] : curves) {
    const fs::path p = x.output_dir / detail::curve_file_name(x, key, nlcc);
    CsvWriter w(p, {sweep_name(x.variable), "n_tbs", "nlcc", "trials", "rmse_location_m", "ci95_location_m",
                    "rmse_speed_mps", "ci95_speed_mps", "rmse_heading_rad", "ci95_heading_rad", "rmse_velocity_avg"});
    for (const auto& rec : r.records) {
      const std::size_t k = x.variable == SweepVariable::tbs_count ? 0 : rec.n_tbs;
      if (k != key || rec.nlcc != nlcc) continue;
      w << rec.value << rec.n_tbs << rec.nlcc << rec.trials << rec.rmse_location << rec.ci_location << rec.rmse_speed
        << rec.ci_speed << rec.rmse_heading << rec.ci_heading << rec.rmse_velocity_avg;
      w.end_row();
    }
    w.close();
    r.files.push_back(p);
  }
  const fs::path tp = x.output_dir / (x.name + "_" + sweep_name(x.variable) + "_trials.csv");
  CsvWriter t(tp, {sweep_name(x.variable), "n_tbs", "nlcc", "trial", "seed", "x_m", "y_m", "location_error_m",
                   "speed_mps", "heading_rad", "speed_error_mps", "heading_error_rad"});
  for (const auto& row : r.rows) {
    const auto& e = row.estimate;
    t << row.value << e.variant.n_tbs << e.variant.nlcc << row.trial << row.seed << e.location.x << e.location.y
      << e.location_error << e.speed << e.heading << e.speed_error << e.heading_error;
    t.end_row();
  }
  t.close();
  r.files.push_back(tp);

  const fs::path mp = x.output_dir / (x.name + "_" + sweep_name(x.variable) + "_experiment.json");
  json meta;
  meta["scene"] = scene_to_json(x.scene);
  meta["pipeline"] = pipeline_to_json(x.pipeline);
  meta["scene_hash"] = hex64(scene_hash(x.scene));
  meta["sweep"] = {{"variable", sweep_name(x.variable)},
                   {"values", x.values},
                   {"tbs_counts", x.tbs_counts},
                   {"nlcc_modes", x.nlcc_modes},
                   {"offsets_enabled", x.offsets_enabled},
                   {"trials", x.trials},
                   {"master_seed", x.master_seed},
                   {"estimate_velocity", x.estimate_velocity}};
  std::ofstream m(mp, std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot open " + mp.string() + " for writing");
  m << meta.dump(2) << '\n';
  m.close();
  if (!m) throw std::runtime_error("write failed: " + mp.string());
  r.files.push_back(mp);
}

/// @brief Seeded Monte Carlo sweep. Results depend only on the experiment and the
/// master seed, never on the thread count.
inline SweepResult run_sweep(const ExperimentSpec& x) {
  x.validate();
  if (!x.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(x.output_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + x.output_dir.string() + ": " + ec.message());
  }
  SweepResult out;
  for (double value : x.values) {
    SceneConfig scene = apply_sweep(x.scene, x.variable, value);
    if (!x.offsets_enabled) zero_offsets(scene);
    TrialOptions opt;
    opt.estimate_velocity = x.estimate_velocity;
    for (bool nl : x.nlcc_modes) {
      if (x.variable == SweepVariable::tbs_count) opt.variants.push_back({std::size_t(value), nl});
      else
        for (std::size_t k : x.tbs_counts) opt.variants.push_back({k, nl});
    }
    std::vector<TrialResult> trials(x.trials);
    parallel_for(x.trials, x.threads, [&](std::size_t t) {
      const std::uint64_t seed = trial_seed(x.master_seed, t);
      try {
        trials[t] = run_trial(scene, seed, x.pipeline, opt);
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string(sweep_name(x.variable)) + "=" + format_double(value) + " trial " +
                                 std::to_string(t) + " (seed " + std::to_string(seed) + "): " + e.what());
      }
      trials[t].tbs.clear();
    });
    for (std::size_t v = 0; v < opt.variants.size(); ++v) {
      std::vector<double> el, es, eh;
      for (std::size_t t = 0; t < x.trials; ++t) {
        const auto& e = trials[t].estimates[v];
        el.push_back(e.location_error);
        if (x.estimate_velocity) {
          es.push_back(e.speed_error);
          eh.push_back(e.heading_error);
        }
        out.rows.push_back({value, t, trials[t].seed, e});
      }
      RmseRecord rec;
      rec.value = value;
      rec.n_tbs = opt.variants[v].n_tbs;
      rec.nlcc = opt.variants[v].nlcc;
      rec.trials = x.trials;
      std::tie(rec.rmse_location, rec.ci_location) = rmse_with_ci(el);
      if (x.estimate_velocity) {
        std::tie(rec.rmse_speed, rec.ci_speed) = rmse_with_ci(es);
        std::tie(rec.rmse_heading, rec.ci_heading) = rmse_with_ci(eh);
        rec.rmse_velocity_avg = 0.5 * (rec.rmse_speed + rec.rmse_heading);
      }
      out.records.push_back(rec);
    }
  }
  if (!x.output_dir.empty()) write_sweep_files(x, out);
  return out;
}

// ---------------------------------------------------------------- angles

struct AngleBenchRow {
  std::size_t trial{0};
  std::uint64_t seed{0};
  AngleEstimate proposed;
  AngleEstimate full;
  ComplexityReport predicted;
  double seconds_proposed{0.0};
  double seconds_full{0.0};

  bool same_cell() const { return proposed.aoa_index == full.aoa_index && proposed.aod_index == full.aod_index; }
  bool ops_match() const {
    return proposed.ops.total() == predicted.proposed_total && full.ops.total() == predicted.baseline_total;
  }
};

struct AngleBenchResult {
  std::vector<AngleBenchRow> rows;
  bool all_same_cell() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.same_cell(); });
  }
  bool all_ops_match() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.ops_match(); });
  }
  double wall_clock_ratio() const {
    double p = 0.0, f = 0.0;
    for (const auto& r : rows) {
      p += r.seconds_proposed;
      f += r.seconds_full;
    }
    return f / p;
  }
};

/// @brief Two-stage estimator against exhaustive 2-D MUSIC on the same
/// echo of TBS `tbs`, one realization per trial. Runs serially so the
/// timings are comparable.
inline AngleBenchResult angle_benchmark(const SceneConfig& scene, const AngleEstimatorConfig& cfg, std::size_t trials,
                                        std::uint64_t master_seed, std::size_t tbs = 0) {
  scene.validate();
  if (trials < 1) throw std::invalid_argument("angle_benchmark: trials must be >= 1");
  using clock = std::chrono::steady_clock;
  const double dl = scene.array.spacing_over_lambda(scene.ofdm);
  AngleBenchResult out;
  for (std::size_t t = 0; t < trials; ++t) {
    AngleBenchRow row;
    row.trial = t;
    row.seed = trial_seed(master_seed, t);
    const EchoCube echo = synthesize_tbs_echo(scene, tbs, row.seed);
    const Cube obs = echo.nlos_observation();
    auto t0 = clock::now();
    row.proposed = estimate_angles(obs, echo.tx_symbols, dl, cfg);
    auto t1 = clock::now();
    row.full = full_grid_music(obs, echo.tx_symbols, dl, cfg);
    auto t2 = clock::now();
    row.seconds_proposed = std::chrono::duration<double>(t1 - t0).count();
    row.seconds_full = std::chrono::duration<double>(t2 - t1).count();
    const std::size_t stride = cfg.covariance.snapshot_stride;
    const std::uint64_t total = scene.ofdm.n_subcarriers * scene.ofdm.n_symbols;
    row.predicted = complexity_report(obs.n_rx, echo.tx_symbols.n_streams(), (total + stride - 1) / stride, dl,
                                      cfg.aoa_step, cfg.aod_step, row.proposed.rough_mu_aoa, row.proposed.rough_mu_aod);
    out.rows.push_back(std::move(row));
  }
  return out;
}

/// @brief angle_bench.csv holds only seed-determined columns;
/// angle_bench_timing.csv holds the wall-clock measurements.
inline std::vector<std::filesystem::path> write_angle_bench(const AngleBenchResult& r, const std::filesystem::path& dir) {
  const auto p = dir / "angle_bench.csv";
  CsvWriter w(p, {"trial", "seed", "aoa_index", "aod_index", "full_aoa_index", "full_aod_index", "same_cell",
                  "aoa_local_rad", "aod_local_rad", "spectrum_evals", "full_spectrum_evals", "proposed_ops", "full_ops",
                  "predicted_proposed_ops", "predicted_full_ops", "ops_ratio"});
  for (const auto& x : r.rows) {
    w << x.trial << x.seed << x.proposed.aoa_index << x.proposed.aod_index << x.full.aoa_index << x.full.aod_index
      << x.same_cell() << x.proposed.aoa << x.proposed.aod << x.proposed.spectrum_evals << x.full.spectrum_evals
      << x.proposed.ops.total() << x.full.ops.total() << x.predicted.proposed_total << x.predicted.baseline_total
      << x.predicted.ratio();
    w.end_row();
  }
  w.close();
  const auto q = dir / "angle_bench_timing.csv";
  CsvWriter tw(q, {"trial", "seconds_proposed", "seconds_full", "ratio"});
  for (const auto& x : r.rows) {
    tw << x.trial << x.seconds_proposed << x.seconds_full << x.seconds_full / x.seconds_proposed;
    tw.end_row();
  }
  tw.close();
  return {p, q};
}

// ---------------------------------------------------------------- SNR gain

struct SnrGainMeasurement {
  std::size_t n_subcarriers{0};
  std::size_t n_symbols{0};
  std::size_t n_tbs{0};
  std::size_t trials{0};
  double input_snr_range{0.0};      // feature-vector element SNR
  double input_snr_velocity{0.0};
  double output_snr_position{0.0};  // fused peak over fused noise floor
  double output_snr_velocity{0.0};
  double peak_cell_snr_position{0.0};  // noise taken at the peak cell itself
  double peak_cell_snr_velocity{0.0};
  SnrGainReport report;
};

namespace detail {

// sum_{m'} conj(e[m'-1]) exp(j 2pi m' T f) for explicit velocity cells.
inline cdouble velocity_value(const Eigen::VectorXcd& e, double speed, double heading, double aoa, double aod,
                              const OfdmConfig& ofdm) {
  const double w = kTwoPi * ofdm.symbol_duration() * bistatic_doppler(speed, heading, aod, aoa, ofdm.carrier_freq);
  cdouble acc{0.0, 0.0};
  for (Eigen::Index m = 0; m < e.size(); ++m) acc += std::conj(e[m]) * std::polar(1.0, double(m + 1) * w);
  return acc;
}

inline double wrap_distance(double d, double period) {
  const double r = std::fmod(std::abs(d), period);
  return std::min(r, period - r);
}

}  // namespace detail

/// @brief Measures the coherent gain of the fused position and velocity
/// profiles. Each TBS is processed with and without its noise draw at the
/// true angles; the difference isolates the noise. Output noise power is
/// the mean over `far_cells` random cells away from the target response.
inline std::vector<SnrGainMeasurement> measure_snr_gain(const SceneConfig& scene, const std::vector<std::size_t>& tbs_counts,
                                                        std::size_t trials, std::uint64_t master_seed,
                                                        std::size_t far_cells = 64) {
  scene.validate();
  if (trials < 1 || tbs_counts.empty()) throw std::invalid_argument("measure_snr_gain: empty experiment");
  const std::size_t top = *std::max_element(tbs_counts.begin(), tbs_counts.end());
  if (top < 1 || top > scene.n_tbs()) throw std::invalid_argument("measure_snr_gain: TBS count out of range");
  const auto& g = scene.geometry;
  const auto& o = scene.ofdm;
  const double range_period = kSpeedOfLight / o.subcarrier_spacing;
  const double range_guard = 5.0 * kSpeedOfLight / (double(o.n_subcarriers) * o.subcarrier_spacing);
  const double doppler_period = 1.0 / o.symbol_duration();
  const double doppler_guard = 5.0 / (double(o.n_symbols) * o.symbol_duration());
  PipelineConfig pipe;

  // Per I: accumulated signal and noise powers.
  struct Acc {
    double in_sig_r{0}, in_noise_r{0}, in_sig_v{0}, in_noise_v{0};
    double out_sig_p{0}, out_noise_p{0}, out_sig_v{0}, out_noise_v{0}, peak_noise_p{0}, peak_noise_v{0};
  };
  std::vector<Acc> acc(top);
  std::vector<double> truth_range(top), truth_doppler(top);
  for (std::size_t i = 0; i < top; ++i) {
    const auto pp = derive_path_parameters(g, i);
    truth_range[i] = pp.r_i_ns + pp.r_p_ns;
    truth_doppler[i] = bistatic_doppler(g, i, o.carrier_freq);
  }
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t seed = trial_seed(master_seed, t);
    Rng cells(derive_seed(seed, 0x400));
    std::vector<Point2> pcell;
    std::vector<std::pair<double, double>> vcell;
    while (pcell.size() < far_cells) {
      const double x = g.target_position.x + (double(cells.bits() >> 11) * 0x1.0p-53 - 0.5) * range_period;
      const double y = g.target_position.y + (double(cells.bits() >> 11) * 0x1.0p-53 - 0.5) * range_period;
      bool ok = true;
      for (std::size_t i = 0; i < top; ++i) {
        const double r = distance({x, y}, g.tbs_positions[i]) + distance({x, y}, g.pbs_position);
        ok = ok && detail::wrap_distance(r - truth_range[i], range_period) > range_guard;
      }
      if (ok) pcell.push_back({x, y});
    }
    while (vcell.size() < far_cells) {
      const double v = double(cells.bits() >> 11) * 0x1.0p-53 * 1000.0;
      const double th = double(cells.bits() >> 11) * 0x1.0p-53 * kTwoPi;
      bool ok = true;
      for (std::size_t i = 0; i < top; ++i) {
        const auto pp = derive_path_parameters(g, i);
        const double f = bistatic_doppler(v, th, pp.aod_nlos, pp.aoa_nlos, o.carrier_freq);
        ok = ok && detail::wrap_distance(f - truth_doppler[i], doppler_period) > doppler_guard;
      }
      if (ok) vcell.push_back({v, th});
    }
    // Running sums over TBSs of clean and noisy profile values.
    cdouble p_truth_c{0, 0}, p_truth_n{0, 0}, v_truth_c{0, 0}, v_truth_n{0, 0};
    std::vector<cdouble> p_far(far_cells), v_far(far_cells);
    for (std::size_t i = 0; i < top; ++i) {
      EchoCube echo = synthesize_tbs_echo(scene, i, seed);
      const TbsOutcome noisy = process_tbs(scene, echo, pipe, true);
      echo.nlos_noise.data.setZero();
      echo.los_noise.data.setZero();
      const TbsOutcome clean = process_tbs(scene, echo, pipe, true);
      const auto& fn = noisy.corrected;
      const auto& fc = clean.corrected;
      const double in_sr = fc.range_fv.squaredNorm(), in_nr = (fn.range_fv - fc.range_fv).squaredNorm();
      const double in_sv = fc.velocity_fv.squaredNorm(), in_nv = (fn.velocity_fv - fc.velocity_fv).squaredNorm();

      std::vector<double> d(far_cells + 1);
      d[0] = truth_range[i];
      for (std::size_t c = 0; c < far_cells; ++c)
        d[c + 1] = distance(pcell[c], g.tbs_positions[i]) + distance(pcell[c], g.pbs_position);
      const Eigen::VectorXcd pn = position_profile_direct(fn.range_fv, d, o).values;
      const Eigen::VectorXcd pc = position_profile_direct(fc.range_fv, d, o).values;
      p_truth_n += pn[0];
      p_truth_c += pc[0];
      for (std::size_t c = 0; c < far_cells; ++c) p_far[c] += pn[Eigen::Index(c + 1)] - pc[Eigen::Index(c + 1)];

      const double aoa = noisy.aoa_global, aod = noisy.aod_global;
      v_truth_n += detail::velocity_value(fn.velocity_fv, g.target_speed, g.target_heading, aoa, aod, o);
      v_truth_c += detail::velocity_value(fc.velocity_fv, g.target_speed, g.target_heading, aoa, aod, o);
      for (std::size_t c = 0; c < far_cells; ++c)
        v_far[c] += detail::velocity_value(fn.velocity_fv, vcell[c].first, vcell[c].second, aoa, aod, o) -
                    detail::velocity_value(fc.velocity_fv, vcell[c].first, vcell[c].second, aoa, aod, o);

      // Prefix i+1 closes the sums for I = i+1; earlier TBSs re-count their
      // input powers into every larger I.
      for (std::size_t k = i; k < top; ++k) {
        acc[k].in_sig_r += in_sr;
        acc[k].in_noise_r += in_nr;
        acc[k].in_sig_v += in_sv;
        acc[k].in_noise_v += in_nv;
      }
      const double n = double(i + 1);
      Acc& a = acc[i];
      a.out_sig_p += std::norm(p_truth_c / n);
      a.out_sig_v += std::norm(v_truth_c / n);
      a.peak_noise_p += std::norm((p_truth_n - p_truth_c) / n);
      a.peak_noise_v += std::norm((v_truth_n - v_truth_c) / n);
      double fp = 0.0, fv = 0.0;
      for (std::size_t c = 0; c < far_cells; ++c) {
        fp += std::norm(p_far[c] / n);
        fv += std::norm(v_far[c] / n);
      }
      a.out_noise_p += fp / double(far_cells);
      a.out_noise_v += fv / double(far_cells);
    }
  }
  std::vector<SnrGainMeasurement> out;
  for (std::size_t k : tbs_counts) {
    const Acc& a = acc.at(k - 1);
    SnrGainMeasurement m;
    m.n_subcarriers = o.n_subcarriers;
    m.n_symbols = o.n_symbols;
    m.n_tbs = k;
    m.trials = trials;
    m.input_snr_range = a.in_sig_r / a.in_noise_r;
    m.input_snr_velocity = a.in_sig_v / a.in_noise_v;
    m.output_snr_position = a.out_sig_p / a.out_noise_p;
    m.output_snr_velocity = a.out_sig_v / a.out_noise_v;
    m.peak_cell_snr_position = a.out_sig_p / a.peak_noise_p;
    m.peak_cell_snr_velocity = a.out_sig_v / a.peak_noise_v;
    m.report = snr_gain_report(o, k, m.output_snr_position / m.input_snr_range,
                               m.output_snr_velocity / m.input_snr_velocity);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------- exports

inline std::filesystem::path write_position_heatmap(const Profile& p, const PositionGrid& g,
                                                    const std::filesystem::path& path) {
  CsvWriter w(path, {"x_m", "y_m", "magnitude"});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point2 c = g.cell(i);
    w << c.x << c.y << std::abs(p.values[Eigen::Index(i)]);
    w.end_row();
  }
  w.close();
  return path;
}

/// @brief Every `stride`-th speed and heading cell.
inline std::filesystem::path write_velocity_heatmap(const Profile& p, const VelocityGrid& g, std::size_t stride,
                                                    const std::filesystem::path& path) {
  if (stride < 1) throw std::invalid_argument("heatmap stride must be >= 1");
  CsvWriter w(path, {"heading_rad", "speed_mps", "magnitude"});
  for (std::size_t d = 0; d < g.n_angles; d += stride)
    for (std::size_t s = 0; s < g.n_speeds; s += stride) {
      const std::size_t z = s + g.n_speeds * d;
      w << g.heading(z) << g.speed(z) << std::abs(p.values[Eigen::Index(z)]);
      w.end_row();
    }
  w.close();
  return path;
}

inline std::filesystem::path write_feature_vector(const Eigen::VectorXcd& v, const std::filesystem::path& path) {
  CsvWriter w(path, {"index", "re", "im"});
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    w << std::size_t(i + 1) << v[i].real() << v[i].imag();
    w.end_row();
  }
  w.close();
  return path;
}

}  // namespace isac
