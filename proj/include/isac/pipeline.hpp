// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "isac/angle_est.hpp"
#include "isac/channel.hpp"
#include "isac/fusion.hpp"
#include "isac/preprocess.hpp"
#include "isac/scene.hpp"

namespace isac {

/// @brief Processing settings shared by every TBS of a trial.
struct PipelineConfig {
  AngleEstimatorConfig angle;
  SymbolWeighting weighting{SymbolWeighting::phase_only};
  PositionSearchConfig position;
  VelocitySearchConfig velocity;
};

/// @brief Everything one TBS contributes to fusion.
struct TbsOutcome {
  std::size_t tbs_index{0};
  AngleEstimate angles;
  double aoa_global{0.0};
  double aod_global{0.0};
  FeatureVectors corrected;    // after NLoS/LoS cross-correlation
  FeatureVectors uncorrected;  // NLoS matrix alone
};

/// @brief Angle estimation, compensation, cross-correlation and
/// compression of one echo. With oracle_angles the true geometry replaces
/// the estimator.
inline TbsOutcome process_tbs(const SceneConfig& scene, const EchoCube& echo, const PipelineConfig& cfg,
                              bool oracle_angles = false) {
  const std::size_t i = echo.tbs_index;
  const double dl = scene.array.spacing_over_lambda(scene.ofdm);
  const Cube obs = echo.nlos_observation();
  TbsOutcome out;
  out.tbs_index = i;
  if (oracle_angles) {
    const auto pp = derive_path_parameters(scene.geometry, i);
    out.angles.aoa = pp.aoa_nlos_local;
    out.angles.aod = pp.aod_nlos_local;
  } else {
    out.angles = estimate_angles(obs, echo.tx_symbols, dl, cfg.angle);
  }
  out.aoa_global = wrap_pi(out.angles.aoa + scene.geometry.pbs_broadside);
  out.aod_global = wrap_pi(out.angles.aod + scene.geometry.tbs_broadside.at(i));
  const auto dn = compensate_accumulate_nlos(obs, echo.tx_symbols, out.angles.aoa, out.angles.aod, dl, i, cfg.weighting);
  const auto ds = compensate_accumulate_los(echo.los_observation(), echo.tx_symbols, scene, i, cfg.weighting);
  out.corrected = extract_features(nlcc(dn, ds));
  out.uncorrected = extract_features(dn);
  return out;
}

/// @brief Fusion inputs from the first `count` outcomes.
inline std::vector<FusionInput> fusion_inputs(const SceneConfig& scene, const std::vector<TbsOutcome>& outcomes,
                                              std::size_t count, bool use_nlcc) {
  if (count < 1 || count > outcomes.size()) throw std::invalid_argument("fusion_inputs: bad TBS count");
  std::vector<FusionInput> in;
  in.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto& o = outcomes[k];
    const auto& fv = use_nlcc ? o.corrected : o.uncorrected;
    in.push_back({scene.geometry.tbs_positions.at(o.tbs_index), fv.range_fv, fv.velocity_fv, o.aoa_global,
                  o.aod_global});
  }
  return in;
}

/// @brief Bistatic range maximizing the single-TBS range profile, scanned
/// coarsely over [min_range, max_range] and then refined.
inline double estimate_bistatic_range(const Eigen::VectorXcd& range_fv, const OfdmConfig& ofdm, double min_range,
                                      double max_range, double coarse_step = 0.5, double fine_step = 0.001) {
  if (!(max_range > min_range)) throw std::invalid_argument("estimate_bistatic_range: empty range");
  auto scan = [&](double lo, double hi, double step) {
    std::vector<double> r;
    for (std::size_t k = 0;; ++k) {
      const double v = lo + double(k) * step;
      if (v > hi + 1e-12) break;
      r.push_back(v);
    }
    const Profile p = position_profile_direct(range_fv, r, ofdm);
    return r[p.peak_index];
  };
  const double coarse = scan(min_range, max_range, coarse_step);
  return scan(coarse - coarse_step, coarse + coarse_step, fine_step);
}

/// @brief Single-TBS fallback: the AoA ray from the PBS intersected with
/// the estimated bistatic-range ellipse.
inline Point2 locate_single_tbs(const SceneConfig& scene, const TbsOutcome& o, bool use_nlcc = true) {
  const Point2 b = scene.geometry.tbs_positions.at(o.tbs_index);
  const Point2 p = scene.geometry.pbs_position;
  const double base = distance(b, p);
  const auto& fv = use_nlcc ? o.corrected : o.uncorrected;
  const double r_sum = estimate_bistatic_range(fv.range_fv, scene.ofdm, base, base + 400.0);
  const double ux = std::cos(o.aoa_global), uy = std::sin(o.aoa_global);
  const double proj = ux * (p.x - b.x) + uy * (p.y - b.y);
  const double den = 2.0 * (r_sum + proj);
  if (!(std::abs(den) > 0.0)) throw std::runtime_error("locate_single_tbs: degenerate geometry");
  const double rho = (r_sum * r_sum - base * base) / den;
  return {p.x + rho * ux, p.y + rho * uy};
}

}  // namespace isac
