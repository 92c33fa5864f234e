// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "isac/scene.hpp"

namespace isac {

/// @brief Square grid of Q x Q cells. Cell index p*Q + j sits at
/// (origin.x + p*step, origin.y + j*step).
struct PositionGrid {
  Point2 origin;
  double step{0.01};
  std::size_t side{1};

  std::size_t size() const { return side * side; }
  Point2 cell(std::size_t idx) const {
    if (idx >= size()) throw std::out_of_range("PositionGrid::cell");
    return {origin.x + double(idx / side) * step, origin.y + double(idx % side) * step};
  }
  Point2 center() const {
    const double h = double(side - 1) * step / 2.0;
    return {origin.x + h, origin.y + h};
  }
};

struct SearchScope {
  Point2 center{40.0, 40.0};
  double width{2.0};  // meters, side of the square window
};

inline PositionGrid build_position_grid(Point2 origin, double step, std::size_t side) {
  if (!(step > 0.0)) throw std::invalid_argument("build_position_grid: step must be > 0");
  if (side < 1) throw std::invalid_argument("build_position_grid: side must be >= 1");
  return {origin, step, side};
}

/// @brief Window of side `scope.width` centred on `scope.center`;
/// Q = round(width / step) + 1 so the centre is a cell.
inline PositionGrid build_position_grid(const SearchScope& scope, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("build_position_grid: step must be > 0");
  if (!(scope.width >= 0.0)) throw std::invalid_argument("build_position_grid: empty scope");
  const auto side = std::size_t(std::llround(scope.width / step)) + 1;
  const double h = double(side - 1) * step / 2.0;
  return {{scope.center.x - h, scope.center.y - h}, step, side};
}

/// @brief |cell - tbs| + |cell - pbs| per cell.
inline std::vector<double> compensated_distances(const PositionGrid& grid, Point2 tbs, Point2 pbs) {
  std::vector<double> r(grid.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Point2 c = grid.cell(i);
    r[i] = distance(c, tbs) + distance(c, pbs);
  }
  return r;
}

/// @brief Entry (n' - 1, p) = exp(-j 2pi n' df r_p / c), n' = 1..N_c-1.
inline Eigen::MatrixXcd delay_matching_matrix(const std::vector<double>& distances, const OfdmConfig& ofdm) {
  const auto rows = Eigen::Index(ofdm.n_subcarriers - 1);
  Eigen::MatrixXcd g(rows, Eigen::Index(distances.size()));
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    const double w = -kTwoPi * ofdm.subcarrier_spacing * distances[std::size_t(c)] / kSpeedOfLight;
    for (Eigen::Index n = 0; n < rows; ++n) g(n, c) = std::polar(1.0, double(n + 1) * w);
  }
  return g;
}

enum class ProfileKind { position, velocity, fused };

struct Profile {
  Eigen::VectorXcd values;
  std::size_t peak_index{0};
  std::array<double, 2> peak_coordinates{0.0, 0.0};
  ProfileKind kind{ProfileKind::position};

  double peak_magnitude() const { return std::abs(values[Eigen::Index(peak_index)]); }
};

// argmax |v|, lowest index on ties.
inline std::size_t peak_of(const Eigen::VectorXcd& v) {
  if (v.size() == 0) throw std::invalid_argument("peak_of: empty profile");
  std::size_t best = 0;
  double bv = std::norm(v[0]);
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    const double x = std::norm(v[i]);
    if (x > bv) {
      bv = x;
      best = std::size_t(i);
    }
  }
  return best;
}

inline Profile make_profile(Eigen::VectorXcd values, ProfileKind kind) {
  Profile p;
  p.values = std::move(values);
  p.peak_index = peak_of(p.values);
  p.kind = kind;
  return p;
}

inline void set_peak_coordinates(Profile& p, const PositionGrid& g) {
  const Point2 c = g.cell(p.peak_index);
  p.peak_coordinates = {c.x, c.y};
}

/// @brief p = f^H G.
inline Profile position_profile(const Eigen::VectorXcd& range_fv, const Eigen::MatrixXcd& matching) {
  if (range_fv.size() != matching.rows()) throw std::invalid_argument("position_profile: dimension mismatch");
  Eigen::VectorXcd v = (range_fv.adjoint() * matching).transpose();
  return make_profile(std::move(v), ProfileKind::position);
}

namespace detail {

// out[c] = sum_{k=1..K} coef[k-1] * z[c]^k by Horner, split re/im so the
// cell loop vectorizes.
inline void horner_batch(const Eigen::VectorXcd& coef, const double* zr, const double* zi, double* outr, double* outi,
                         std::size_t count) {
  const Eigen::Index k = coef.size();
  for (std::size_t c = 0; c < count; ++c) {
    outr[c] = coef[k - 1].real();
    outi[c] = coef[k - 1].imag();
  }
  for (Eigen::Index t = k - 2; t >= 0; --t) {
    const double cr = coef[t].real(), ci = coef[t].imag();
    for (std::size_t c = 0; c < count; ++c) {
      const double ar = outr[c] * zr[c] - outi[c] * zi[c] + cr;
      const double ai = outr[c] * zi[c] + outi[c] * zr[c] + ci;
      outr[c] = ar;
      outi[c] = ai;
    }
  }
  for (std::size_t c = 0; c < count; ++c) {
    const double ar = outr[c] * zr[c] - outi[c] * zi[c];
    const double ai = outr[c] * zi[c] + outi[c] * zr[c];
    outr[c] = ar;
    outi[c] = ai;
  }
}

}  // namespace detail

/// @brief Same values as position_profile(range_fv, delay_matching_matrix(...))
/// without materializing the matrix.
inline Profile position_profile_direct(const Eigen::VectorXcd& range_fv, const std::vector<double>& distances,
                                       const OfdmConfig& ofdm) {
  if (std::size_t(range_fv.size()) != ofdm.n_subcarriers - 1)
    throw std::invalid_argument("position_profile_direct: range feature vector length");
  const std::size_t n = distances.size();
  std::vector<double> zr(n), zi(n), outr(n), oi(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double w = -kTwoPi * ofdm.subcarrier_spacing * distances[c] / kSpeedOfLight;
    zr[c] = std::cos(w);
    zi[c] = std::sin(w);
  }
  const Eigen::VectorXcd coef = range_fv.conjugate();
  detail::horner_batch(coef, zr.data(), zi.data(), outr.data(), oi.data(), n);
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < n; ++c) v[Eigen::Index(c)] = {outr[c], oi[c]};
  return make_profile(std::move(v), ProfileKind::position);
}

/// @brief Mean of equally sized complex profiles.
inline Profile fuse_profiles(const std::vector<Profile>& profiles) {
  if (profiles.empty()) throw std::invalid_argument("fuse_profiles: no profiles");
  Eigen::VectorXcd acc = profiles.front().values;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    if (profiles[i].values.size() != acc.size()) throw std::invalid_argument("fuse_profiles: length mismatch");
    acc += profiles[i].values;
  }
  acc /= double(profiles.size());
  return make_profile(std::move(acc), ProfileKind::fused);
}

/// @brief Speeds speed_min + s*speed_step (s < S) by headings d*angle_step
/// (d < D) over [0, 2pi). Cell z = s + S*d.
struct VelocityGrid {
  double speed_min{0.0};
  double speed_step{0.1};
  std::size_t n_speeds{541};
  double angle_step{0.001};
  std::size_t n_angles{6284};

  std::size_t size() const { return n_speeds * n_angles; }
  double speed(std::size_t z) const { return speed_min + double(z % n_speeds) * speed_step; }
  double heading(std::size_t z) const { return double(z / n_speeds) * angle_step; }
  double speed_max() const { return speed_min + double(n_speeds - 1) * speed_step; }
};

inline VelocityGrid build_velocity_grid(double speed_min, double speed_max, double speed_step, double angle_step) {
  if (!(speed_step > 0.0) || !(angle_step > 0.0)) throw std::invalid_argument("build_velocity_grid: steps must be > 0");
  if (!(speed_min >= 0.0) || !(speed_max >= speed_min)) throw std::invalid_argument("build_velocity_grid: bad speed range");
  VelocityGrid g;
  g.speed_min = speed_min;
  g.speed_step = speed_step;
  g.n_speeds = std::size_t(std::llround((speed_max - speed_min) / speed_step)) + 1;
  g.angle_step = angle_step;
  g.n_angles = std::size_t(std::floor((kTwoPi - 1e-12) / angle_step)) + 1;
  return g;
}

/// @brief Row z, column m'-1 = exp(j 2pi m' T f_z), with f_z the bistatic
/// Doppler of cell z under global angles aod (TBS side) and aoa (PBS side).
inline Eigen::MatrixXcd doppler_matching_matrix(const VelocityGrid& grid, double aoa, double aod,
                                                const OfdmConfig& ofdm) {
  const auto cols = Eigen::Index(ofdm.n_symbols - 1);
  const double T = ofdm.symbol_duration();
  Eigen::MatrixXcd s(Eigen::Index(grid.size()), cols);
  for (std::size_t z = 0; z < grid.size(); ++z) {
    const double f = bistatic_doppler(grid.speed(z), grid.heading(z), aod, aoa, ofdm.carrier_freq);
    for (Eigen::Index m = 0; m < cols; ++m) s(Eigen::Index(z), m) = std::polar(1.0, kTwoPi * double(m + 1) * T * f);
  }
  return s;
}

/// @brief v = S e^*.
inline Profile velocity_profile(const Eigen::VectorXcd& velocity_fv, const Eigen::MatrixXcd& matching) {
  if (velocity_fv.size() != matching.cols()) throw std::invalid_argument("velocity_profile: dimension mismatch");
  Eigen::VectorXcd v = matching * velocity_fv.conjugate();
  return make_profile(std::move(v), ProfileKind::velocity);
}

/// @brief Matrix-free velocity profile, one heading column at a time.
inline Profile velocity_profile_direct(const Eigen::VectorXcd& velocity_fv, const VelocityGrid& grid, double aoa,
                                       double aod, const OfdmConfig& ofdm) {
  if (std::size_t(velocity_fv.size()) != ofdm.n_symbols - 1)
    throw std::invalid_argument("velocity_profile_direct: velocity feature vector length");
  const std::size_t s_count = grid.n_speeds;
  const double T = ofdm.symbol_duration();
  const double k0 = -ofdm.carrier_freq / kSpeedOfLight;
  std::vector<double> zr(s_count), zi(s_count), outr(s_count), oi(s_count);
  const Eigen::VectorXcd coef = velocity_fv.conjugate();
  Eigen::VectorXcd v(Eigen::Index(grid.size()));
  for (std::size_t d = 0; d < grid.n_angles; ++d) {
    const double th = double(d) * grid.angle_step;
    const double k = k0 * (std::cos(th - aoa) + std::cos(th - aod));
    for (std::size_t s = 0; s < s_count; ++s) {
      const double w = kTwoPi * T * (grid.speed_min + double(s) * grid.speed_step) * k;
      zr[s] = std::cos(w);
      zi[s] = std::sin(w);
    }
    detail::horner_batch(coef, zr.data(), zi.data(), outr.data(), oi.data(), s_count);
    const std::size_t base = d * s_count;
    for (std::size_t s = 0; s < s_count; ++s) v[Eigen::Index(base + s)] = {outr[s], oi[s]};
  }
  return make_profile(std::move(v), ProfileKind::velocity);
}

inline void set_peak_coordinates(Profile& p, const VelocityGrid& g) {
  p.peak_coordinates = {g.speed(p.peak_index), g.heading(p.peak_index)};
}

/// @brief Per-TBS inputs to fusion.
struct FusionInput {
  Point2 tbs_position;
  Eigen::VectorXcd range_fv;
  Eigen::VectorXcd velocity_fv;
  double aoa{0.0};  // global, PBS -> target
  double aod{0.0};  // global, TBS -> target
};

struct LocationResult {
  Point2 location;
  Profile fused;
  std::vector<Profile> per_tbs;
  PositionGrid grid;
};

inline LocationResult locate_on_grid(const std::vector<FusionInput>& in, Point2 pbs, const PositionGrid& grid,
                                     const OfdmConfig& ofdm, bool keep_per_tbs = false) {
  if (in.empty()) throw std::invalid_argument("locate: no TBS inputs");
  std::vector<Profile> ps;
  ps.reserve(in.size());
  for (const auto& x : in)
    ps.push_back(position_profile_direct(x.range_fv, compensated_distances(grid, x.tbs_position, pbs), ofdm));
  LocationResult r;
  r.fused = fuse_profiles(ps);
  set_peak_coordinates(r.fused, grid);
  r.location = grid.cell(r.fused.peak_index);
  r.grid = grid;
  if (keep_per_tbs) {
    for (auto& p : ps) set_peak_coordinates(p, grid);
    r.per_tbs = std::move(ps);
  }
  return r;
}

struct PositionSearchConfig {
  SearchScope scope{{40.0, 40.0}, 2.0};
  double step{0.01};
  bool coarse_to_fine{false};
  SearchScope coarse_scope{{40.0, 40.0}, 80.0};
  double coarse_step{1.0};
};

/// @brief Fused grid search; with coarse_to_fine the fine window is
/// re-centred on the coarse peak first.
inline LocationResult locate(const std::vector<FusionInput>& in, Point2 pbs, const PositionSearchConfig& cfg,
                             const OfdmConfig& ofdm, bool keep_per_tbs = false) {
  SearchScope fine = cfg.scope;
  if (cfg.coarse_to_fine) {
    const auto coarse = locate_on_grid(in, pbs, build_position_grid(cfg.coarse_scope, cfg.coarse_step), ofdm);
    fine.center = coarse.location;
  }
  return locate_on_grid(in, pbs, build_position_grid(fine, cfg.step), ofdm, keep_per_tbs);
}

struct VelocitySearchConfig {
  double speed_min{0.0};
  double speed_max{54.0};
  double speed_step{0.1};
  double angle_step{0.001};
};

struct VelocityResult {
  double speed{0.0};
  double heading{0.0};
  Profile fused;
  std::vector<Profile> per_tbs;
  VelocityGrid grid;
};

inline VelocityResult estimate_velocity(const std::vector<FusionInput>& in, const VelocitySearchConfig& cfg,
                                        const OfdmConfig& ofdm, bool keep_per_tbs = false) {
  if (in.empty()) throw std::invalid_argument("estimate_velocity: no TBS inputs");
  const auto grid = build_velocity_grid(cfg.speed_min, cfg.speed_max, cfg.speed_step, cfg.angle_step);
  VelocityResult r;
  r.grid = grid;
  std::vector<Profile> ps;
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(Eigen::Index(grid.size()));
  for (const auto& x : in) {
    Profile p = velocity_profile_direct(x.velocity_fv, grid, x.aoa, x.aod, ofdm);
    acc += p.values;
    if (keep_per_tbs) {
      set_peak_coordinates(p, grid);
      ps.push_back(std::move(p));
    }
  }
  acc /= double(in.size());
  r.fused = make_profile(std::move(acc), ProfileKind::fused);
  set_peak_coordinates(r.fused, grid);
  r.speed = grid.speed(r.fused.peak_index);
  r.heading = grid.heading(r.fused.peak_index);
  r.per_tbs = std::move(ps);
  return r;
}

}  // namespace isac
