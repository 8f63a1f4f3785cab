// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file synthesis.hpp
 * @brief Phase-gradient codebooks and scalar far-field evaluation.
 *
 * Directions use radar (azimuth, elevation) angles in degrees: azimuth turns
 * from +z towards +x, elevation from the x-z plane towards +y, so
 * u(az, el) = (sin az cos el, sin el, cos az cos el) and the upper hemisphere
 * is az, el in [-90, 90].
 */

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "qphm/geometry.hpp"
#include "qphm/types.hpp"

namespace qphm {

struct BeamTarget {
  double azimuth = 0.0;
  double elevation = 0.0;

  bool operator==(const BeamTarget&) const = default;
  auto operator<=>(const BeamTarget&) const = default;
};

inline void validate(const BeamTarget& t) {
  require(t.azimuth >= -90.0 && t.azimuth <= 90.0 && t.elevation >= -90.0 && t.elevation <= 90.0,
          Errc::invalid_parameter, "beam angles must lie in [-90, 90] degrees");
}

inline double deg2rad(double d) { return d * pi / 180.0; }

inline Point3 direction(const BeamTarget& t) {
  const double az = deg2rad(t.azimuth);
  const double el = deg2rad(t.elevation);
  return {std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)};
}

/// Quantizes a phase to one of 2^k_bits uniform levels starting at 0; ties go
/// to the lower level.
inline int quantize_phase(double phase, int k_bits) {
  const int levels = 1 << k_bits;
  const double two_pi = 2.0 * pi;
  double w = phase - two_pi * std::floor(phase / two_pi);
  if (w >= two_pi) w -= two_pi;
  const double q = w / (two_pi / levels);
  const int idx = static_cast<int>(std::ceil(q - 0.5));
  return ((idx % levels) + levels) % levels;
}

/// Generalized-Snell codebook: unit u gets the level nearest to
/// -kappa ((u_r - u_i) . r_u), with u_i the propagation direction of the
/// incident wave (arriving from `incident`) and r_u the cell centre.
inline Codebook phase_gradient_codebook(ArrayLayout layout, Pitch pitch, const BeamTarget& incident,
                                        const BeamTarget& reflect, double wavelength, int k_bits) {
  validate(layout);
  validate(incident);
  validate(reflect);
  require(wavelength > 0.0, Errc::invalid_parameter, "wavelength must be positive");
  require(k_bits >= 1 && k_bits <= max_k_bits, Errc::invalid_parameter, "invalid k_bits");
  const double kappa = 2.0 * pi / wavelength;
  const Point3 ui = direction(incident) * -1.0;
  const Point3 ur = direction(reflect);
  const Point3 g = ur - ui;
  Codebook cb(layout.m, layout.n);
  for (Index i = 0; i < layout.m; ++i)
    for (Index j = 0; j < layout.n; ++j) {
      const Point3 centre{(static_cast<double>(i) + 0.5) * pitch.px,
                          (static_cast<double>(j) + 0.5) * pitch.py, 0.0};
      cb.at(i, j) = quantize_phase(-kappa * g.dot(centre), k_bits);
    }
  return cb;
}

struct GridSpec {
  double az_min = -90.0, az_max = 90.0;
  double el_min = -90.0, el_max = 90.0;
  double step = 1.0;

  /// The (az, 0) principal cut.
  static GridSpec principal_cut(double step = 1.0) { return {-90.0, 90.0, 0.0, 0.0, step}; }

  Index az_count() const { return static_cast<Index>(std::llround((az_max - az_min) / step)) + 1; }
  Index el_count() const { return static_cast<Index>(std::llround((el_max - el_min) / step)) + 1; }
};

inline void validate(const GridSpec& g) {
  require(g.step > 0.0, Errc::invalid_parameter, "grid step must be positive");
  require(g.az_min <= g.az_max && g.el_min <= g.el_max, Errc::invalid_parameter,
          "grid bounds reversed");
  require(g.az_min >= -90.0 && g.az_max <= 90.0 && g.el_min >= -90.0 && g.el_max <= 90.0,
          Errc::invalid_parameter, "grid must stay within the upper hemisphere");
}

/// Field samples stored azimuth-major: sample k = a * el_count + e.
struct FarFieldGrid {
  GridSpec spec;
  std::vector<BeamTarget> directions;
  std::vector<Complex> values;

  static constexpr double db_floor = -60.0;

  double db(Index k) const {
    const double mag = std::abs(values[k]);
    return mag > 0.0 ? std::max(db_floor, 20.0 * std::log10(mag)) : db_floor;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "az,el,re,im,dB\n";
    for (Index k = 0; k < values.size(); ++k)
      os << directions[k].azimuth << "," << directions[k].elevation << "," << values[k].real()
         << "," << values[k].imag() << "," << db(k) << "\n";
    return os.str();
  }
};

/// F(u) = sum_i w_i exp(+i kappa u . r_i); zero weights are skipped.
inline FarFieldGrid far_field(std::span<const Point3> positions, const Vector& weights,
                             double kappa, const GridSpec& grid = {}) {
  validate(grid);
  require(static_cast<Index>(weights.size()) == positions.size(), Errc::dimension_mismatch,
          "far_field: weight count != site count");
  std::vector<Index> live;
  for (Index i = 0; i < positions.size(); ++i)
    if (weights(static_cast<Eigen::Index>(i)) != Complex{0.0, 0.0}) live.push_back(i);

  FarFieldGrid out;
  out.spec = grid;
  const Index na = grid.az_count();
  const Index ne = grid.el_count();
  out.directions.reserve(na * ne);
  out.values.reserve(na * ne);
  for (Index a = 0; a < na; ++a)
    for (Index e = 0; e < ne; ++e) {
      const BeamTarget t{grid.az_min + static_cast<double>(a) * grid.step,
                         grid.el_min + static_cast<double>(e) * grid.step};
      const Point3 u = direction(t);
      Complex f{0.0, 0.0};
      for (Index i : live) {
        const double ph = kappa * u.dot(positions[i]);
        f += weights(static_cast<Eigen::Index>(i)) * Complex{std::cos(ph), std::sin(ph)};
      }
      out.directions.push_back(t);
      out.values.push_back(f);
    }
  return out;
}

inline FarFieldGrid far_field(const SiteSet& sites, const Vector& weights, double kappa,
                             const GridSpec& grid = {}) {
  return far_field(std::span<const Point3>(sites.positions()), weights, kappa, grid);
}

struct Lobe {
  BeamTarget direction;
  double magnitude = 0.0;
  bool degenerate = false;  // several samples tie for the maximum
};

/// Global argmax of |F|; samples within a relative 1e-12 of the maximum tie,
/// and ties resolve to the smallest (azimuth, elevation).
inline Lobe main_lobe(const FarFieldGrid& grid) {
  double best = 0.0;
  for (const auto& v : grid.values) best = std::max(best, std::abs(v));
  require(best > 0.0, Errc::no_lobe, "far-field grid is identically zero");
  const double cut = best * (1.0 - 1e-12);
  Lobe lobe;
  Index ties = 0;
  for (Index k = 0; k < grid.values.size(); ++k) {
    if (std::abs(grid.values[k]) < cut) continue;
    if (ties == 0 || grid.directions[k] < lobe.direction) lobe.direction = grid.directions[k];
    ++ties;
  }
  lobe.magnitude = best;
  lobe.degenerate = ties > 1;
  return lobe;
}

}  // namespace qphm
