// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file r3m.hpp
 * @brief Implicit retrieval of per-codebook systems from one global matrix.
 *
 * For a mask D the per-codebook system is D . (Z (D . I)) = D . U. Masked rows
 * of that operator vanish, so the operator used here adds the complement
 * identity (1 - D) . I; with a masked right-hand side this pins every masked
 * unknown to zero and leaves the active block equal to P^T Z P.
 */

#pragma once

#include <iostream>

#include "qphm/geometry.hpp"
#include "qphm/hpe.hpp"
#include "qphm/mask.hpp"
#include "qphm/types.hpp"

namespace qphm {

namespace detail {

inline void check_mask(const MaskVector& D, Index n, const char* what) {
  require(D.size() == n, Errc::dimension_mismatch,
          std::string(what) + ": mask length " + std::to_string(D.size()) + " != " +
              std::to_string(n));
}

}  // namespace detail

/// y = D . Z(D . x) + (1 - D) . x, with Z applied through matrix.apply().
/// The returned operator references `matrix`, which must outlive it.
template <class MatrixLike>
LinearOperator masked_operator(const MatrixLike& matrix, const MaskVector& D) {
  detail::check_mask(D, matrix.size(), "masked_operator");
  return [&matrix, bits = D.bits()](const Vector& x) -> Vector {
    require(static_cast<Index>(x.size()) == bits.size(), Errc::dimension_mismatch,
            "masked operator input length != N");
    Vector xm(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      xm(i) = bits[static_cast<Index>(i)] ? x(i) : Complex{0.0, 0.0};
    Vector y = matrix.apply(xm);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (!bits[static_cast<Index>(i)]) y(i) = x(i);
    return y;
  };
}

/// D . U
inline Vector masked_rhs(const Vector& U, const MaskVector& D) {
  detail::check_mask(D, static_cast<Index>(U.size()), "masked_rhs");
  Vector out(U.size());
  for (Eigen::Index i = 0; i < U.size(); ++i)
    out(i) = D.active(static_cast<Index>(i)) ? U(i) : Complex{0.0, 0.0};
  return out;
}

/// Gathers the active entries in index order (P^T x).
inline Vector restrict_to_active(const Vector& x, const MaskVector& D) {
  detail::check_mask(D, static_cast<Index>(x.size()), "restrict");
  Vector out(static_cast<Eigen::Index>(D.active_count()));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (D.active(static_cast<Index>(i))) out(k++) = x(i);
  return out;
}

/// Scatters active entries back with zeros elsewhere (P x_k).
inline Vector prolong_from_active(const Vector& xk, const MaskVector& D) {
  require(static_cast<Index>(xk.size()) == D.active_count(), Errc::dimension_mismatch,
          "prolong: vector length != active count");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(D.size()));
  Eigen::Index k = 0;
  for (Index i = 0; i < D.size(); ++i)
    if (D.active(i)) out(static_cast<Eigen::Index>(i)) = xk(k++);
  return out;
}

/// U_i = w exp(-i kappa (d . r_i)) for propagation direction d.
inline Vector plane_wave_rhs(const SiteSet& sites, Point3 direction, Complex polar_weight,
                             double kappa) {
  const double len = direction.norm();
  require(len > 0.0 && std::isfinite(len), Errc::invalid_parameter,
          "plane-wave direction must be a non-zero finite vector");
  if (std::abs(len - 1.0) > 1e-12) {
    std::cerr << "warning: plane-wave direction not unit length (|d| = " << len
              << "), normalizing\n";
    direction = direction * (1.0 / len);
  }
  Vector U(static_cast<Eigen::Index>(sites.size()));
  for (Index i = 0; i < sites.size(); ++i) {
    const double phase = -kappa * direction.dot(sites.position(i));
    U(static_cast<Eigen::Index>(i)) = polar_weight * Complex{std::cos(phase), std::sin(phase)};
  }
  return U;
}

}  // namespace qphm
