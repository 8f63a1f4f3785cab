// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file kernel.hpp
 * @brief Translation-invariant point-collocation kernels.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <span>

#include "qphm/geometry.hpp"
#include "qphm/types.hpp"

namespace qphm {

enum class KernelKind { helmholtz, laplace };

struct KernelSpec {
  KernelKind kind = KernelKind::helmholtz;
  double wavenumber = 0.0;
  Complex self_term{1.0, 0.0};

  bool operator==(const KernelSpec&) const = default;
};

inline void validate(const KernelSpec& spec) {
  require(spec.wavenumber >= 0.0 && std::isfinite(spec.wavenumber), Errc::invalid_parameter,
          "wavenumber must be a non-negative finite real");
  require(spec.self_term != Complex{0.0, 0.0}, Errc::invalid_parameter,
          "self term must be non-zero");
}

/// 1 / (4 pi a) with a half the minimum inter-site spacing of the template.
inline Complex default_self_term(const MacroUnitTemplate& tpl) {
  const double a = 0.5 * tpl.min_spacing();
  return {1.0 / (4.0 * pi * a), 0.0};
}

inline KernelSpec make_helmholtz(double wavelength, Complex self_term) {
  require(wavelength > 0.0, Errc::invalid_parameter, "wavelength must be positive");
  return {KernelKind::helmholtz, 2.0 * pi / wavelength, self_term};
}

inline KernelSpec make_laplace(Complex self_term) { return {KernelKind::laplace, 0.0, self_term}; }

// Process-wide count of evaluated matrix entries. Relaxed ordering is enough:
// readers only compare snapshots taken between phases.
inline std::atomic<std::uint64_t> kernel_eval_counter{0};

inline std::uint64_t kernel_eval_count() {
  return kernel_eval_counter.load(std::memory_order_relaxed);
}

namespace detail {

inline Complex green(const KernelSpec& spec, double d) {
  const double scale = 1.0 / (4.0 * pi * d);
  if (spec.kind == KernelKind::laplace) return {scale, 0.0};
  const double phase = -spec.wavenumber * d;
  return {scale * std::cos(phase), scale * std::sin(phase)};
}

}  // namespace detail

/// Entry for a displacement between two distinct sites.
inline Complex eval_displacement(const KernelSpec& spec, const Point3& d) {
  kernel_eval_counter.fetch_add(1, std::memory_order_relaxed);
  return detail::green(spec, d.norm());
}

inline Complex eval_entry(const KernelSpec& spec, const Point3& ri, const Point3& rj) {
  if (ri == rj) {
    kernel_eval_counter.fetch_add(1, std::memory_order_relaxed);
    return spec.self_term;
  }
  return eval_displacement(spec, ri - rj);
}

/// Entry Z_ij between global sites i and j of an array.
inline Complex eval_entry(const KernelSpec& spec, const SiteSet& sites, Index i, Index j) {
  if (i == j) {
    kernel_eval_counter.fetch_add(1, std::memory_order_relaxed);
    return spec.self_term;
  }
  return eval_displacement(spec, sites.displacement(i, j));
}

/// Dense block over explicit global row/column index lists, row-major order.
inline Matrix eval_block(const KernelSpec& spec, const SiteSet& sites, std::span<const Index> rows,
                         std::span<const Index> cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (Index a = 0; a < rows.size(); ++a)
    for (Index b = 0; b < cols.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          eval_entry(spec, sites, rows[a], cols[b]);
  return out;
}

inline Matrix eval_block(const KernelSpec& spec, const SiteSet& sites, IndexRange rows,
                         IndexRange cols) {
  std::vector<Index> r(rows.size), c(cols.size);
  for (Index a = 0; a < rows.size; ++a) r[a] = rows.begin + a;
  for (Index b = 0; b < cols.size; ++b) c[b] = cols.begin + b;
  return eval_block(spec, sites, r, c);
}

}  // namespace qphm
