// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file types.hpp
 * @brief Scalar, vector and geometric primitives shared by every module.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qphm {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;
using Index = std::size_t;

inline constexpr double pi = std::numbers::pi;

// ============================================================================
// Errors
// ============================================================================

enum class Errc {
  invalid_parameter,
  dimension_mismatch,
  no_lobe,
  io_error,
  config_error,
  cache_mismatch,
  internal
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::no_lobe: return "no-lobe";
    case Errc::io_error: return "io-error";
    case Errc::config_error: return "config-error";
    case Errc::cache_mismatch: return "cache-mismatch";
    case Errc::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code),
        message_(what) {}

  Errc code() const noexcept { return code_; }
  /// The message without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

// ============================================================================
// Geometry primitives
// ============================================================================

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr bool operator==(const Point3&) const = default;

  constexpr Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Point3 operator*(double s) const { return {x * s, y * s, z * s}; }

  double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Axis-aligned bounding box. Default-constructed boxes are empty.
struct Box {
  Point3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  Point3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

  bool empty() const { return lo.x > hi.x; }

  void include(const Point3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }

  bool contains(const Point3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
           p.z <= hi.z;
  }

  Box shifted(const Point3& d) const { return {lo + d, hi + d}; }

  /// Length of the box diagonal.
  double diameter() const { return empty() ? 0.0 : (hi - lo).norm(); }

  /// Euclidean distance between two boxes, 0 if they overlap.
  friend double distance(const Box& a, const Box& b) {
    auto gap = [](double alo, double ahi, double blo, double bhi) {
      return std::max({0.0, blo - ahi, alo - bhi});
    };
    const double dx = gap(a.lo.x, a.hi.x, b.lo.x, b.hi.x);
    const double dy = gap(a.lo.y, a.hi.y, b.lo.y, b.hi.y);
    const double dz = gap(a.lo.z, a.hi.z, b.lo.z, b.hi.z);
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

/// Half-open contiguous index range [begin, begin + size).
struct IndexRange {
  Index begin = 0;
  Index size = 0;

  constexpr Index end() const { return begin + size; }
  constexpr bool operator==(const IndexRange&) const = default;
};

}  // namespace qphm
