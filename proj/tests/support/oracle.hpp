// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used as test oracles. They are written directly
// from the defining formulas and share no code with the library beyond the
// plain data types.

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qphm/types.hpp"

namespace oracle {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;

/// exp(-i k d) / (4 pi d); k = 0 gives the Laplace kernel.
inline cd green(double k, double d) { return std::polar(1.0 / (4.0 * kPi * d), -k * d); }

/// Full dense collocation matrix over raw positions.
inline Mat dense_matrix(const std::vector<qphm::Point3>& pos, double k, cd self) {
  const auto n = static_cast<Eigen::Index>(pos.size());
  Mat z(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        z(i, j) = self;
        continue;
      }
      const double dx = pos[i].x - pos[j].x, dy = pos[i].y - pos[j].y, dz = pos[i].z - pos[j].z;
      z(i, j) = green(k, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  return z;
}

/// Dense matrix of any linear map, one unit vector at a time.
template <class Op>
Mat materialize(Op&& op, Eigen::Index n) {
  Mat a(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    a.col(j) = op(e);
  }
  return a;
}

inline Vec random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = u(rng);
    v(i) = cd(re, u(rng));
  }
  return v;
}

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / b.norm(); }
inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

/// Nearest of 2^bits phase levels by circular distance; ties go to the
/// smaller level index.
inline int nearest_level(double phase, int bits) {
  const int levels = 1 << bits;
  const double step = 2.0 * kPi / levels;
  int best = 0;
  double best_d = 1e300;
  for (int s = 0; s < levels; ++s) {
    double d = std::fmod(std::abs(phase - s * step), 2.0 * kPi);
    d = std::min(d, 2.0 * kPi - d);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

}  // namespace oracle
