// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file compression.hpp
 * @brief Dense leaf assembly and partially pivoted adaptive cross
 *        approximation (ACA) for admissible leaves.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qphm/types.hpp"

namespace qphm {

struct DenseBlock {
  IndexRange rows;
  IndexRange cols;
  Matrix values;

  Index scalars() const { return rows.size * cols.size; }
};

/// A ~= U * V with U (rows x r) and V (r x cols).
struct LowRankBlock {
  IndexRange rows;
  IndexRange cols;
  Matrix U;
  Matrix V;
  bool hit_max_rank = false;

  Index rank() const { return static_cast<Index>(U.cols()); }
  Index scalars() const { return rank() * (rows.size + cols.size); }
  Matrix dense() const {
    if (rank() == 0) return Matrix::Zero(static_cast<Eigen::Index>(rows.size),
                                         static_cast<Eigen::Index>(cols.size));
    return U * V;
  }
};

/// Evaluates every entry in row-major order. entry(a, b) takes block-local
/// indices.
template <class EntryFn>
DenseBlock assemble_dense(EntryFn&& entry, IndexRange rows, IndexRange cols) {
  DenseBlock blk{rows, cols,
                 Matrix(static_cast<Eigen::Index>(rows.size), static_cast<Eigen::Index>(cols.size))};
  for (Index a = 0; a < rows.size; ++a)
    for (Index b = 0; b < cols.size; ++b)
      blk.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = entry(a, b);
  return blk;
}

/// Partially pivoted ACA.
///
/// The first pivot row is 0; each following pivot row is the unused row with
/// the largest entry of the last column vector (lowest index on ties). The
/// iteration stops once |u_k| |v_k| <= eps |A_k|_F, with the Frobenius norm of
/// the running approximation updated incrementally, or when the rank reaches
/// min(max_rank, rows, cols). A row whose residual vanishes is skipped in
/// favour of the lowest unused row; running out of rows ends the iteration at
/// the current rank.
template <class EntryFn>
LowRankBlock aca_approximate(EntryFn&& entry, IndexRange rows, IndexRange cols, double eps,
                             Index max_rank) {
  require(eps > 0.0 && eps < 1.0, Errc::invalid_parameter, "ACA eps must lie in (0,1)");
  const Index m = rows.size;
  const Index n = cols.size;
  const Index limit = std::min({max_rank, m, n});

  std::vector<Vector> us;
  std::vector<Vector> vs;
  std::vector<bool> used(m, false);
  Index used_count = 0;
  double norm2 = 0.0;
  double max_seen = 0.0;

  auto lowest_unused = [&]() -> Index {
    for (Index a = 0; a < m; ++a)
      if (!used[a]) return a;
    return m;
  };

  Index pivot = m > 0 ? 0 : m;
  Vector row(static_cast<Eigen::Index>(n));
  Vector col(static_cast<Eigen::Index>(m));

  while (us.size() < limit && pivot < m) {
    used[pivot] = true;
    ++used_count;

    for (Index b = 0; b < n; ++b) {
      const Complex e = entry(pivot, b);
      max_seen = std::max(max_seen, std::abs(e));
      row(static_cast<Eigen::Index>(b)) = e;
    }
    for (Index l = 0; l < us.size(); ++l) row -= us[l](static_cast<Eigen::Index>(pivot)) * vs[l];

    Index jstar = 0;
    double best = -1.0;
    for (Index b = 0; b < n; ++b) {
      const double v = std::abs(row(static_cast<Eigen::Index>(b)));
      if (v > best) {
        best = v;
        jstar = b;
      }
    }
    // Treat residuals at round-off level of the block scale as exact zeros.
    if (best <= 1e-14 * max_seen) {
      pivot = used_count < m ? lowest_unused() : m;
      continue;
    }

    Vector v = row / row(static_cast<Eigen::Index>(jstar));
    for (Index a = 0; a < m; ++a) {
      const Complex e = entry(a, jstar);
      max_seen = std::max(max_seen, std::abs(e));
      col(static_cast<Eigen::Index>(a)) = e;
    }
    for (Index l = 0; l < us.size(); ++l) col -= vs[l](static_cast<Eigen::Index>(jstar)) * us[l];
    Vector u = col;

    Complex cross{0.0, 0.0};
    for (Index l = 0; l < us.size(); ++l) cross += us[l].dot(u) * vs[l].dot(v);
    const double un = u.norm();
    const double vn = v.norm();
    norm2 += un * un * vn * vn + 2.0 * cross.real();
    norm2 = std::max(norm2, 0.0);
    us.push_back(std::move(u));
    vs.push_back(std::move(v));

    if (un * vn <= eps * std::sqrt(norm2)) break;
    if (used_count == m) break;

    Index next = m;
    double big = -1.0;
    const Vector& last = us.back();
    for (Index a = 0; a < m; ++a) {
      if (used[a]) continue;
      const double val = std::abs(last(static_cast<Eigen::Index>(a)));
      if (val > big) {
        big = val;
        next = a;
      }
    }
    pivot = big > 0.0 ? next : lowest_unused();
  }

  LowRankBlock out;
  out.rows = rows;
  out.cols = cols;
  const auto r = static_cast<Eigen::Index>(us.size());
  out.U.resize(static_cast<Eigen::Index>(m), r);
  out.V.resize(r, static_cast<Eigen::Index>(n));
  for (Eigen::Index l = 0; l < r; ++l) {
    out.U.col(l) = us[static_cast<Index>(l)];
    out.V.row(l) = vs[static_cast<Index>(l)].transpose();
  }
  out.hit_max_rank = us.size() == max_rank && max_rank < std::min(m, n);
  return out;
}

}  // namespace qphm
