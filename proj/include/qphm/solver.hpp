// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file solver.hpp
 * @brief Right-preconditioned BiCGStab with residual history capture.
 */

#pragma once

#include <chrono>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qphm/hpe.hpp"
#include "qphm/mask.hpp"
#include "qphm/types.hpp"

namespace qphm {

/// z = M^{-1} r. An empty function means no preconditioning.
using Preconditioner = std::function<Vector(const Vector&)>;

struct SolveOptions {
  double tol = 1e-6;
  Index max_iter = 500;
  std::uint64_t seed = 1;
};

struct SolveReport {
  Index iterations = 0;
  std::vector<double> relative_residuals;  // one entry per iteration
  bool converged = false;
  bool restarted = false;
  bool breakdown = false;  // breakdown persisted after the single restart
  std::chrono::duration<double> wall_time{0.0};
  Vector x;
  double true_relres = 0.0;  // |b - A x| / |b| recomputed at exit

  double final_relres() const {
    return relative_residuals.empty() ? 0.0 : relative_residuals.back();
  }

  std::string history_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "iter,relres\n";
    for (Index k = 0; k < relative_residuals.size(); ++k)
      os << (k + 1) << "," << relative_residuals[k] << "\n";
    return os.str();
  }
};

namespace detail {

/// Euclidean norm over active entries (all entries when mask is null).
inline double active_norm(const Vector& v, const MaskVector* mask) {
  if (!mask) return v.norm();
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (mask->active(static_cast<Index>(i))) s += std::norm(v(i));
  return std::sqrt(s);
}

inline Vector random_shadow(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = g(rng);
    const double im = g(rng);
    r(i) = {re, im};
  }
  return r;
}

}  // namespace detail

/// Solves A x = b from x0 = 0 with right preconditioning (the residual that
/// is tracked is the true residual of A x = b). Relative residuals are
/// measured over the active entries of `active` when given. On a breakdown
/// (|rho| or |omega| below 1e-30) the iteration restarts once from the current
/// iterate with a random shadow residual drawn from `opt.seed`.
inline SolveReport bicgstab(const LinearOperator& A, const Vector& b, const Preconditioner& M,
                            const SolveOptions& opt, const MaskVector* active = nullptr) {
  require(opt.tol > 0.0, Errc::invalid_parameter, "tolerance must be positive");
  if (active)
    require(active->size() == static_cast<Index>(b.size()), Errc::dimension_mismatch,
            "residual mask length != rhs length");
  constexpr double tiny = 1e-30;
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = b.size();
  auto precond = [&](const Vector& v) { return M ? M(v) : v; };

  SolveReport rep;
  rep.x = Vector::Zero(n);
  const double bnorm = detail::active_norm(b, active);
  if (bnorm == 0.0) {
    rep.converged = true;
    rep.wall_time = std::chrono::steady_clock::now() - t0;
    return rep;
  }

  Vector r = b;
  Vector rhat = r;
  Vector p = Vector::Zero(n), v = Vector::Zero(n);
  Complex rho_prev{1.0, 0.0}, alpha{1.0, 0.0}, omega{1.0, 0.0};
  bool fresh = true;

  auto restart_or_stop = [&]() -> bool {
    if (rep.restarted) {
      rep.breakdown = true;
      return false;
    }
    rep.restarted = true;
    const Vector ax = A(rep.x);
    require(ax.size() == n, Errc::dimension_mismatch, "operator output length != rhs length");
    r = b - ax;
    rhat = detail::random_shadow(n, opt.seed);
    fresh = true;
    return true;
  };

  while (rep.iterations < opt.max_iter) {
    const Complex rho = rhat.dot(r);
    if (std::abs(rho) < tiny) {
      if (!restart_or_stop()) break;
      continue;
    }
    if (fresh) {
      p = r;
      fresh = false;
    } else {
      const Complex beta = (rho / rho_prev) * (alpha / omega);
      p = r + beta * (p - omega * v);
    }
    ++rep.iterations;
    const Vector phat = precond(p);
    v = A(phat);
    require(v.size() == n, Errc::dimension_mismatch, "operator output length != rhs length");
    const Complex rv = rhat.dot(v);
    if (std::abs(rv) < tiny) {
      rep.relative_residuals.push_back(detail::active_norm(r, active) / bnorm);
      if (!restart_or_stop()) break;
      continue;
    }
    alpha = rho / rv;
    Vector s = r - alpha * v;
    const double snorm = detail::active_norm(s, active) / bnorm;
    if (snorm <= opt.tol) {
      rep.x += alpha * phat;
      rep.relative_residuals.push_back(snorm);
      rep.converged = true;
      break;
    }
    const Vector shat = precond(s);
    const Vector t = A(shat);
    const double tt = t.squaredNorm();
    omega = tt > 0.0 ? t.dot(s) / tt : Complex{0.0, 0.0};
    rep.x += alpha * phat + omega * shat;
    r = s - omega * t;
    const double rel = detail::active_norm(r, active) / bnorm;
    rep.relative_residuals.push_back(rel);
    if (rel <= opt.tol) {
      rep.converged = true;
      break;
    }
    if (std::abs(omega) < tiny) {
      if (!restart_or_stop()) break;
      continue;
    }
    rho_prev = rho;
  }

  rep.true_relres = detail::active_norm(b - A(rep.x), active) / bnorm;
  rep.wall_time = std::chrono::steady_clock::now() - t0;
  return rep;
}

/// Wraps a preconditioner object with an apply() member.
template <class P>
Preconditioner as_preconditioner(const P& m) {
  return [&m](const Vector& r) { return m.apply(r); };
}

}  // namespace qphm
