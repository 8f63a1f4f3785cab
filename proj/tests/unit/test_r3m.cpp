// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "qphm/precond.hpp"
#include "qphm/r3m.hpp"
#include "qphm/solver.hpp"

using namespace qphm;

namespace {

MaskVector random_mask(Index n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> bits(n);
  for (auto& v : bits) v = b(rng) ? 1 : 0;
  return MaskVector(std::move(bits));
}

struct Setup {
  SiteSet sites;
  KernelSpec kernel;
  VirtualHMatrix H;
};

Setup setup(ArrayLayout l, int g, double aca_eps) {
  const auto tpl = build_split_grid_template(g, {0.5, 0.5});
  Setup s;
  s.sites = SiteSet(tpl, l);
  s.kernel = make_helmholtz(1.0, default_self_term(tpl));
  HParams hp;
  hp.aca_eps = aca_eps;
  s.H = assemble_virtual(s.sites, s.kernel, hp).matrix;
  return s;
}

}  // namespace

TEST(MaskedOperator, AllOnesIsPlainProduct) {
  const auto s = setup({2, 2}, 2, 1e-6);
  const auto op = masked_operator(s.H, MaskVector::ones(s.H.size()));
  const Vector x = oracle::random_vector(static_cast<Eigen::Index>(s.H.size()), 1);
  EXPECT_EQ(op(x), vmvp(s.H, x));
}

TEST(MaskedOperator, AllZerosIsIdentity) {
  const auto s = setup({2, 2}, 2, 1e-6);
  const auto op = masked_operator(s.H, MaskVector::zeros(s.H.size()));
  const Vector x = oracle::random_vector(static_cast<Eigen::Index>(s.H.size()), 2);
  EXPECT_EQ(op(x), x);
}

TEST(MaskedOperator, RestrictionEqualsSlicedMatrix) {
  const auto s = setup({4, 2}, 4, 1e-8);  // N = 192
  const Index N = s.H.size();
  const auto D = random_mask(N, 0.6, 3);
  const auto n = static_cast<Eigen::Index>(N);
  const auto A = oracle::materialize(masked_operator(s.H, D), n);
  const auto Hd = oracle::materialize([&](const Vector& x) { return s.H.apply(x); }, n);
  const auto Z = oracle::dense_matrix(s.sites.positions(), s.kernel.wavenumber, s.kernel.self_term);
  const auto act = D.active_indices();
  const auto k = static_cast<Eigen::Index>(act.size());
  oracle::Mat Ak(k, k), Hk(k, k), Zk(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) {
      const auto i = static_cast<Eigen::Index>(act[static_cast<Index>(a)]);
      const auto j = static_cast<Eigen::Index>(act[static_cast<Index>(b)]);
      Ak(a, b) = A(i, j);
      Hk(a, b) = Hd(i, j);
      Zk(a, b) = Z(i, j);
    }
  EXPECT_EQ((Ak - Hk).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(oracle::rel_err(Ak, Zk), 1e-7);
  // Masked columns and rows reduce to the identity.
  for (Index i = 0; i < N; ++i)
    if (!D.active(i))
      for (Index j = 0; j < N; ++j) {
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        ASSERT_EQ(A(ii, jj), i == j ? Complex(1.0, 0.0) : Complex(0.0, 0.0));
        ASSERT_EQ(A(jj, ii), i == j ? Complex(1.0, 0.0) : Complex(0.0, 0.0));
      }
}

TEST(MaskedOperator, DimensionMismatch) {
  const auto s = setup({1, 1}, 2, 1e-4);
  EXPECT_THROW(masked_operator(s.H, MaskVector::ones(3)), Error);
}

TEST(MaskedRhs, Examples) {
  const Vector U = oracle::random_vector(5, 4);
  EXPECT_EQ(masked_rhs(U, MaskVector::ones(5)), U);
  EXPECT_EQ(masked_rhs(U, MaskVector::zeros(5)).norm(), 0.0);
  const Vector one = masked_rhs(U, MaskVector({0, 0, 1, 0, 0}));
  Vector expect = Vector::Zero(5);
  expect(2) = U(2);
  EXPECT_EQ(one, expect);
  EXPECT_THROW(masked_rhs(U, MaskVector::ones(4)), Error);
}

TEST(RestrictProlong, HandExample) {
  Vector x(6);
  x << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  const MaskVector D({1, 0, 1, 1, 0, 0});
  Vector expect(3);
  expect << 1.0, 3.0, 4.0;
  EXPECT_EQ(restrict_to_active(x, D), expect);
  Vector back(6);
  back << 1.0, 0.0, 3.0, 4.0, 0.0, 0.0;
  EXPECT_EQ(prolong_from_active(restrict_to_active(x, D), D), back);
  EXPECT_EQ(prolong_from_active(restrict_to_active(x, D), D), masked_rhs(x, D));
  EXPECT_EQ(restrict_to_active(prolong_from_active(expect, D), D), expect);
  EXPECT_THROW(restrict_to_active(Vector::Zero(5), D), Error);
  EXPECT_THROW(prolong_from_active(Vector::Zero(4), D), Error);
}

TEST(PlaneWave, Examples) {
  const MacroUnitTemplate tpl(1, {1.0, 1.0},
                              {{{0.0, 0.0, 0.0}, 0b11, false, false}, {{0.0, 0.0, 0.5}, 0b11, false, false},
                               {{0.3, 0.7, 0.2}, 0b11, false, false}});
  const SiteSet s(tpl, {1, 1});
  const Complex w{0.5, -2.0};
  const Vector u0 = plane_wave_rhs(s, {0, 0, 1}, w, 0.0);
  for (Eigen::Index i = 0; i < u0.size(); ++i) EXPECT_EQ(u0(i), w);

  const double kappa = 2.0 * pi;  // wavelength 1
  const Vector u = plane_wave_rhs(s, {0, 0, 1}, w, kappa);
  EXPECT_EQ(u(0), w);
  // Sites are ordered by height: z = 0, 0.2, 0.5.
  EXPECT_NEAR(std::abs(u(1) - w * std::polar(1.0, -kappa * 0.2)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(u(2) + w), 0.0, 1e-14);

  // Non-unit direction is normalized.
  const Vector un = plane_wave_rhs(s, {0, 0, 3}, w, kappa);
  EXPECT_NEAR((un - u).norm(), 0.0, 1e-14);
  EXPECT_THROW(plane_wave_rhs(s, {0, 0, 0}, w, kappa), Error);
}

TEST(Retrieval, MaskedUnknownsExactlyZero) {
  const auto s = setup({3, 3}, 3, 1e-6);
  const Index N = s.H.size();
  const auto D = random_mask(N, 0.5, 9);
  const Vector b = masked_rhs(plane_wave_rhs(s.sites, {0.6, 0.0, -0.8}, 1.0, 2.0 * pi), D);
  SolveOptions opt;
  opt.tol = 1e-8;
  const auto rep = bicgstab(masked_operator(s.H, D), b, {}, opt, &D);
  ASSERT_TRUE(rep.converged);
  for (Index i = 0; i < N; ++i) {
    if (!D.active(i)) {
      ASSERT_EQ(rep.x(static_cast<Eigen::Index>(i)), Complex(0.0, 0.0));
    }
  }
}

TEST(Retrieval, MatchesDirectSolveOfSlicedSystem) {
  const auto s = setup({4, 4}, 3, 1e-10);  // N = 240
  const Index N = s.H.size();
  const auto n = static_cast<Eigen::Index>(N);
  const auto Hd = oracle::materialize([&](const Vector& x) { return s.H.apply(x); }, n);
  const Vector U = plane_wave_rhs(s.sites, {0.6, 0.0, -0.8}, 1.0, 2.0 * pi);
  const auto nf = extract_near_field(s.H);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto D = random_mask(N, 0.3 + 0.1 * static_cast<double>(seed), 100 + seed);
    const auto act = D.active_indices();
    const auto k = static_cast<Eigen::Index>(act.size());
    oracle::Mat Zk(k, k);
    oracle::Vec Uk(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      Uk(a) = U(static_cast<Eigen::Index>(act[static_cast<Index>(a)]));
      for (Eigen::Index c = 0; c < k; ++c)
        Zk(a, c) = Hd(static_cast<Eigen::Index>(act[static_cast<Index>(a)]),
                      static_cast<Eigen::Index>(act[static_cast<Index>(c)]));
    }
    const oracle::Vec direct = Zk.partialPivLu().solve(Uk);
    const auto M = factorize(nf, D);
    SolveOptions opt;
    opt.tol = 1e-12;
    opt.max_iter = 2000;
    const auto rep = bicgstab(masked_operator(s.H, D), masked_rhs(U, D), as_preconditioner(M), opt, &D);
    ASSERT_TRUE(rep.converged) << "seed " << seed;
    EXPECT_LE(oracle::rel_err(restrict_to_active(rep.x, D), direct), 1e-8) << "seed " << seed;
  }
}

TEST(Retrieval, SolvesDoNotEvaluateKernel) {
  const auto s = setup({3, 2}, 3, 1e-6);
  const Index N = s.H.size();
  const auto nf = extract_near_field(s.H);
  const Vector U = plane_wave_rhs(s.sites, {0, 0, -1}, 1.0, 2.0 * pi);
  const auto before = kernel_eval_count();
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto D = random_mask(N, 0.5, seed);
    const auto M = factorize(nf, D);
    (void)bicgstab(masked_operator(s.H, D), masked_rhs(U, D), as_preconditioner(M), {}, &D);
  }
  EXPECT_EQ(kernel_eval_count(), before);
}
