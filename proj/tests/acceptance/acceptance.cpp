// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "qphm/cli.hpp"

using namespace qphm;

namespace {

// Thresholds.
constexpr double kEquivalenceTol = 1e-12;
constexpr double kEquivalenceSeconds = 60.0;
constexpr double kAcaEps = 1e-4;
constexpr double kAccuracyFactor = 10.0;
constexpr double kRetrievalTol = 1e-6;
constexpr double kVirtualSlopeMax = 1.15;
constexpr double kSlopeGapMin = 0.1;
constexpr double kRatioFactor = 2.0;
constexpr double kSolveTol = 1e-6;
constexpr Index kUnpreconditionedIters = 100;
constexpr double kUnpreconditionedFloor = 1e-3;
constexpr Index kRandomCodebookIters = 150;
constexpr double kSteeringDegrees = 4.0;
constexpr double kMirrorDb = 0.5;
constexpr Index kSweepTargets = 25;

// Reference solve case: 8 x 8 helmholtz array, g = 4 split grid at half-wave
// pitch, weakened self term, oblique plane wave.
constexpr double kReferenceSelfScale = 0.3;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string reasons;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      reasons += " [failed: " + what + "]";
    }
  }
};

int failures = 0;

void run(const char* name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.reasons += std::string(" [exception: ") + e.what() + "]";
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-24s %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", name, o.detail.str().c_str(), s,
              o.reasons.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

MacroUnitTemplate g4() { return build_split_grid_template(4, {0.5, 0.5}); }

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

std::vector<Index> object_distinct(const StorageReport& r) {
  std::vector<Index> c;
  for (const auto& l : r.levels)
    if (l.object_level) c.push_back(l.distinct_patterns);
  return c;
}

struct Reference {
  MacroUnitTemplate tpl = g4();
  ArrayLayout layout{8, 8};
  SiteSet sites{tpl, layout};
  KernelSpec kernel = make_helmholtz(1.0, default_self_term(tpl) * kReferenceSelfScale);
  VirtualAssembly assembled = assemble_virtual(sites, kernel, HParams{});
  NearFieldMatrix near = extract_near_field(assembled.matrix);
  Vector U = plane_wave_rhs(sites, {std::sqrt(0.5), 0.0, -std::sqrt(0.5)}, 1.0, kernel.wavenumber);
};

Index first_below(const std::vector<double>& h, double level) {
  for (Index k = 0; k < h.size(); ++k)
    if (h[k] <= level) return k;
  return h.size();
}

}  // namespace

int main() {
  run("hpe-equals-classical", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (ArrayLayout l : {ArrayLayout{1, 8}, ArrayLayout{4, 4}, ArrayLayout{8, 8}}) {
      const auto tpl = g4();
      const SiteSet s(tpl, l);
      const auto k = make_helmholtz(1.0, default_self_term(tpl));
      const auto H = assemble_virtual(s, k, {}).matrix;
      const auto C = assemble_classical(s, k, {});
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Vector x = oracle::random_vector(static_cast<Eigen::Index>(H.size()), seed);
        const Vector yc = C.apply(x);
        worst = std::max(worst, (H.apply(x) - yc).norm() / yc.norm());
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail << "max rel diff " << fmt(worst) << ", " << fmt(secs) << " s";
    o.require(worst <= kEquivalenceTol, "difference above " + fmt(kEquivalenceTol));
    o.require(secs < kEquivalenceSeconds, "slower than one minute");
  });

  run("hmatrix-accuracy", [](Outcome& o) {
    const auto tpl = g4();
    const SiteSet s(tpl, {8, 8});  // N = 1536
    const auto k = make_helmholtz(1.0, default_self_term(tpl));
    HParams hp;
    hp.aca_eps = kAcaEps;
    const auto H = assemble_virtual(s, k, hp).matrix;
    const auto C = assemble_classical(s, k, hp);
    const auto Z = oracle::dense_matrix(s.positions(), k.wavenumber, k.self_term);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Vector x = oracle::random_vector(static_cast<Eigen::Index>(s.size()), 50 + seed);
      const oracle::Vec ref = Z * x;
      worst = std::max({worst, oracle::rel_err(H.apply(x), ref), oracle::rel_err(C.apply(x), ref)});
    }
    o.detail << "N " << s.size() << ", max rel err " << fmt(worst);
    o.require(worst <= kAccuracyFactor * kAcaEps, "error above 10 aca_eps");
  });

  run("retrieval-equivalence", [](Outcome& o) {
    const auto tpl = g4();
    const ArrayLayout layout{8, 8};
    const SiteSet s(tpl, layout);  // N = 1536
    const auto k = make_helmholtz(1.0, default_self_term(tpl));
    HParams hp;
    hp.aca_eps = 1e-10;
    const auto H = assemble_virtual(s, k, hp).matrix;
    const auto nf = extract_near_field(H);
    const auto Z = oracle::dense_matrix(s.positions(), k.wavenumber, k.self_term);
    const Vector U = plane_wave_rhs(s, {0.6, 0.0, -0.8}, 1.0, k.wavenumber);
    double worst = 0.0;
    bool zeros = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      Codebook cb(layout.m, layout.n);
      for (auto& v : cb.states) v = static_cast<int>(rng() & 1u);
      const auto D = build_mask(tpl, layout, cb);
      const auto act = D.active_indices();
      const auto n = static_cast<Eigen::Index>(act.size());
      oracle::Mat Zk(n, n);
      oracle::Vec Uk(n);
      for (Eigen::Index a = 0; a < n; ++a) {
        Uk(a) = U(static_cast<Eigen::Index>(act[static_cast<Index>(a)]));
        for (Eigen::Index c = 0; c < n; ++c)
          Zk(a, c) = Z(static_cast<Eigen::Index>(act[static_cast<Index>(a)]),
                       static_cast<Eigen::Index>(act[static_cast<Index>(c)]));
      }
      const oracle::Vec direct = Zk.partialPivLu().solve(Uk);
      SolveOptions opt;
      opt.tol = 1e-10;
      opt.max_iter = 1000;
      const auto rep = bicgstab(masked_operator(H, D), masked_rhs(U, D),
                                as_preconditioner(factorize(nf, D)), opt, &D);
      o.require(rep.converged, "solve " + std::to_string(seed) + " did not converge");
      worst = std::max(worst, oracle::rel_err(restrict_to_active(rep.x, D), direct));
      for (Index i = 0; i < s.size(); ++i)
        if (!D.active(i) && rep.x(static_cast<Eigen::Index>(i)) != Complex(0.0, 0.0)) zeros = false;
    }
    o.detail << "N " << s.size() << ", max rel err " << fmt(worst);
    o.require(worst <= kRetrievalTol, "error above " + fmt(kRetrievalTol));
    o.require(zeros, "masked entries not exactly zero");
  });

  run("pattern-scaling", [](Outcome& o) {
    const auto tpl = g4();
    const auto laplace = make_laplace(default_self_term(tpl));
    const auto helmholtz = make_helmholtz(1.0, default_self_term(tpl));
    struct Series {
      const char* name;
      std::vector<ArrayLayout> sizes;
    };
    for (const Series& ser : {Series{"1D", {{1, 8}, {1, 16}, {1, 32}, {1, 64}}},
                              Series{"2D", {{4, 4}, {8, 8}, {16, 16}}}}) {
      std::vector<double> n, vlr, clr;
      std::vector<std::vector<Index>> distinct;
      StorageReport largest;
      for (const auto& L : ser.sizes) {
        const SiteSet s(tpl, L);
        auto r = assemble_virtual(s, laplace, {}).report;
        n.push_back(static_cast<double>(s.size()));
        vlr.push_back(static_cast<double>(r.total_lowrank_scalars()));
        clr.push_back(static_cast<double>(r.total_classical_lowrank_scalars()));
        distinct.push_back(object_distinct(r));
        largest = std::move(r);
      }
      // Distinct counts agree on every level that lies above the object
      // leaves of both trees (all levels along a line).
      bool same = true;
      Index bound = 0;
      for (Index a = 0; a + 1 < distinct.size(); ++a) {
        const auto& lo = distinct[a];
        const auto& hi = distinct[a + 1];
        const Index shared = ser.name[0] == '1' ? lo.size() : lo.size() - 1;
        for (Index l = 0; l < shared; ++l) same = same && lo[l] == hi[l];
      }
      for (const auto& d : distinct)
        for (Index c : d) bound = std::max(bound, c);
      const Index last_max = *std::max_element(distinct.back().begin(), distinct.back().end());
      const Index prev_max = *std::max_element(distinct[distinct.size() - 2].begin(),
                                               distinct[distinct.size() - 2].end());
      const double sv = loglog_slope(n, vlr), sc = loglog_slope(n, clr);

      // Classical over distinct block counts against 2^(level - 1).
      double rmin = 1e300, rmax = 0.0;
      std::ostringstream ratios;
      for (const auto& l : largest.levels) {
        if (!l.object_level || l.level < 2) continue;
        const double q = static_cast<double>(l.classical_blocks) /
                         static_cast<double>(l.distinct_patterns) / std::ldexp(1.0, static_cast<int>(l.level) - 1);
        rmin = std::min(rmin, q);
        rmax = std::max(rmax, q);
        ratios << (ratios.tellp() ? "," : "") << fmt(q);
      }
      o.detail << ser.name << ": distinct<=" << bound << ", virtual slope " << fmt(sv)
               << ", classical slope " << fmt(sc) << ", ratio/2^l {" << ratios.str() << "}, ";
      const std::string tag = std::string(ser.name) + " ";
      o.require(same, tag + "distinct counts change with size");
      o.require(last_max == prev_max, tag + "distinct bound still growing");
      o.require(sv <= kVirtualSlopeMax, tag + "virtual slope above " + fmt(kVirtualSlopeMax));
      o.require(sc - sv >= kSlopeGapMin, tag + "classical slope gap below " + fmt(kSlopeGapMin));
      o.require(rmin >= 1.0 / kRatioFactor && rmax <= kRatioFactor,
                tag + "block-count ratio outside a factor of 2 of 2^l");

      std::vector<double> hv;
      for (const auto& L : ser.sizes)
        hv.push_back(static_cast<double>(assemble_virtual(SiteSet(tpl, L), helmholtz, {}).report.total_lowrank_scalars()));
      o.detail << "helmholtz virtual slope " << fmt(loglog_slope(n, hv)) << " (info)" << (ser.name[0] == '1' ? "; " : "");
    }
  });

  run("fig6-reuse-counts", [](Outcome& o) {
    const auto tpl = g4();
    const SiteSet s(tpl, {1, 8});
    const auto r = assemble_virtual(s, make_helmholtz(1.0, default_self_term(tpl)), {}).report;
    std::vector<Index> hits, rep;
    for (Index lv : {2u, 3u, 4u})
      for (const auto& l : r.levels)
        if (l.level == lv) {
          hits.push_back(l.hpe_reuses);
          rep.push_back(l.reuses);
        }
    o.detail << "dictionary hits (" << hits[0] << "," << hits[1] << "," << hits[2]
             << "), classical minus distinct (" << rep[0] << "," << rep[1] << "," << rep[2]
             << "), expected (1,5,5)";
    o.require(hits == std::vector<Index>{1, 5, 5}, "reuse counts differ from (1,5,5)");
  });

  Reference ref;

  run("preconditioning", [&](Outcome& o) {
    const Codebook cb = [&] {
      Codebook c(8, 8);
      for (Index i = 0; i < 8; ++i)
        for (Index j = 0; j < 8; ++j) c.at(i, j) = static_cast<int>((i + j) % 2);
      return c;
    }();
    const auto D = build_mask(ref.tpl, ref.layout, cb);
    const auto A = masked_operator(ref.assembled.matrix, D);
    const Vector b = masked_rhs(ref.U, D);
    SolveOptions opt;
    opt.tol = kSolveTol;
    opt.max_iter = kUnpreconditionedIters;
    const auto plain = bicgstab(A, b, {}, opt, &D);
    const auto ilu = bicgstab(A, b, as_preconditioner(factorize(ref.near, D)), opt, &D);
    const double best = *std::min_element(plain.relative_residuals.begin(), plain.relative_residuals.end());
    const Index plain_at = first_below(plain.relative_residuals, best);
    const Index ilu_at = first_below(ilu.relative_residuals, best);
    o.detail << "unpreconditioned best relres " << fmt(best) << " after " << plain.iterations
             << " it, ILU converged in " << ilu.iterations << " it (reaches " << fmt(best)
             << " at " << ilu_at << " vs " << plain_at << ")";
    o.require(best > kUnpreconditionedFloor, "unpreconditioned run reached 1e-3");
    o.require(ilu.converged, "ILU run did not converge");
    o.require(ilu_at < plain_at, "ILU not faster at equal residual");
    o.require(ilu.iterations < plain.iterations, "ILU used as many iterations");
  });

  run("random-codebooks", [&](Outcome& o) {
    Index worst = 0, failed = 0;
    for (int p = 1; p <= 9; ++p)
      for (int seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(1000 * p + seed));
        std::bernoulli_distribution bern(p / 10.0);
        Codebook cb(8, 8);
        for (auto& v : cb.states) v = bern(rng) ? 1 : 0;
        const auto D = build_mask(ref.tpl, ref.layout, cb);
        SolveOptions opt;
        opt.tol = kSolveTol;
        opt.max_iter = kRandomCodebookIters;
        const auto rep = bicgstab(masked_operator(ref.assembled.matrix, D), masked_rhs(ref.U, D),
                                  as_preconditioner(factorize(ref.near, D)), opt, &D);
        worst = std::max(worst, rep.iterations);
        if (!rep.converged) ++failed;
      }
    o.detail << "90 codebooks, " << failed << " not converged, worst " << worst << " it";
    o.require(failed == 0, "some codebooks did not converge within 150 iterations");
  });

  run("beam-steering", [](Outcome& o) {
    const Pitch pitch{0.5, 0.5};
    const ArrayLayout layout{16, 1};
    const BeamTarget inc{45.0, 0.0}, target{-30.0, 0.0};
    const auto tpl = build_stacked_state_template(2, 1, pitch, 0.0, 0.318);
    const SiteSet s(tpl, layout);
    const auto k = make_helmholtz(1.0, default_self_term(tpl));
    const auto H = assemble_virtual(s, k, {}).matrix;
    const auto cb = phase_gradient_codebook(layout, pitch, inc, target, 1.0, 1);
    const auto D = build_mask(tpl, layout, cb);
    const Vector U = plane_wave_rhs(s, direction(inc) * -1.0, 1.0, k.wavenumber);
    const auto rep = bicgstab(masked_operator(H, D), masked_rhs(U, D),
                              as_preconditioner(factorize(extract_near_field(H), D)), {}, &D);
    const auto ff = far_field(s, rep.x, k.wavenumber, GridSpec::principal_cut(1.0));
    const auto lobe = main_lobe(ff);
    auto db_at = [&](double az) {
      for (Index q = 0; q < ff.values.size(); ++q)
        if (ff.directions[q].azimuth == az) return ff.db(q);
      return FarFieldGrid::db_floor;
    };
    const double off = std::abs(lobe.direction.azimuth - target.azimuth);
    const double mirror_off = std::abs(lobe.direction.azimuth + target.azimuth);
    const bool mirror_ok = mirror_off <= kSteeringDegrees &&
                           20.0 * std::log10(lobe.magnitude) - db_at(target.azimuth) < kMirrorDb;
    o.detail << "lobe at (" << lobe.direction.azimuth << "," << lobe.direction.elevation
             << "), " << rep.iterations << " it, dB(-30) " << fmt(db_at(-30.0)) << ", dB(+30) "
             << fmt(db_at(30.0));
    o.require(rep.converged, "solve did not converge");
    o.require(lobe.direction.elevation == 0.0 && (off <= kSteeringDegrees || mirror_ok),
              "main lobe not within 4 degrees of -30");
  });

  run("assembly-once", [](Outcome& o) {
    const auto dir = std::filesystem::temp_directory_path() / "qphm_acceptance_sweep";
    std::filesystem::remove_all(dir);
    const auto ctx = cli::make_context(load_config(
        std::nullopt, {"targets.azimuths=-30,-15,0,15,30", "targets.elevations=-30,-15,0,15,30",
                       "solver.threads=4", "output.dir=" + dir.string()}));
    std::ostringstream log;
    const auto before = kernel_eval_count();
    const auto res = cli::cmd_sweep(ctx, false, log);
    const auto one = res.evals_after_assembly - before;
    // An independent assembly of the same matrix costs the same evaluations.
    const auto t = kernel_eval_count();
    (void)assemble_virtual(ctx.sites, ctx.kernel, ctx.cfg.hparams);
    const auto expected = kernel_eval_count() - t;

    Index complete = 0;
    std::istringstream summary(io::read_text(ctx.out("summary.csv")));
    std::string line;
    std::getline(summary, line);
    const bool header = line == cli::summary_header;
    while (std::getline(summary, line))
      if (std::count(line.begin(), line.end(), ',') == 8) ++complete;
    o.detail << res.rows.size() << " solves, assembly evals " << one << " (single assembly "
             << expected << "), evals during solves " << res.evals_after_solves - res.evals_after_assembly;
    o.require(res.rows.size() == kSweepTargets && res.failures.empty(), "not all 25 targets solved");
    o.require(!res.assembly.from_cache && one == expected, "assembly count is not one");
    o.require(res.evals_after_solves == res.evals_after_assembly, "kernel evaluated during solves");
    o.require(header && complete == kSweepTargets, "summary rows incomplete");
    std::filesystem::remove_all(dir);
  });

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
