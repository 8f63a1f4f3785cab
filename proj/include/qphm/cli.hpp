// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cli.hpp
 * @brief Batch commands behind the qphm tool: gen, assemble, solve, sweep and
 * report-data.
 *
 * Output directory layout (all CSV files start with a header row):
 *
 *   template.json            unit template used for the run
 *   codebooks/<id>.json      generated codebooks
 *   targets.csv              codebook_id,azimuth,elevation
 *   assembly.qphm            binary cache of the assembled matrix
 *   storage.csv              level,classical_blocks,distinct_patterns,reuses,
 *                            lowrank_scalars,dense_scalars,max_rank
 *   assembly.csv             one record per assemble phase
 *   solves/<id>/x.csv        index,re,im
 *   solves/<id>/residual.csv iter,relres
 *   solves/<id>/farfield.csv az,el,re,im,dB
 *   solves/<id>/summary.csv  summary header plus one row
 *   summary.csv              codebook_id,n_active,iters,relres,converged,
 *                            assemble_ms,factorize_ms,solve_ms,peak_bytes
 *   sweep_log.csv            kernel evaluation counter around every solve
 *   lobes.csv                main lobe per codebook
 *   iters_hist.csv           iteration-count histogram
 *   scaling.csv              storage versus N (report-data)
 *   bundle.json              manifest of the files above
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qphm/cache.hpp"
#include "qphm/config.hpp"
#include "qphm/geometry.hpp"
#include "qphm/hpe.hpp"
#include "qphm/io.hpp"
#include "qphm/precond.hpp"
#include "qphm/r3m.hpp"
#include "qphm/solver.hpp"
#include "qphm/synthesis.hpp"

namespace qphm::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_non_convergence = 2,
  exit_config_error = 3,
  exit_cache_mismatch = 4,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::config_error:
      return exit_config_error;
    case Errc::cache_mismatch:
      return exit_cache_mismatch;
    default:
      return exit_failure;
  }
}

inline constexpr const char* summary_header =
    "codebook_id,n_active,iters,relres,converged,assemble_ms,factorize_ms,solve_ms,peak_bytes";
inline constexpr const char* assembly_header =
    "N,from_cache,kernel_evals,assemble_ms,distinct_patterns,lowrank_scalars,dense_scalars,"
    "max_rank,params_hash";
inline constexpr const char* scaling_header =
    "m,n,N,classical_lowrank_scalars,virtual_lowrank_scalars,classical_dense_scalars,"
    "virtual_dense_scalars,classical_blocks,distinct_patterns,max_rank";

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

/// Everything derived from the configuration before any kernel evaluation.
struct Context {
  RunConfig cfg;
  MacroUnitTemplate tpl;
  SiteSet sites;
  KernelSpec kernel;
  std::uint64_t hash = 0;

  fs::path out(const fs::path& rel) const { return cfg.out_dir / rel; }
  fs::path cache_path() const { return out("assembly.qphm"); }
};

inline Context make_context(const RunConfig& cfg) {
  Context ctx;
  ctx.cfg = cfg;
  ctx.tpl = cfg.make_template();
  if (cfg.template_kind == "file" && ctx.tpl.k_bits() != cfg.k_bits) ctx.cfg.k_bits = ctx.tpl.k_bits();
  ctx.sites = SiteSet(ctx.tpl, cfg.layout);
  ctx.kernel = cfg.make_kernel(ctx.tpl);
  ctx.hash = cache::params_hash(ctx.sites, ctx.kernel, cfg.hparams);
  return ctx;
}

// --- gen ----------------------------------------------------------------------

inline std::string fmt_angle(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+g", a);
  return buf;
}

inline std::string target_id(const BeamTarget& t) {
  return "az" + fmt_angle(t.azimuth) + "_el" + fmt_angle(t.elevation);
}

/// Removes repeated targets, keeping first occurrences in order.
inline std::vector<BeamTarget> dedup_targets(const std::vector<BeamTarget>& in, std::ostream& log) {
  std::vector<BeamTarget> out;
  std::set<BeamTarget> seen;
  for (const auto& t : in) {
    if (seen.insert(t).second)
      out.push_back(t);
    else
      log << "notice: duplicate target (" << t.azimuth << ", " << t.elevation << ") dropped\n";
  }
  return out;
}

struct Job {
  std::string id;
  Codebook codebook;
  std::optional<BeamTarget> target;
};

/// Codebook files first (id = file stem), then one synthesized codebook per
/// distinct beam target.
inline std::vector<Job> collect_jobs(const Context& ctx, std::ostream& log) {
  std::vector<Job> jobs;
  std::set<std::string> ids;
  for (const auto& p : ctx.cfg.codebooks) {
    Job j{p.stem().string(), io::load_codebook(p), std::nullopt};
    if (!ids.insert(j.id).second) {
      log << "notice: duplicate codebook id '" << j.id << "' dropped\n";
      continue;
    }
    jobs.push_back(std::move(j));
  }
  for (const auto& t : dedup_targets(ctx.cfg.targets, log)) {
    Job j{target_id(t),
          phase_gradient_codebook(ctx.cfg.layout, ctx.tpl.pitch(), ctx.cfg.incident, t,
                                  ctx.cfg.wavelength, ctx.tpl.k_bits()),
          t};
    if (!ids.insert(j.id).second) continue;
    jobs.push_back(std::move(j));
  }
  if (jobs.empty()) log << "warning: no beam targets or codebook files configured\n";
  return jobs;
}

/// Writes template.json, one codebook file per distinct target and
/// targets.csv. Returns the codebook paths.
inline std::vector<fs::path> cmd_gen(const Context& ctx, std::ostream& log) {
  io::save_template(ctx.out("template.json"), ctx.tpl);
  std::vector<fs::path> written;
  std::ostringstream targets;
  targets << "codebook_id,azimuth,elevation\n";
  const auto list = dedup_targets(ctx.cfg.targets, log);
  if (list.empty()) log << "warning: empty target list, no codebooks generated\n";
  for (const auto& t : list) {
    const Codebook cb = phase_gradient_codebook(ctx.cfg.layout, ctx.tpl.pitch(), ctx.cfg.incident,
                                                t, ctx.cfg.wavelength, ctx.tpl.k_bits());
    const fs::path p = ctx.out(fs::path("codebooks") / (target_id(t) + ".json"));
    io::save_codebook(p, cb);
    written.push_back(p);
    targets << target_id(t) << "," << t.azimuth << "," << t.elevation << "\n";
  }
  io::write_text(ctx.out("targets.csv"), targets.str());
  log << "gen: " << written.size() << " codebook(s) in " << ctx.out("codebooks").string() << "\n";
  return written;
}

// --- assemble -----------------------------------------------------------------

struct AssemblyRecord {
  Index N = 0;
  bool from_cache = false;
  std::uint64_t kernel_evals = 0;
  double assemble_ms = 0.0;
  Index distinct_patterns = 0;
  Index lowrank_scalars = 0;
  Index dense_scalars = 0;
  Index max_rank = 0;
  std::uint64_t hash = 0;

  std::string csv_row() const {
    std::ostringstream os;
    char h[17];
    std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(hash));
    os << N << "," << (from_cache ? 1 : 0) << "," << kernel_evals << "," << assemble_ms << ","
       << distinct_patterns << "," << lowrank_scalars << "," << dense_scalars << "," << max_rank
       << "," << h;
    return os.str();
  }
};

struct Assembled {
  VirtualHMatrix H;
  StorageReport report;
  NearFieldMatrix near_field;
  AssemblyRecord record;

  Index stored_scalars() const {
    return report.total_lowrank_scalars() + report.total_dense_scalars();
  }
};

namespace detail {

inline Assembled finish_assembly(const Context& ctx, VirtualHMatrix H, StorageReport report,
                                 bool from_cache, std::uint64_t evals,
                                 std::chrono::steady_clock::time_point t0) {
  Assembled a;
  a.near_field = extract_near_field(H);
  a.H = std::move(H);
  a.report = std::move(report);
  a.record.N = ctx.sites.size();
  a.record.from_cache = from_cache;
  a.record.kernel_evals = evals;
  a.record.assemble_ms = ms_since(t0);
  a.record.distinct_patterns = a.report.total_distinct();
  a.record.lowrank_scalars = a.report.total_lowrank_scalars();
  a.record.dense_scalars = a.report.total_dense_scalars();
  a.record.max_rank = a.report.max_rank;
  a.record.hash = ctx.hash;
  return a;
}

inline Assembled load_cached(const Context& ctx, std::chrono::steady_clock::time_point t0) {
  const std::uint64_t before = kernel_eval_count();
  auto loaded = cache::load(ctx.cache_path(), ctx.sites, ctx.kernel, ctx.cfg.hparams);
  return finish_assembly(ctx, std::move(loaded.matrix), std::move(loaded.report), true,
                         kernel_eval_count() - before, t0);
}

}  // namespace detail

/// Assembles the virtual H-matrix once, or loads it from the cache when one
/// exists. A cache built for different parameters is rejected unless `force`
/// is set, in which case it is rebuilt.
inline Assembled cmd_assemble(const Context& ctx, bool force, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  Assembled a;
  if (!force && fs::exists(ctx.cache_path())) {
    a = detail::load_cached(ctx, t0);
    log << "assemble: loaded " << ctx.cache_path().string() << " (N = " << a.record.N << ")\n";
  } else {
    const std::uint64_t before = kernel_eval_count();
    auto va = assemble_virtual(ctx.sites, ctx.kernel, ctx.cfg.hparams);
    const std::uint64_t evals = kernel_eval_count() - before;
    cache::save(ctx.cache_path(), va.matrix, va.report, ctx.hash);
    a = detail::finish_assembly(ctx, std::move(va.matrix), std::move(va.report), false, evals, t0);
    log << "assemble: N = " << a.record.N << ", " << evals << " kernel evaluations, "
        << a.record.distinct_patterns << " distinct patterns\n";
  }
  if (a.report.max_rank_exhausted > 0)
    log << "warning: " << a.report.max_rank_exhausted
        << " low-rank block(s) stopped at aca_max_rank before reaching aca_eps\n";
  io::write_text(ctx.out("storage.csv"), a.report.to_csv());
  io::write_text(ctx.out("assembly.csv"),
                 std::string(assembly_header) + "\n" + a.record.csv_row() + "\n");
  return a;
}

/// Loads an existing cache; solving never assembles.
inline Assembled load_assembled(const Context& ctx) {
  require(fs::exists(ctx.cache_path()), Errc::io_error,
          "no assembled cache at " + ctx.cache_path().string() + "; run assemble first");
  return detail::load_cached(ctx, std::chrono::steady_clock::now());
}

// --- solve --------------------------------------------------------------------

struct SummaryRow {
  std::string codebook_id;
  Index n_active = 0;
  Index iters = 0;
  double relres = 0.0;
  bool converged = false;
  double assemble_ms = 0.0;
  double factorize_ms = 0.0;
  double solve_ms = 0.0;
  std::uint64_t peak_bytes = 0;

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << codebook_id << "," << n_active << "," << iters << "," << relres << ","
       << (converged ? 1 : 0) << "," << assemble_ms << "," << factorize_ms << "," << solve_ms
       << "," << peak_bytes;
    return os.str();
  }
};

struct SolveOutcome {
  SummaryRow row;
  SolveReport report;
  Lobe lobe;
  MaskVector mask;
};

/// Modeled peak working set in bytes: stored matrix content, the near-field
/// copy and its factors, and the Krylov vectors.
inline std::uint64_t modeled_peak_bytes(const Assembled& a, Index n) {
  const std::uint64_t scalars = a.stored_scalars() + 2 * a.near_field.scalars() + 12 * n;
  return scalars * sizeof(Complex);
}

/// Builds the mask for one codebook, factorizes the retrieved near-field
/// preconditioner, runs BiCGStab on the masked operator and writes the
/// per-codebook outputs. The summary file is written last and marks the
/// solve as complete.
inline SolveOutcome solve_codebook(const Context& ctx, const Assembled& a, const Codebook& cb,
                                   const std::string& id) {
  if (cb.m != ctx.cfg.layout.m || cb.n != ctx.cfg.layout.n)
    throw Error(Errc::config_error, "codebook '" + id + "' is " + std::to_string(cb.m) + "x" +
                                        std::to_string(cb.n) + ", array is " +
                                        std::to_string(ctx.cfg.layout.m) + "x" +
                                        std::to_string(ctx.cfg.layout.n));
  SolveOutcome out;
  out.mask = build_mask(ctx.tpl, ctx.cfg.layout, cb);
  const MaskVector& D = out.mask;

  const auto tf = std::chrono::steady_clock::now();
  NearFieldPreconditioner M;
  if (ctx.cfg.precondition) M = factorize(a.near_field, D);
  const double factorize_ms = ms_since(tf);

  const Vector U = masked_rhs(
      plane_wave_rhs(ctx.sites, direction(ctx.cfg.incident) * -1.0, ctx.cfg.polar_weight,
                     ctx.cfg.kappa()),
      D);
  const auto ts = std::chrono::steady_clock::now();
  out.report = bicgstab(masked_operator(a.H, D), U,
                        ctx.cfg.precondition ? as_preconditioner(M) : Preconditioner{},
                        ctx.cfg.solve, &D);
  const double solve_ms = ms_since(ts);

  const FarFieldGrid ff = far_field(ctx.sites, out.report.x, ctx.cfg.kappa(), ctx.cfg.grid);
  if (out.report.x.cwiseAbs().maxCoeff() > 0.0) out.lobe = main_lobe(ff);

  out.row = {id,
             D.active_count(),
             out.report.iterations,
             out.report.final_relres(),
             out.report.converged,
             a.record.assemble_ms,
             factorize_ms,
             solve_ms,
             modeled_peak_bytes(a, ctx.sites.size())};

  const fs::path dir = ctx.out(fs::path("solves") / id);
  io::write_text(dir / "x.csv", io::vector_csv(out.report.x));
  io::write_text(dir / "residual.csv", out.report.history_csv());
  io::write_text(dir / "farfield.csv", ff.to_csv());
  if (ctx.cfg.export_mask) io::write_text(dir / "mask.json", io::to_json(D).dump() + "\n");
  io::write_text(dir / "summary.csv", std::string(summary_header) + "\n" + out.row.csv_row() + "\n");
  return out;
}

struct SolveResult {
  SummaryRow row;
  Lobe lobe;
  int exit_code = exit_ok;
};

inline SolveResult cmd_solve(const Context& ctx, const fs::path& codebook_path, std::ostream& log) {
  const Assembled a = load_assembled(ctx);
  const std::uint64_t before = kernel_eval_count();
  const auto out = solve_codebook(ctx, a, io::load_codebook(codebook_path),
                                  codebook_path.stem().string());
  require(kernel_eval_count() == before, Errc::internal, "solve evaluated kernel entries");
  log << "solve " << out.row.codebook_id << ": " << out.row.iters << " iterations, relres "
      << out.row.relres << (out.row.converged ? "" : " (not converged)") << "\n";
  return {out.row, out.lobe, out.row.converged ? exit_ok : exit_non_convergence};
}

// --- sweep --------------------------------------------------------------------

struct SweepResult {
  std::vector<std::string> rows;  // summary rows in job order
  std::vector<std::pair<std::string, std::string>> failures;
  Index resumed = 0;
  Index non_converged = 0;
  AssemblyRecord assembly;
  std::uint64_t evals_after_assembly = 0;
  std::uint64_t evals_after_solves = 0;
  int exit_code = exit_ok;
};

namespace detail {

/// Second line of a per-codebook summary file, if the file is complete.
inline std::optional<std::string> completed_row(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  std::istringstream is(io::read_text(p));
  std::string header, row;
  if (!std::getline(is, header) || header != summary_header || !std::getline(is, row) ||
      row.empty())
    return std::nullopt;
  return row;
}

inline bool row_converged(const std::string& row) {
  std::vector<std::string> cols;
  std::string c;
  std::istringstream is(row);
  while (std::getline(is, c, ',')) cols.push_back(c);
  return cols.size() == 9 && cols[4] == "1";
}

inline std::string bundle_manifest(const Context& ctx, const std::vector<std::string>& ids) {
  nlohmann::json j;
  for (const char* name : {"summary.csv", "storage.csv", "assembly.csv", "scaling.csv",
                           "lobes.csv", "iters_hist.csv", "sweep_log.csv", "targets.csv"}) {
    if (fs::exists(ctx.out(name))) j[fs::path(name).stem().string()] = name;
  }
  nlohmann::json solves = nlohmann::json::array();
  for (const auto& id : ids) {
    const fs::path dir = fs::path("solves") / id;
    if (!fs::exists(ctx.out(dir / "summary.csv"))) continue;
    solves.push_back({{"id", id},
                      {"residual", (dir / "residual.csv").generic_string()},
                      {"farfield", (dir / "farfield.csv").generic_string()},
                      {"summary", (dir / "summary.csv").generic_string()}});
  }
  j["solves"] = solves;
  return j.dump(2) + "\n";
}

}  // namespace detail

/// Assembles (or loads) once, then solves every codebook against the shared
/// matrix. Codebooks whose per-codebook summary already exists are skipped,
/// so an interrupted sweep resumes where it stopped; `force` discards them.
/// Failures are isolated.
inline SweepResult cmd_sweep(const Context& ctx, bool force, std::ostream& log) {
  SweepResult res;
  if (force && fs::exists(ctx.out("solves"))) fs::remove_all(ctx.out("solves"));
  const auto jobs = collect_jobs(ctx, log);
  for (const auto& j : jobs)
    if (j.target) io::save_codebook(ctx.out(fs::path("codebooks") / (j.id + ".json")), j.codebook);

  const Assembled a = cmd_assemble(ctx, force, log);
  res.assembly = a.record;
  res.evals_after_assembly = kernel_eval_count();

  struct Slot {
    std::optional<std::string> row;
    std::optional<Lobe> lobe;
    std::string error;
    bool resumed = false;
    std::uint64_t before = 0, after = 0;
  };
  std::vector<Slot> slots(jobs.size());
  std::vector<Index> pending;
  for (Index k = 0; k < jobs.size(); ++k) {
    slots[k].row = detail::completed_row(ctx.out(fs::path("solves") / jobs[k].id / "summary.csv"));
    if (slots[k].row) {
      slots[k].resumed = true;
      slots[k].before = slots[k].after = res.evals_after_assembly;
    } else {
      pending.push_back(k);
    }
  }
  res.resumed = jobs.size() - pending.size();
  if (res.resumed > 0) log << "sweep: resuming, " << res.resumed << " codebook(s) already done\n";

  std::atomic<Index> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (Index q = next++; q < pending.size(); q = next++) {
      const Index k = pending[q];
      Slot& s = slots[k];
      s.before = kernel_eval_count();
      try {
        const auto out = solve_codebook(ctx, a, jobs[k].codebook, jobs[k].id);
        s.row = out.row.csv_row();
        s.lobe = out.lobe;
      } catch (const std::exception& e) {
        s.error = e.what();
      }
      s.after = kernel_eval_count();
      std::lock_guard lock(log_mutex);
      if (s.error.empty())
        log << "sweep: " << jobs[k].id << " done\n";
      else
        log << "sweep: " << jobs[k].id << " failed: " << s.error << "\n";
    }
  };
  const int nthreads = std::max(1, std::min<int>(ctx.cfg.threads, static_cast<int>(pending.size())));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  res.evals_after_solves = kernel_eval_count();

  std::ostringstream summary, log_csv, lobes, failures;
  summary << summary_header << "\n";
  log_csv << "codebook_id,kernel_evals_before,kernel_evals_after,resumed\n";
  lobes << "codebook_id,target_az,target_el,lobe_az,lobe_el,lobe_db,degenerate\n";
  failures << "codebook_id,error\n";
  std::map<Index, Index> hist;
  std::vector<std::string> ids;
  for (Index k = 0; k < jobs.size(); ++k) {
    const Slot& s = slots[k];
    ids.push_back(jobs[k].id);
    log_csv << jobs[k].id << "," << s.before << "," << s.after << "," << (s.resumed ? 1 : 0)
            << "\n";
    if (!s.row) {
      res.failures.emplace_back(jobs[k].id, s.error);
      std::string msg = s.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      failures << jobs[k].id << "," << msg << "\n";
      continue;
    }
    res.rows.push_back(*s.row);
    summary << *s.row << "\n";
    if (!detail::row_converged(*s.row)) ++res.non_converged;
    const auto cols = [&] {
      std::vector<std::string> c;
      std::string item;
      std::istringstream is(*s.row);
      while (std::getline(is, item, ',')) c.push_back(item);
      return c;
    }();
    ++hist[static_cast<Index>(std::stoul(cols.at(2)))];
    Lobe lobe;
    if (s.lobe) {
      lobe = *s.lobe;
    } else {
      const auto ff = io::read_text(ctx.out(fs::path("solves") / jobs[k].id / "farfield.csv"));
      // Resumed solve: recover the lobe from its far-field file.
      std::istringstream is(ff);
      std::string line;
      std::getline(is, line);
      FarFieldGrid g;
      while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string f[5];
        for (auto& x : f) std::getline(ls, x, ',');
        g.directions.push_back({std::stod(f[0]), std::stod(f[1])});
        g.values.emplace_back(std::stod(f[2]), std::stod(f[3]));
      }
      if (!g.values.empty() && std::any_of(g.values.begin(), g.values.end(),
                                           [](Complex v) { return std::abs(v) > 0.0; }))
        lobe = main_lobe(g);
    }
    lobes << jobs[k].id << ",";
    if (jobs[k].target)
      lobes << jobs[k].target->azimuth << "," << jobs[k].target->elevation;
    else
      lobes << ",";
    lobes << "," << lobe.direction.azimuth << "," << lobe.direction.elevation << ","
          << (lobe.magnitude > 0.0 ? 20.0 * std::log10(lobe.magnitude) : FarFieldGrid::db_floor)
          << "," << (lobe.degenerate ? 1 : 0) << "\n";
  }
  io::write_text(ctx.out("summary.csv"), summary.str());
  io::write_text(ctx.out("sweep_log.csv"), log_csv.str());
  io::write_text(ctx.out("lobes.csv"), lobes.str());
  std::ostringstream h;
  h << "iters,count\n";
  for (const auto& [it, count] : hist) h << it << "," << count << "\n";
  io::write_text(ctx.out("iters_hist.csv"), h.str());
  if (!res.failures.empty())
    io::write_text(ctx.out("failures.csv"), failures.str());
  else if (fs::exists(ctx.out("failures.csv")))
    fs::remove(ctx.out("failures.csv"));
  io::write_text(ctx.out("bundle.json"), detail::bundle_manifest(ctx, ids));

  log << "sweep: " << res.rows.size() << " solved, " << res.failures.size() << " failed, "
      << res.non_converged << " not converged\n";
  if (!res.failures.empty())
    res.exit_code = exit_failure;
  else if (res.non_converged > 0)
    res.exit_code = exit_non_convergence;
  return res;
}

// --- report-data --------------------------------------------------------------

struct ScalingRow {
  ArrayLayout layout;
  Index N = 0;
  Index classical_lowrank = 0, virtual_lowrank = 0;
  Index classical_dense = 0, virtual_dense = 0;
  Index classical_blocks = 0, distinct_patterns = 0;
  Index max_rank = 0;
};

inline ScalingRow scaling_row(const MacroUnitTemplate& tpl, ArrayLayout layout,
                              const KernelSpec& kernel, const HParams& hp) {
  const SiteSet sites(tpl, layout);
  const auto va = assemble_virtual(sites, kernel, hp);
  ScalingRow r;
  r.layout = layout;
  r.N = sites.size();
  r.classical_lowrank = va.report.total_classical_lowrank_scalars();
  r.virtual_lowrank = va.report.total_lowrank_scalars();
  r.classical_dense = va.report.total_classical_dense_scalars();
  r.virtual_dense = va.report.total_dense_scalars();
  for (const auto& l : va.report.levels) r.classical_blocks += l.classical_blocks;
  r.distinct_patterns = va.report.total_distinct();
  r.max_rank = va.report.max_rank;
  return r;
}

/// Writes scaling.csv over report.sizes (the configured layout when empty)
/// and refreshes bundle.json.
inline std::vector<ScalingRow> cmd_report_data(const Context& ctx, std::ostream& log) {
  auto sizes = ctx.cfg.scaling_sizes;
  if (sizes.empty()) sizes.push_back(ctx.cfg.layout);
  std::vector<ScalingRow> rows;
  std::ostringstream os;
  os << scaling_header << "\n";
  for (const auto& L : sizes) {
    const auto r = scaling_row(ctx.tpl, L, ctx.kernel, ctx.cfg.hparams);
    rows.push_back(r);
    os << L.m << "," << L.n << "," << r.N << "," << r.classical_lowrank << "," << r.virtual_lowrank
       << "," << r.classical_dense << "," << r.virtual_dense << "," << r.classical_blocks << ","
       << r.distinct_patterns << "," << r.max_rank << "\n";
    log << "report-data: " << L.m << "x" << L.n << " N = " << r.N << "\n";
  }
  io::write_text(ctx.out("scaling.csv"), os.str());
  std::vector<std::string> ids;
  if (fs::exists(ctx.out("solves")))
    for (const auto& e : fs::directory_iterator(ctx.out("solves")))
      if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  io::write_text(ctx.out("bundle.json"), detail::bundle_manifest(ctx, ids));
  return rows;
}

}  // namespace qphm::cli
