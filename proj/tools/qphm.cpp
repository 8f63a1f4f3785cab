// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

// qphm: generate codebooks, assemble once, solve and sweep codebooks.
//
//   qphm gen         -c run.ini
//   qphm assemble    -c run.ini [--force]
//   qphm solve       -c run.ini --codebook out/codebooks/az-30_el+0.json
//   qphm sweep       -c run.ini [--force]
//   qphm report-data -c run.ini
//
// Every config key can be overridden with --set section.key=value.
// Exit status: 0 ok, 1 failure, 2 non-convergence, 3 config error,
// 4 cache mismatch.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qphm/cli.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "INI run configuration");
  sub->add_option("--set", c.overrides, "Override a key: section.key=value")->take_all();
}

qphm::cli::Context context(const Common& c) {
  std::optional<std::filesystem::path> path;
  if (!c.config.empty()) path = c.config;
  return qphm::cli::make_context(qphm::load_config(path, c.overrides));
}

}  // namespace

int main(int argc, char** argv) {
  using namespace qphm::cli;
  CLI::App app{"Quasi-periodic H-matrix solver kit"};
  app.require_subcommand(1);

  Common gen_opts, asm_opts, solve_opts, sweep_opts, report_opts;
  bool asm_force = false, sweep_force = false;
  std::string codebook;

  auto* gen = app.add_subcommand("gen", "Write the template and one codebook per beam target");
  add_common(gen, gen_opts);
  auto* assemble = app.add_subcommand("assemble", "Assemble the shared matrix and cache it");
  add_common(assemble, asm_opts);
  assemble->add_flag("--force", asm_force, "Rebuild even if a cache exists");
  auto* solve = app.add_subcommand("solve", "Solve one codebook against the cached matrix");
  add_common(solve, solve_opts);
  solve->add_option("--codebook", codebook, "Codebook JSON file")->required();
  auto* sweep = app.add_subcommand("sweep", "Assemble once and solve every configured codebook");
  add_common(sweep, sweep_opts);
  sweep->add_flag("--force", sweep_force, "Rebuild the cache before sweeping");
  auto* report = app.add_subcommand("report-data", "Write storage scaling data and the bundle manifest");
  add_common(report, report_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_config_error;
  }

  try {
    if (*gen) {
      cmd_gen(context(gen_opts), std::cerr);
      return exit_ok;
    }
    if (*assemble) {
      cmd_assemble(context(asm_opts), asm_force, std::cerr);
      return exit_ok;
    }
    if (*solve) {
      const auto r = cmd_solve(context(solve_opts), codebook, std::cerr);
      std::cout << summary_header << "\n" << r.row.csv_row() << "\n";
      return r.exit_code;
    }
    if (*sweep) return cmd_sweep(context(sweep_opts), sweep_force, std::cerr).exit_code;
    if (*report) {
      cmd_report_data(context(report_opts), std::cerr);
      return exit_ok;
    }
  } catch (const qphm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
  return exit_failure;
}
