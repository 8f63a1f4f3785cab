// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief Run configuration: an INI file plus section.key=value overrides.
 *
 * Requires Boost.PropertyTree (header-only) and nlohmann/json.
 */

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qphm/geometry.hpp"
#include "qphm/hcluster.hpp"
#include "qphm/io.hpp"
#include "qphm/kernel.hpp"
#include "qphm/solver.hpp"
#include "qphm/synthesis.hpp"
#include "qphm/types.hpp"

namespace qphm {

struct RunConfig {
  // [geometry]
  std::string template_kind = "split_grid";  // split_grid | layered | stacked | paper_scale | file
  std::filesystem::path template_file;
  int g = 4;
  int k_bits = 1;
  Pitch pitch{0.5, 0.5};
  double height = 0.0;
  double layer_step = 0.318;
  ArrayLayout layout{8, 8};

  // [kernel]
  KernelKind kernel = KernelKind::helmholtz;
  double wavelength = 1.0;
  std::optional<Complex> self_term;
  double self_term_scale = 1.0;

  // [hmatrix]
  HParams hparams;

  // [solver]
  bool precondition = true;
  SolveOptions solve;
  int threads = 1;

  // [excitation]
  BeamTarget incident{45.0, 0.0};
  Complex polar_weight{1.0, 0.0};

  // [targets]
  std::vector<BeamTarget> targets;
  std::vector<std::filesystem::path> codebooks;

  // [farfield]
  GridSpec grid;

  // [output]
  std::filesystem::path out_dir = "out";
  bool export_mask = false;

  // [report]
  std::vector<ArrayLayout> scaling_sizes;

  MacroUnitTemplate make_template() const;
  KernelSpec make_kernel(const MacroUnitTemplate& tpl) const;
  double kappa() const { return 2.0 * pi / wavelength; }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(Errc::config_error, key + ": expected a number, got '" + v + "'");
}

inline long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long d = std::stol(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(Errc::config_error, key + ": expected an integer, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::config_error, key + ": expected a boolean, got '" + v + "'");
}

/// "re" or "re,im"
inline Complex to_complex(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() == 1) return {to_double(key, parts[0]), 0.0};
  if (parts.size() == 2) return {to_double(key, parts[0]), to_double(key, parts[1])};
  throw Error(Errc::config_error, key + ": expected 're' or 're,im', got '" + v + "'");
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split(v, ',')) out.push_back(to_double(key, p));
  return out;
}

/// "az:el; az:el"
inline std::vector<BeamTarget> to_targets(const std::string& key, const std::string& v) {
  std::vector<BeamTarget> out;
  for (const auto& item : split(v, ';')) {
    const auto ae = split(item, ':');
    if (ae.size() != 2)
      throw Error(Errc::config_error, key + ": target '" + item + "' is not az:el");
    out.push_back({to_double(key, ae[0]), to_double(key, ae[1])});
  }
  return out;
}

/// "MxN"
inline ArrayLayout to_layout(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) throw Error(Errc::config_error, key + ": '" + v + "' is not MxN");
  const long m = to_long(key, trim(v.substr(0, x)));
  const long n = to_long(key, trim(v.substr(x + 1)));
  if (m < 1 || n < 1) throw Error(Errc::config_error, key + ": array sizes must be >= 1");
  return {static_cast<Index>(m), static_cast<Index>(n)};
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "geometry.template", "geometry.template_file", "geometry.g", "geometry.k_bits",
      "geometry.pitch_x", "geometry.pitch_y", "geometry.height", "geometry.layer_step",
      "geometry.m", "geometry.n",
      "kernel.kind", "kernel.wavelength", "kernel.self_term", "kernel.self_term_scale",
      "hmatrix.leafsize", "hmatrix.eta", "hmatrix.aca_eps", "hmatrix.aca_max_rank",
      "solver.precond", "solver.tol", "solver.max_iter", "solver.seed", "solver.threads",
      "excitation.azimuth", "excitation.elevation", "excitation.weight",
      "targets.list", "targets.azimuths", "targets.elevations", "targets.codebooks",
      "farfield.az_min", "farfield.az_max", "farfield.el_min", "farfield.el_max",
      "farfield.step",
      "output.dir", "output.export_mask",
      "report.sizes"};
  return keys;
}

}  // namespace detail

using ConfigTree = boost::property_tree::ptree;

inline ConfigTree read_config_tree(const std::filesystem::path& path) {
  ConfigTree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(Errc::config_error, e.what());
  }
  return tree;
}

/// Applies one "section.key=value" override.
inline void apply_override(ConfigTree& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error(Errc::config_error, "override '" + assignment + "' is not section.key=value");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos)
    throw Error(Errc::config_error, "override key '" + key + "' must be section.key");
  tree.put(key, detail::trim(assignment.substr(eq + 1)));
}

/// Converts a parsed tree into a validated RunConfig. Unknown keys are errors.
inline RunConfig to_run_config(const ConfigTree& tree) {
  using namespace detail;
  std::map<std::string, std::string> kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      if (!body.data().empty())
        throw Error(Errc::config_error, "key '" + section + "' outside a section");
      continue;
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known_keys().count(full)) throw Error(Errc::config_error, "unknown key '" + full + "'");
      kv[full] = trim(value.data());
    }
  }
  auto has = [&](const char* k) { return kv.count(k) > 0; };
  auto str = [&](const char* k) { return kv.at(k); };
  auto num = [&](const char* k) { return to_double(k, kv.at(k)); };
  auto integer = [&](const char* k) { return to_long(k, kv.at(k)); };

  RunConfig c;
  if (has("geometry.template")) c.template_kind = str("geometry.template");
  if (has("geometry.template_file")) c.template_file = str("geometry.template_file");
  if (has("geometry.g")) c.g = static_cast<int>(integer("geometry.g"));
  if (has("geometry.k_bits")) c.k_bits = static_cast<int>(integer("geometry.k_bits"));
  if (has("geometry.pitch_x")) c.pitch.px = num("geometry.pitch_x");
  if (has("geometry.pitch_y")) c.pitch.py = num("geometry.pitch_y");
  if (has("geometry.height")) c.height = num("geometry.height");
  if (has("geometry.layer_step")) c.layer_step = num("geometry.layer_step");
  if (has("geometry.m")) c.layout.m = static_cast<Index>(std::max(0L, integer("geometry.m")));
  if (has("geometry.n")) c.layout.n = static_cast<Index>(std::max(0L, integer("geometry.n")));

  if (has("kernel.kind")) {
    const auto k = str("kernel.kind");
    if (k == "helmholtz")
      c.kernel = KernelKind::helmholtz;
    else if (k == "laplace")
      c.kernel = KernelKind::laplace;
    else
      throw Error(Errc::config_error, "kernel.kind must be helmholtz or laplace, got '" + k + "'");
  }
  if (has("kernel.wavelength")) c.wavelength = num("kernel.wavelength");
  if (has("kernel.self_term")) c.self_term = to_complex("kernel.self_term", str("kernel.self_term"));
  if (has("kernel.self_term_scale")) c.self_term_scale = num("kernel.self_term_scale");

  if (has("hmatrix.leafsize")) c.hparams.leafsize = static_cast<Index>(integer("hmatrix.leafsize"));
  if (has("hmatrix.eta")) c.hparams.eta = num("hmatrix.eta");
  if (has("hmatrix.aca_eps")) c.hparams.aca_eps = num("hmatrix.aca_eps");
  if (has("hmatrix.aca_max_rank"))
    c.hparams.aca_max_rank = static_cast<Index>(integer("hmatrix.aca_max_rank"));

  if (has("solver.precond")) {
    const auto p = str("solver.precond");
    if (p == "nearfield-ilu")
      c.precondition = true;
    else if (p == "none")
      c.precondition = false;
    else
      throw Error(Errc::config_error, "solver.precond must be nearfield-ilu or none");
  }
  if (has("solver.tol")) c.solve.tol = num("solver.tol");
  if (has("solver.max_iter")) c.solve.max_iter = static_cast<Index>(integer("solver.max_iter"));
  if (has("solver.seed")) c.solve.seed = static_cast<std::uint64_t>(integer("solver.seed"));
  if (has("solver.threads")) c.threads = static_cast<int>(integer("solver.threads"));

  if (has("excitation.azimuth")) c.incident.azimuth = num("excitation.azimuth");
  if (has("excitation.elevation")) c.incident.elevation = num("excitation.elevation");
  if (has("excitation.weight"))
    c.polar_weight = to_complex("excitation.weight", str("excitation.weight"));

  if (has("targets.list")) c.targets = to_targets("targets.list", str("targets.list"));
  if (has("targets.azimuths") || has("targets.elevations")) {
    if (!has("targets.azimuths") || !has("targets.elevations"))
      throw Error(Errc::config_error, "targets.azimuths and targets.elevations go together");
    for (double az : to_doubles("targets.azimuths", str("targets.azimuths")))
      for (double el : to_doubles("targets.elevations", str("targets.elevations")))
        c.targets.push_back({az, el});
  }
  if (has("targets.codebooks"))
    for (const auto& p : split(str("targets.codebooks"), ',')) c.codebooks.emplace_back(p);

  if (has("farfield.az_min")) c.grid.az_min = num("farfield.az_min");
  if (has("farfield.az_max")) c.grid.az_max = num("farfield.az_max");
  if (has("farfield.el_min")) c.grid.el_min = num("farfield.el_min");
  if (has("farfield.el_max")) c.grid.el_max = num("farfield.el_max");
  if (has("farfield.step")) c.grid.step = num("farfield.step");

  if (has("output.dir")) c.out_dir = str("output.dir");
  if (has("output.export_mask")) c.export_mask = to_bool("output.export_mask", str("output.export_mask"));

  if (has("report.sizes"))
    for (const auto& s : split(str("report.sizes"), ','))
      c.scaling_sizes.push_back(to_layout("report.sizes", s));

  // Cross-field validation, reported as configuration errors.
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(Errc::config_error, msg);
  };
  check(c.layout.m >= 1 && c.layout.n >= 1, "geometry.m and geometry.n must be >= 1");
  check(c.wavelength > 0.0, "kernel.wavelength must be positive");
  check(c.self_term_scale > 0.0, "kernel.self_term_scale must be positive");
  check(c.threads >= 1, "solver.threads must be >= 1");
  check(c.solve.tol > 0.0, "solver.tol must be positive");
  if (c.template_kind == "file") {
    check(!c.template_file.empty(), "geometry.template = file needs geometry.template_file");
    check(std::filesystem::exists(c.template_file),
          "template file not found: " + c.template_file.string());
  }
  for (const auto& p : c.codebooks)
    check(std::filesystem::exists(p), "codebook file not found: " + p.string());
  try {
    validate(c.hparams);
    validate(c.grid);
    validate(c.incident);
    for (const auto& t : c.targets) validate(t);
  } catch (const Error& e) {
    throw Error(Errc::config_error, e.message());
  }
  return c;
}

inline RunConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides) {
  ConfigTree tree;
  if (path) {
    if (!std::filesystem::exists(*path))
      throw Error(Errc::config_error, "config file not found: " + path->string());
    tree = read_config_tree(*path);
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return to_run_config(tree);
}

inline MacroUnitTemplate RunConfig::make_template() const {
  try {
    if (template_kind == "split_grid") return build_split_grid_template(g, pitch, height);
    if (template_kind == "layered")
      return merge_templates(build_ground_layer(g, 1, pitch, 0.0),
                             build_split_grid_template(g, pitch, height));
    if (template_kind == "stacked")
      return build_stacked_state_template(g, k_bits, pitch, height, layer_step);
    if (template_kind == "paper_scale") return build_paper_scale_template(pitch, height);
    if (template_kind == "file") return io::load_template(template_file);
  } catch (const Error& e) {
    throw Error(e.code() == Errc::io_error ? Errc::io_error : Errc::config_error, e.message());
  }
  throw Error(Errc::config_error, "geometry.template must be split_grid, layered, stacked, "
                                  "paper_scale or file, got '" + template_kind + "'");
}

inline KernelSpec RunConfig::make_kernel(const MacroUnitTemplate& tpl) const {
  const Complex self = (self_term ? *self_term : default_self_term(tpl)) * self_term_scale;
  return kernel == KernelKind::laplace ? make_laplace(self) : make_helmholtz(wavelength, self);
}

}  // namespace qphm
