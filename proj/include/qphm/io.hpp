// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file io.hpp
 * @brief JSON files for templates, codebooks and masks; small CSV helpers.
 *
 * Template: {"k_bits": 1, "pitch": [px, py], "sites": [{"pos": [x, y, z],
 * "states": [0, 1], "bridge_x": false, "bridge_y": false}, ...]}.
 * Codebook: {"m": m, "n": n, "states": [[row 0], [row 1], ...]} where row i
 * lists the states of units (i, 0..n-1).
 *
 * Requires nlohmann/json (json.hpp) on the include path.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qphm/geometry.hpp"
#include "qphm/mask.hpp"
#include "qphm/types.hpp"

namespace qphm::io {

using nlohmann::json;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and renames it, so readers never see a
/// partial file.
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::io_error, "cannot write " + tmp.string());
    out << text;
    out.flush();
    require(static_cast<bool>(out), Errc::io_error, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json parse_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, path.string() + ": " + e.what());
  }
}

// --- templates --------------------------------------------------------------

inline json to_json(const MacroUnitTemplate& tpl) {
  json sites = json::array();
  for (const auto& s : tpl.sites()) {
    json states = json::array();
    for (int k = 0; k < tpl.state_count(); ++k)
      if (s.has_state(k)) states.push_back(k);
    sites.push_back({{"pos", {s.pos.x, s.pos.y, s.pos.z}},
                     {"states", states},
                     {"bridge_x", s.bridge_x},
                     {"bridge_y", s.bridge_y}});
  }
  return {{"k_bits", tpl.k_bits()}, {"pitch", {tpl.pitch().px, tpl.pitch().py}}, {"sites", sites}};
}

inline MacroUnitTemplate template_from_json(const json& j) {
  try {
    const int k_bits = j.at("k_bits").get<int>();
    require(k_bits >= 1 && k_bits <= max_k_bits, Errc::invalid_parameter, "invalid k_bits");
    const auto& p = j.at("pitch");
    require(p.is_array() && p.size() == 2, Errc::invalid_parameter, "pitch must be [px, py]");
    std::vector<TemplateSite> sites;
    for (const auto& s : j.at("sites")) {
      const auto& pos = s.at("pos");
      require(pos.is_array() && pos.size() == 3, Errc::invalid_parameter,
              "site pos must be [x, y, z]");
      TemplateSite site;
      site.pos = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
      for (const auto& st : s.at("states")) {
        const int k = st.get<int>();
        require(k >= 0 && k < (1 << k_bits), Errc::invalid_parameter,
                "site state outside [0, 2^k_bits)");
        site.states |= StateMask{1} << k;
      }
      site.bridge_x = s.value("bridge_x", false);
      site.bridge_y = s.value("bridge_y", false);
      sites.push_back(site);
    }
    return MacroUnitTemplate(k_bits, Pitch{p[0].get<double>(), p[1].get<double>()},
                             std::move(sites));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_parameter, std::string("template JSON: ") + e.what());
  }
}

inline void save_template(const std::filesystem::path& path, const MacroUnitTemplate& tpl) {
  write_text(path, to_json(tpl).dump(2) + "\n");
}

inline MacroUnitTemplate load_template(const std::filesystem::path& path) {
  return template_from_json(parse_json(path));
}

// --- codebooks --------------------------------------------------------------

inline json to_json(const Codebook& cb) {
  json rows = json::array();
  for (Index i = 0; i < cb.m; ++i) {
    json row = json::array();
    for (Index j = 0; j < cb.n; ++j) row.push_back(cb.at(i, j));
    rows.push_back(row);
  }
  return {{"m", cb.m}, {"n", cb.n}, {"states", rows}};
}

inline Codebook codebook_from_json(const json& j) {
  try {
    const Index m = j.at("m").get<Index>();
    const Index n = j.at("n").get<Index>();
    const auto& rows = j.at("states");
    require(rows.is_array() && rows.size() == m, Errc::dimension_mismatch,
            "codebook states must have m rows");
    Codebook cb(m, n);
    for (Index i = 0; i < m; ++i) {
      require(rows[i].is_array() && rows[i].size() == n, Errc::dimension_mismatch,
              "codebook row must have n entries");
      for (Index j2 = 0; j2 < n; ++j2) cb.at(i, j2) = rows[i][j2].get<int>();
    }
    return cb;
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_parameter, std::string("codebook JSON: ") + e.what());
  }
}

inline void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  write_text(path, to_json(cb).dump() + "\n");
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  return codebook_from_json(parse_json(path));
}

// --- masks and vectors --------------------------------------------------------

inline json to_json(const MaskVector& D) {
  json a = json::array();
  for (auto b : D.bits()) a.push_back(static_cast<int>(b));
  return a;
}

inline std::string vector_csv(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << "index,re,im\n";
  for (Eigen::Index i = 0; i < x.size(); ++i)
    os << i << "," << x(i).real() << "," << x(i).imag() << "\n";
  return os.str();
}

}  // namespace qphm::io
