// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file geometry.hpp
 * @brief Macro-unit templates, periodic array instantiation and per-codebook
 *        activity masks.
 *
 * A macro unit is the union of every coding state of one array element. Each
 * template site carries the set of states in which it physically exists, plus
 * flags marking the bridge sites that sit on the -x / -y face of the cell and
 * model continuity with the neighbouring unit. Replacing every unit by the
 * macro unit makes the array rigorously periodic; a codebook then only selects
 * which sites are active.
 *
 * Global site ordering is unit-major: unit (i, j) has index u = i * n + j and
 * owns the contiguous range [u * S, (u + 1) * S).
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qphm/mask.hpp"
#include "qphm/types.hpp"

namespace qphm {

using StateMask = std::uint64_t;

inline constexpr int max_k_bits = 6;

struct Pitch {
  double px = 1.0;
  double py = 1.0;

  constexpr bool operator==(const Pitch&) const = default;
};

struct TemplateSite {
  Point3 pos;
  StateMask states = 0;
  bool bridge_x = false;
  bool bridge_y = false;

  bool has_state(int s) const { return (states >> s) & 1u; }
  bool operator==(const TemplateSite&) const = default;
};

inline StateMask full_state_mask(int k_bits) {
  const int count = 1 << k_bits;
  return count >= 64 ? ~StateMask{0} : ((StateMask{1} << count) - 1);
}

class MacroUnitTemplate {
 public:
  MacroUnitTemplate() = default;

  /// Validates the sites and sorts them by (z, y, x), preserving insertion
  /// order among equal keys.
  MacroUnitTemplate(int k_bits, Pitch pitch, std::vector<TemplateSite> sites)
      : k_bits_(k_bits), pitch_(pitch), sites_(std::move(sites)) {
    require(k_bits_ >= 1 && k_bits_ <= max_k_bits, Errc::invalid_parameter,
            "k_bits must lie in [1, " + std::to_string(max_k_bits) + "]");
    require(pitch_.px > 0.0 && pitch_.py > 0.0, Errc::invalid_parameter,
            "cell pitch must be positive");
    require(!sites_.empty(), Errc::invalid_parameter, "template has no sites");

    std::stable_sort(sites_.begin(), sites_.end(), [](const auto& a, const auto& b) {
      if (a.pos.z != b.pos.z) return a.pos.z < b.pos.z;
      if (a.pos.y != b.pos.y) return a.pos.y < b.pos.y;
      return a.pos.x < b.pos.x;
    });

    const StateMask full = full_state_mask(k_bits_);
    StateMask covered = 0;
    for (const auto& s : sites_) {
      require(s.pos.finite(), Errc::invalid_parameter, "site position not finite");
      require((s.states & ~full) == 0, Errc::invalid_parameter,
              "site state mask references a state >= 2^k_bits");
      require(s.states != 0, Errc::invalid_parameter, "site belongs to no state");
      require(s.pos.x >= 0.0 && s.pos.x < pitch_.px && s.pos.y >= 0.0 && s.pos.y < pitch_.py,
              Errc::invalid_parameter, "site lies outside the unit cell");
      require(!s.bridge_x || s.pos.x == 0.0, Errc::invalid_parameter,
              "bridge-x site must have local x = 0");
      require(!s.bridge_y || s.pos.y == 0.0, Errc::invalid_parameter,
              "bridge-y site must have local y = 0");
      covered |= s.states;
    }
    require(covered == full, Errc::invalid_parameter, "some coding state has no site");
    for (Index i = 1; i < sites_.size(); ++i)
      require(!(sites_[i].pos == sites_[i - 1].pos), Errc::invalid_parameter,
              "duplicate site position");
  }

  int k_bits() const { return k_bits_; }
  int state_count() const { return 1 << k_bits_; }
  Pitch pitch() const { return pitch_; }
  Index size() const { return sites_.size(); }
  const std::vector<TemplateSite>& sites() const { return sites_; }
  const TemplateSite& site(Index l) const { return sites_[l]; }

  std::vector<Point3> positions() const {
    std::vector<Point3> out;
    out.reserve(sites_.size());
    for (const auto& s : sites_) out.push_back(s.pos);
    return out;
  }

  Box bbox() const {
    Box b;
    for (const auto& s : sites_) b.include(s.pos);
    return b;
  }

  /// Smallest distance between two distinct sites, including the periodic
  /// images in the four neighbouring cells.
  double min_spacing() const {
    double best = std::numeric_limits<double>::infinity();
    const Point3 shifts[] = {{0, 0, 0}, {pitch_.px, 0, 0}, {0, pitch_.py, 0},
                             {pitch_.px, pitch_.py, 0}, {pitch_.px, -pitch_.py, 0}};
    for (Index a = 0; a < sites_.size(); ++a)
      for (Index b = 0; b < sites_.size(); ++b)
        for (const auto& sh : shifts) {
          if (a == b && sh == Point3{}) continue;
          best = std::min(best, (sites_[a].pos - (sites_[b].pos + sh)).norm());
        }
    return best;
  }

  bool operator==(const MacroUnitTemplate&) const = default;

 private:
  int k_bits_ = 1;
  Pitch pitch_{};
  std::vector<TemplateSite> sites_;
};

struct ArrayLayout {
  Index m = 1;  // units along x
  Index n = 1;  // units along y

  Index units() const { return m * n; }
  constexpr bool operator==(const ArrayLayout&) const = default;
};

inline void validate(const ArrayLayout& layout) {
  require(layout.m >= 1 && layout.n >= 1, Errc::invalid_parameter, "array layout must be >= 1x1");
}

/// One coding state per unit, stored as states[i * n + j].
struct Codebook {
  Index m = 0;
  Index n = 0;
  std::vector<int> states;

  Codebook() = default;
  Codebook(Index m_, Index n_, int fill = 0) : m(m_), n(n_), states(m_ * n_, fill) {}
  Codebook(Index m_, Index n_, std::vector<int> s) : m(m_), n(n_), states(std::move(s)) {
    require(states.size() == m * n, Errc::dimension_mismatch, "codebook size != m*n");
  }

  int& at(Index i, Index j) { return states[i * n + j]; }
  int at(Index i, Index j) const { return states[i * n + j]; }

  bool operator==(const Codebook&) const = default;
};

inline void validate(const Codebook& cb, int k_bits) {
  require(cb.states.size() == cb.m * cb.n, Errc::dimension_mismatch, "codebook size != m*n");
  for (int s : cb.states)
    require(s >= 0 && s < (1 << k_bits), Errc::invalid_parameter,
            "codebook entry outside [0, 2^k_bits)");
}

struct UnitCoord {
  Index i = 0;
  Index j = 0;
  constexpr bool operator==(const UnitCoord&) const = default;
};

/// All sites of an m x n array of macro units, in unit-major order.
class SiteSet {
 public:
  SiteSet() = default;

  SiteSet(MacroUnitTemplate tpl, ArrayLayout layout)
      : tpl_(std::move(tpl)), layout_(layout), local_(tpl_.positions()) {
    validate(layout_);
    const Index S = local_.size();
    positions_.resize(layout_.units() * S);
    for (Index i = 0; i < layout_.m; ++i)
      for (Index j = 0; j < layout_.n; ++j) {
        const Point3 offset = lattice_offset(i, j);
        const Index base = (i * layout_.n + j) * S;
        for (Index l = 0; l < S; ++l) positions_[base + l] = local_[l] + offset;
      }
  }

  Index size() const { return positions_.size(); }
  Index sites_per_unit() const { return local_.size(); }
  const ArrayLayout& layout() const { return layout_; }
  const MacroUnitTemplate& unit_template() const { return tpl_; }
  const std::vector<Point3>& positions() const { return positions_; }
  const Point3& position(Index g) const { return positions_[g]; }

  Index unit_index(Index g) const { return g / local_.size(); }
  Index local_of(Index g) const { return g % local_.size(); }
  UnitCoord unit_of(Index g) const {
    const Index u = unit_index(g);
    return {u / layout_.n, u % layout_.n};
  }
  Index global_index(Index i, Index j, Index l) const {
    return (i * layout_.n + j) * local_.size() + l;
  }

  Point3 lattice_offset(Index i, Index j) const {
    return {static_cast<double>(i) * tpl_.pitch().px, static_cast<double>(j) * tpl_.pitch().py,
            0.0};
  }

  /// Lattice translation for an integer cell offset.
  Point3 lattice_shift(long di, long dj) const {
    return {static_cast<double>(di) * tpl_.pitch().px, static_cast<double>(dj) * tpl_.pitch().py,
            0.0};
  }

  /// r_a - r_b computed as (local difference) + (lattice difference). The
  /// result depends only on the two template sites and the integer cell
  /// offset, so translated unit pairs produce bit-identical displacements.
  Point3 displacement(Index a, Index b) const {
    const UnitCoord ua = unit_of(a);
    const UnitCoord ub = unit_of(b);
    const Point3 local = local_[local_of(a)] - local_[local_of(b)];
    return local + lattice_shift(static_cast<long>(ua.i) - static_cast<long>(ub.i),
                                 static_cast<long>(ua.j) - static_cast<long>(ub.j));
  }

 private:
  MacroUnitTemplate tpl_;
  ArrayLayout layout_;
  std::vector<Point3> local_;
  std::vector<Point3> positions_;
};

// ============================================================================
// Template builders
// ============================================================================

/// g x g grid of 1-bit sites at the given height: the left-half columns exist
/// in state 0, the right-half columns in state 1, the middle column (g odd) in
/// both. Adds g bridge-x sites on x = 0 and g bridge-y sites on y = 0, present
/// in both states. S = g*g + 2g.
inline MacroUnitTemplate build_split_grid_template(int g, Pitch pitch, double height = 0.0) {
  require(g >= 2, Errc::invalid_parameter, "split grid needs g >= 2");
  const double hx = pitch.px / g;
  const double hy = pitch.py / g;
  std::vector<TemplateSite> sites;
  sites.reserve(static_cast<Index>(g * g + 2 * g));
  for (int b = 0; b < g; ++b)
    for (int a = 0; a < g; ++a) {
      StateMask mask;
      if (g % 2 == 1 && a == g / 2)
        mask = 0b11;
      else
        mask = (a < g / 2) ? 0b01 : 0b10;
      sites.push_back({{(a + 0.5) * hx, (b + 0.5) * hy, height}, mask, false, false});
    }
  for (int b = 0; b < g; ++b) sites.push_back({{0.0, (b + 0.5) * hy, height}, 0b11, true, false});
  for (int a = 0; a < g; ++a) sites.push_back({{(a + 0.5) * hx, 0.0, height}, 0b11, false, true});
  return MacroUnitTemplate(1, pitch, std::move(sites));
}

/// Always-present layer (e.g. a ground-plane proxy): g x g grid plus bridges,
/// every site active in every state.
inline MacroUnitTemplate build_ground_layer(int g, int k_bits, Pitch pitch, double height = 0.0) {
  require(g >= 1, Errc::invalid_parameter, "ground layer needs g >= 1");
  const StateMask full = full_state_mask(k_bits);
  const double hx = pitch.px / g;
  const double hy = pitch.py / g;
  std::vector<TemplateSite> sites;
  for (int b = 0; b < g; ++b)
    for (int a = 0; a < g; ++a)
      sites.push_back({{(a + 0.5) * hx, (b + 0.5) * hy, height}, full, false, false});
  for (int b = 0; b < g; ++b) sites.push_back({{0.0, (b + 0.5) * hy, height}, full, true, false});
  for (int a = 0; a < g; ++a) sites.push_back({{(a + 0.5) * hx, 0.0, height}, full, false, true});
  return MacroUnitTemplate(k_bits, pitch, std::move(sites));
}

/// One g x g grid per coding state, state s stacked at base + s * step. No
/// bridge sites. The height difference gives each state a distinct scattering
/// phase, which is what the beam-steering workflow relies on.
inline MacroUnitTemplate build_stacked_state_template(int g, int k_bits, Pitch pitch,
                                                      double base_height, double layer_step) {
  require(g >= 1, Errc::invalid_parameter, "stacked template needs g >= 1");
  require(layer_step != 0.0, Errc::invalid_parameter, "layer step must be non-zero");
  const double hx = pitch.px / g;
  const double hy = pitch.py / g;
  std::vector<TemplateSite> sites;
  for (int s = 0; s < (1 << k_bits); ++s)
    for (int b = 0; b < g; ++b)
      for (int a = 0; a < g; ++a)
        sites.push_back({{(a + 0.5) * hx, (b + 0.5) * hy, base_height + s * layer_step},
                         StateMask{1} << s, false, false});
  return MacroUnitTemplate(k_bits, pitch, std::move(sites));
}

/// Union of two templates with identical pitch and k_bits.
inline MacroUnitTemplate merge_templates(const MacroUnitTemplate& a, const MacroUnitTemplate& b) {
  require(a.pitch() == b.pitch() && a.k_bits() == b.k_bits(), Errc::invalid_parameter,
          "merged templates must share pitch and k_bits");
  std::vector<TemplateSite> sites = a.sites();
  sites.insert(sites.end(), b.sites().begin(), b.sites().end());
  return MacroUnitTemplate(a.k_bits(), a.pitch(), std::move(sites));
}

/// Two-layer 1-bit template with 1056 sites per unit: a g = 22 split-grid
/// patch layer above a g = 22 ground layer.
inline MacroUnitTemplate build_paper_scale_template(Pitch pitch, double patch_height) {
  return merge_templates(build_ground_layer(22, 1, pitch, 0.0),
                         build_split_grid_template(22, pitch, patch_height));
}

inline SiteSet instantiate_array(const MacroUnitTemplate& tpl, ArrayLayout layout) {
  return SiteSet(tpl, layout);
}

/// Site (unit (i,j), local l) is active iff its state mask contains the unit's
/// state, unless it is an extended bridge site on the array's -x / -y edge.
inline MaskVector build_mask(const MacroUnitTemplate& tpl, ArrayLayout layout,
                             const Codebook& codebook) {
  validate(layout);
  require(codebook.m == layout.m && codebook.n == layout.n, Errc::invalid_parameter,
          "codebook dimensions do not match the array layout");
  validate(codebook, tpl.k_bits());
  const Index S = tpl.size();
  std::vector<std::uint8_t> bits(layout.units() * S, 0);
  for (Index i = 0; i < layout.m; ++i)
    for (Index j = 0; j < layout.n; ++j) {
      const int state = codebook.at(i, j);
      const Index base = (i * layout.n + j) * S;
      for (Index l = 0; l < S; ++l) {
        const TemplateSite& s = tpl.site(l);
        bool on = s.has_state(state);
        if (s.bridge_x && i == 0) on = false;
        if (s.bridge_y && j == 0) on = false;
        bits[base + l] = on ? 1 : 0;
      }
    }
  return MaskVector(std::move(bits));
}

}  // namespace qphm
