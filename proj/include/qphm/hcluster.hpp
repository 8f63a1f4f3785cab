// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file hcluster.hpp
 * @brief Geometric cluster trees, the admissibility test and block cluster
 *        trees.
 */

#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qphm/types.hpp"

namespace qphm {

struct HParams {
  Index leafsize = 32;
  double eta = 2.0;
  double aca_eps = 1e-4;
  Index aca_max_rank = 256;

  bool operator==(const HParams&) const = default;
};

inline void validate(const HParams& p) {
  require(p.leafsize >= 1, Errc::invalid_parameter, "leafsize must be >= 1");
  require(p.eta > 0.0, Errc::invalid_parameter, "eta must be positive");
  require(p.aca_eps > 0.0 && p.aca_eps < 1.0, Errc::invalid_parameter, "aca_eps must lie in (0,1)");
  require(p.aca_max_rank >= 1, Errc::invalid_parameter, "aca_max_rank must be >= 1");
}

struct ClusterNode {
  IndexRange range;  // into ClusterTree::perm
  Box bbox;
  std::array<int, 2> children{-1, -1};
  int depth = 0;

  bool leaf() const { return children[0] < 0; }
};

/// Binary cluster tree. perm[p] is the original index stored at tree position
/// p; every node covers a contiguous range of tree positions.
struct ClusterTree {
  std::vector<ClusterNode> nodes;
  std::vector<Index> perm;

  const ClusterNode& root() const { return nodes.front(); }
  const ClusterNode& operator[](int id) const { return nodes[static_cast<Index>(id)]; }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth + 1);
    return d;
  }

  std::vector<int> leaves() const {
    std::vector<int> out;
    collect_leaves(0, out);
    return out;
  }

 private:
  void collect_leaves(int id, std::vector<int>& out) const {
    const auto& n = nodes[static_cast<Index>(id)];
    if (n.leaf()) {
      out.push_back(id);
      return;
    }
    collect_leaves(n.children[0], out);
    collect_leaves(n.children[1], out);
  }
};

namespace detail {

inline int build_cluster(ClusterTree& tree, std::span<const Point3> pos, Index begin, Index end,
                         Index leafsize, int depth) {
  ClusterNode node;
  node.range = {begin, end - begin};
  node.depth = depth;
  for (Index p = begin; p < end; ++p) node.bbox.include(pos[tree.perm[p]]);
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(node);
  if (end - begin <= leafsize) return id;

  // Longest axis; x before y before z on ties.
  const Point3 ext = node.bbox.hi - node.bbox.lo;
  int axis = 0;
  if (ext.y > ext.x) axis = 1;
  if (ext.z > (axis == 0 ? ext.x : ext.y)) axis = 2;
  auto coord = [&](Index i) {
    const Point3& p = pos[i];
    return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
  };
  std::sort(tree.perm.begin() + static_cast<std::ptrdiff_t>(begin),
            tree.perm.begin() + static_cast<std::ptrdiff_t>(end), [&](Index a, Index b) {
              const double ca = coord(a), cb = coord(b);
              return ca != cb ? ca < cb : a < b;
            });
  const Index mid = begin + (end - begin + 1) / 2;
  const int left = build_cluster(tree, pos, begin, mid, leafsize, depth + 1);
  const int right = build_cluster(tree, pos, mid, end, leafsize, depth + 1);
  tree.nodes[static_cast<Index>(id)].children = {left, right};
  return id;
}

}  // namespace detail

/// Recursive median bisection along the longest bounding-box axis. The lower
/// half receives ceil(count/2) indices; coordinate ties are broken by the
/// original index.
inline ClusterTree build_cluster_tree(std::span<const Point3> positions, Index leafsize) {
  require(!positions.empty(), Errc::invalid_parameter, "cannot cluster an empty point set");
  require(leafsize >= 1, Errc::invalid_parameter, "leafsize must be >= 1");
  ClusterTree tree;
  tree.perm.resize(positions.size());
  std::iota(tree.perm.begin(), tree.perm.end(), Index{0});
  detail::build_cluster(tree, positions, 0, positions.size(), leafsize, 0);
  return tree;
}

/// max(diam t, diam s) <= eta * dist(t, s), with overlapping or touching boxes
/// never admissible.
inline bool admissible(const Box& t, const Box& s, double eta) {
  const double dist = distance(t, s);
  if (!(dist > 0.0)) return false;
  return std::max(t.diameter(), s.diameter()) <= eta * dist;
}

inline bool admissible(const ClusterNode& t, const ClusterNode& s, double eta) {
  return admissible(t.bbox, s.bbox, eta);
}

enum class BlockKind { admissible_leaf, inadmissible_leaf, subdivided };

struct BlockNode {
  int row = -1;  // node id in the row tree
  int col = -1;  // node id in the column tree
  BlockKind kind = BlockKind::subdivided;
  std::vector<int> children;
  int depth = 0;

  bool leaf() const { return kind != BlockKind::subdivided; }
};

/// Block cluster tree in pre-order; nodes[0] is the root.
struct BlockTree {
  std::vector<BlockNode> nodes;

  template <class F>
  void for_each_leaf(F&& f) const {
    for (const auto& n : nodes)
      if (n.leaf()) f(n);
  }
};

namespace detail {

inline int build_block(BlockTree& bt, const ClusterTree& rows, const ClusterTree& cols,
                       int r, int c, double eta, const Point3& row_shift, int depth) {
  const auto& rn = rows[r];
  const auto& cn = cols[c];
  const int id = static_cast<int>(bt.nodes.size());
  bt.nodes.push_back({r, c, BlockKind::subdivided, {}, depth});
  if (admissible(rn.bbox.shifted(row_shift), cn.bbox, eta)) {
    bt.nodes[static_cast<Index>(id)].kind = BlockKind::admissible_leaf;
    return id;
  }
  if (rn.leaf() && cn.leaf()) {
    bt.nodes[static_cast<Index>(id)].kind = BlockKind::inadmissible_leaf;
    return id;
  }
  std::vector<int> kids;
  if (!rn.leaf() && !cn.leaf()) {
    for (int a : rn.children)
      for (int b : cn.children)
        kids.push_back(build_block(bt, rows, cols, a, b, eta, row_shift, depth + 1));
  } else if (rn.leaf()) {
    for (int b : cn.children)
      kids.push_back(build_block(bt, rows, cols, r, b, eta, row_shift, depth + 1));
  } else {
    for (int a : rn.children)
      kids.push_back(build_block(bt, rows, cols, a, c, eta, row_shift, depth + 1));
  }
  bt.nodes[static_cast<Index>(id)].children = std::move(kids);
  return id;
}

}  // namespace detail

/// Standard block cluster tree. row_shift translates every row-cluster box,
/// which lets one template tree stand in for a translated copy of itself.
inline BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta,
                                  const Point3& row_shift = {}) {
  BlockTree bt;
  detail::build_block(bt, rows, cols, 0, 0, eta, row_shift, 0);
  return bt;
}

/// Character map of the leaf layout in tree-position coordinates: 'D' for
/// inadmissible (dense) entries, 'L' for admissible (low-rank) ones.
inline std::string render_layout(const BlockTree& bt, const ClusterTree& rows,
                                 const ClusterTree& cols) {
  const Index nr = rows.root().range.size;
  const Index nc = cols.root().range.size;
  std::string grid(nr * (nc + 1), '?');
  for (Index r = 0; r < nr; ++r) grid[r * (nc + 1) + nc] = '\n';
  bt.for_each_leaf([&](const BlockNode& b) {
    const auto& rr = rows[b.row].range;
    const auto& cr = cols[b.col].range;
    const char ch = b.kind == BlockKind::admissible_leaf ? 'L' : 'D';
    for (Index r = rr.begin; r < rr.end(); ++r)
      for (Index c = cr.begin; c < cr.end(); ++c) grid[r * (nc + 1) + c] = ch;
  });
  return grid;
}

}  // namespace qphm
