// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file hpe.hpp
 * @brief Hierarchical pattern exploitation: object cluster tree over the
 *        lattice, pattern-keyed block sharing, virtual and classical
 *        H-matrices with storage accounting.
 *
 * Index spaces. Both matrix forms work internally in "tree order": tree
 * position p = c * S + q, where c is the position of the unit among the leaves
 * of the object tree and q the position of the site in the shared intra-unit
 * cluster tree. tree_to_global() maps tree positions back to the unit-major
 * global ordering used by SiteSet. Every object cluster and every intra-unit
 * cluster is a contiguous range of tree positions, and two object clusters of
 * equal shape list their cells in the same relative order, so block content
 * built for one (observer, source) pair applies verbatim to any other pair
 * with the same pattern key.
 */

#pragma once

#include <array>
#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qphm/compression.hpp"
#include "qphm/geometry.hpp"
#include "qphm/hcluster.hpp"
#include "qphm/kernel.hpp"
#include "qphm/types.hpp"

namespace qphm {

using LinearOperator = std::function<Vector(const Vector&)>;

// ============================================================================
// Object cluster tree
// ============================================================================

struct ObjectNode {
  Index i0 = 0, j0 = 0;  // origin cell
  Index mi = 1, nj = 1;  // shape in cells
  std::array<int, 2> children{-1, -1};
  int depth = 0;
  Index first = 0;  // position of the first cell among the tree's leaves

  bool leaf() const { return children[0] < 0; }
  Index cells() const { return mi * nj; }
};

struct ObjectTree {
  ArrayLayout layout;
  std::vector<ObjectNode> nodes;
  std::vector<Index> unit_at;  // leaf position -> unit index i * n + j

  const ObjectNode& root() const { return nodes.front(); }
  const ObjectNode& operator[](int id) const { return nodes[static_cast<Index>(id)]; }

  int depth() const {
    int d = 0;
    for (const auto& nd : nodes) d = std::max(d, nd.depth + 1);
    return d;
  }
};

namespace detail {

inline int build_object(ObjectTree& t, Index i0, Index j0, Index mi, Index nj, int depth) {
  const int id = static_cast<int>(t.nodes.size());
  ObjectNode nd;
  nd.i0 = i0;
  nd.j0 = j0;
  nd.mi = mi;
  nd.nj = nj;
  nd.depth = depth;
  nd.first = t.unit_at.size();
  t.nodes.push_back(nd);
  if (mi == 1 && nj == 1) {
    t.unit_at.push_back(i0 * t.layout.n + j0);
    return id;
  }
  int a, b;
  if (mi >= nj) {
    const Index lo = (mi + 1) / 2;
    a = build_object(t, i0, j0, lo, nj, depth + 1);
    b = build_object(t, i0 + lo, j0, mi - lo, nj, depth + 1);
  } else {
    const Index lo = (nj + 1) / 2;
    a = build_object(t, i0, j0, mi, lo, depth + 1);
    b = build_object(t, i0, j0 + lo, mi, nj - lo, depth + 1);
  }
  t.nodes[static_cast<Index>(id)].children = {a, b};
  return id;
}

}  // namespace detail

/// Bisects along the longer lattice dimension (x on ties); the lower half
/// receives ceil(count/2) cells. Leaves are single cells.
inline ObjectTree build_object_tree(ArrayLayout layout) {
  validate(layout);
  ObjectTree t;
  t.layout = layout;
  detail::build_object(t, 0, 0, layout.m, layout.n, 0);
  return t;
}

// ============================================================================
// Patterns
// ============================================================================

/// (offset, src shape, obs shape) with offset = obs origin - src origin.
struct PatternKey {
  long di = 0, dj = 0;
  Index src_mi = 1, src_nj = 1;
  Index obs_mi = 1, obs_nj = 1;

  auto operator<=>(const PatternKey&) const = default;
  bool operator==(const PatternKey&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "((" << di << "," << dj << "),(" << src_mi << "," << src_nj << "),(" << obs_mi << ","
       << obs_nj << "))";
    return os.str();
  }
};

inline PatternKey pattern_key(const ObjectNode& src, const ObjectNode& obs) {
  return {static_cast<long>(obs.i0) - static_cast<long>(src.i0),
          static_cast<long>(obs.j0) - static_cast<long>(src.j0),
          src.mi, src.nj, obs.mi, obs.nj};
}

/// Node and storage tally of one block subtree at a relative depth.
struct LevelTally {
  Index nodes = 0;
  Index lowrank_scalars = 0;
  Index dense_scalars = 0;
  Index max_rank = 0;

  LevelTally& operator+=(const LevelTally& o) {
    nodes += o.nodes;
    lowrank_scalars += o.lowrank_scalars;
    dense_scalars += o.dense_scalars;
    max_rank = std::max(max_rank, o.max_rank);
    return *this;
  }
};

enum class PatternKind : std::uint8_t { subdivided = 0, lowrank = 1, unit_pair = 2 };

/// One leaf of block content; exactly one of dense / lowrank is set. Ranges
/// inside the blocks are local to the owning pattern.
struct LeafBlock {
  std::shared_ptr<const DenseBlock> dense;
  std::shared_ptr<const LowRankBlock> lowrank;
  int depth = 0;  // relative to the owning pattern node

  IndexRange rows() const { return dense ? dense->rows : lowrank->rows; }
  IndexRange cols() const { return dense ? dense->cols : lowrank->cols; }
};

struct PatternContent;

struct ChildRef {
  PatternKey key;
  Index row_offset = 0;
  Index col_offset = 0;
  std::shared_ptr<const PatternContent> content;
};

/// Content of one pattern in pattern-local coordinates.
struct PatternContent {
  PatternKind kind = PatternKind::subdivided;
  Index rows = 0;
  Index cols = 0;
  std::vector<ChildRef> children;  // subdivided
  std::vector<LeafBlock> leaves;   // lowrank (one leaf) or unit_pair (intra H-matrix)
  std::vector<LevelTally> tally;   // own nodes per relative depth, children excluded
};

using PatternDict = std::map<PatternKey, std::shared_ptr<const PatternContent>>;

// ============================================================================
// Storage report
// ============================================================================

struct LevelStats {
  Index level = 1;  // 1-based: level 1 is the root block
  Index classical_blocks = 0;
  Index distinct_patterns = 0;
  Index reuses = 0;      // classical_blocks - distinct_patterns
  Index visited = 0;     // blocks met by the pattern descent (hits + misses)
  Index hpe_reuses = 0;  // visited - distinct_patterns (dictionary hits)
  Index lowrank_scalars = 0;
  Index dense_scalars = 0;
  Index max_rank = 0;
  Index classical_lowrank_scalars = 0;
  Index classical_dense_scalars = 0;
  bool object_level = true;
};

struct StorageReport {
  Index N = 0;
  std::vector<LevelStats> levels;
  Index max_rank = 0;
  Index c_sp = 0;  // max leaf blocks sharing one row cluster
  Index max_rank_exhausted = 0;

  Index total_lowrank_scalars() const {
    Index s = 0;
    for (const auto& l : levels) s += l.lowrank_scalars;
    return s;
  }
  Index total_dense_scalars() const {
    Index s = 0;
    for (const auto& l : levels) s += l.dense_scalars;
    return s;
  }
  Index total_classical_lowrank_scalars() const {
    Index s = 0;
    for (const auto& l : levels) s += l.classical_lowrank_scalars;
    return s;
  }
  Index total_classical_dense_scalars() const {
    Index s = 0;
    for (const auto& l : levels) s += l.classical_dense_scalars;
    return s;
  }
  Index total_distinct() const {
    Index s = 0;
    for (const auto& l : levels) s += l.distinct_patterns;
    return s;
  }

  static constexpr const char* csv_header =
      "level,classical_blocks,distinct_patterns,reuses,lowrank_scalars,dense_scalars,max_rank";

  std::string to_csv() const {
    std::ostringstream os;
    os << csv_header << "\n";
    for (const auto& l : levels)
      os << l.level << "," << l.classical_blocks << "," << l.distinct_patterns << "," << l.reuses
         << "," << l.lowrank_scalars << "," << l.dense_scalars << "," << l.max_rank << "\n";
    return os.str();
  }
};

// ============================================================================
// Matrix-vector helpers
// ============================================================================

namespace detail {

inline void apply_leaf(const LeafBlock& leaf, Index row_shift, Index col_shift, const Vector& x,
                       Vector& y) {
  if (leaf.dense) {
    const auto& d = *leaf.dense;
    const auto r0 = static_cast<Eigen::Index>(row_shift + d.rows.begin);
    const auto c0 = static_cast<Eigen::Index>(col_shift + d.cols.begin);
    const Vector t = d.values * x.segment(c0, static_cast<Eigen::Index>(d.cols.size));
    y.segment(r0, static_cast<Eigen::Index>(d.rows.size)) += t;
  } else {
    const auto& l = *leaf.lowrank;
    if (l.rank() == 0) return;
    const auto r0 = static_cast<Eigen::Index>(row_shift + l.rows.begin);
    const auto c0 = static_cast<Eigen::Index>(col_shift + l.cols.begin);
    const Vector w = l.V * x.segment(c0, static_cast<Eigen::Index>(l.cols.size));
    const Vector t = l.U * w;
    y.segment(r0, static_cast<Eigen::Index>(l.rows.size)) += t;
  }
}

inline Vector to_tree(const std::vector<Index>& tree_to_global, const Vector& x) {
  Vector xt(x.size());
  for (Index p = 0; p < tree_to_global.size(); ++p)
    xt(static_cast<Eigen::Index>(p)) = x(static_cast<Eigen::Index>(tree_to_global[p]));
  return xt;
}

inline Vector from_tree(const std::vector<Index>& tree_to_global, const Vector& yt) {
  Vector y(yt.size());
  for (Index p = 0; p < tree_to_global.size(); ++p)
    y(static_cast<Eigen::Index>(tree_to_global[p])) = yt(static_cast<Eigen::Index>(p));
  return y;
}

}  // namespace detail

/// Leaf visitor signature: (leaf, row_shift, col_shift, absolute depth).
using LeafVisitor = std::function<void(const LeafBlock&, Index, Index, int)>;

// ============================================================================
// Classical H-matrix
// ============================================================================

/// H-matrix whose leaves each own their content.
class HMatrix {
 public:
  struct PlacedLeaf {
    LeafBlock block;
    Index row_shift = 0;
    Index col_shift = 0;
    int depth = 0;
  };

  HMatrix() = default;
  HMatrix(Index n, std::vector<Index> tree_to_global, std::vector<PlacedLeaf> leaves,
          StorageReport report)
      : n_(n), tree_to_global_(std::move(tree_to_global)), leaves_(std::move(leaves)),
        report_(std::move(report)) {}

  Index size() const { return n_; }
  const std::vector<Index>& tree_to_global() const { return tree_to_global_; }
  const std::vector<PlacedLeaf>& leaves() const { return leaves_; }
  const StorageReport& report() const { return report_; }

  void for_each_leaf(const LeafVisitor& f) const {
    for (const auto& l : leaves_) f(l.block, l.row_shift, l.col_shift, l.depth);
  }

  /// y = Z x in global ordering.
  Vector apply(const Vector& x) const {
    require(static_cast<Index>(x.size()) == n_, Errc::dimension_mismatch,
            "MVP input length != N");
    const Vector xt = detail::to_tree(tree_to_global_, x);
    Vector yt = Vector::Zero(xt.size());
    for (const auto& l : leaves_) detail::apply_leaf(l.block, l.row_shift, l.col_shift, xt, yt);
    return detail::from_tree(tree_to_global_, yt);
  }

 private:
  Index n_ = 0;
  std::vector<Index> tree_to_global_;
  std::vector<PlacedLeaf> leaves_;
  StorageReport report_;
};

// ============================================================================
// Virtual H-matrix
// ============================================================================

/// H-matrix whose block tree is a DAG over a PatternDict: a reference leaf is
/// a (pattern, row offset, column offset) triple and never copies content.
class VirtualHMatrix {
 public:
  VirtualHMatrix() = default;
  VirtualHMatrix(Index n, Index levels, std::vector<Index> tree_to_global, PatternKey root,
                 PatternDict dict)
      : n_(n), levels_(levels), tree_to_global_(std::move(tree_to_global)), root_(root),
        dict_(std::move(dict)) {
    require(dict_.count(root_) == 1, Errc::internal, "root pattern missing from dictionary");
  }

  Index size() const { return n_; }
  Index levels() const { return levels_; }
  const std::vector<Index>& tree_to_global() const { return tree_to_global_; }
  const PatternKey& root_key() const { return root_; }
  const PatternDict& dict() const { return dict_; }

  /// Visits every leaf of the (unshared) block tree in pre-order.
  void for_each_leaf(const LeafVisitor& f) const {
    visit(*dict_.at(root_), 0, 0, 0, f);
  }

  /// y = Z x in global ordering; leaves are accumulated in tree pre-order.
  Vector apply(const Vector& x) const {
    require(static_cast<Index>(x.size()) == n_, Errc::dimension_mismatch,
            "MVP input length != N");
    const Vector xt = detail::to_tree(tree_to_global_, x);
    Vector yt = Vector::Zero(xt.size());
    apply_pattern(*dict_.at(root_), 0, 0, xt, yt);
    return detail::from_tree(tree_to_global_, yt);
  }

 private:
  static void apply_pattern(const PatternContent& c, Index rs, Index cs, const Vector& x,
                            Vector& y) {
    if (c.kind == PatternKind::subdivided) {
      for (const auto& ch : c.children)
        apply_pattern(*ch.content, rs + ch.row_offset, cs + ch.col_offset, x, y);
      return;
    }
    for (const auto& leaf : c.leaves) detail::apply_leaf(leaf, rs, cs, x, y);
  }

  static void visit(const PatternContent& c, Index rs, Index cs, int depth, const LeafVisitor& f) {
    if (c.kind == PatternKind::subdivided) {
      for (const auto& ch : c.children)
        visit(*ch.content, rs + ch.row_offset, cs + ch.col_offset, depth + 1, f);
      return;
    }
    for (const auto& leaf : c.leaves) f(leaf, rs, cs, depth + leaf.depth);
  }

  Index n_ = 0;
  Index levels_ = 0;
  std::vector<Index> tree_to_global_;
  PatternKey root_;
  PatternDict dict_;
};

inline Vector vmvp(const VirtualHMatrix& H, const Vector& x) { return H.apply(x); }

// ============================================================================
// Assembly
// ============================================================================

namespace detail {

inline void add_tally(std::vector<LevelTally>& into, Index depth, const LevelTally& t) {
  if (into.size() <= depth) into.resize(depth + 1);
  into[depth] += t;
}

/// Max number of leaf blocks that share one row cluster.
inline Index count_c_sp(const std::function<void(const LeafVisitor&)>& each_leaf) {
  std::map<std::pair<Index, Index>, Index> per_row;
  Index best = 0;
  each_leaf([&](const LeafBlock& leaf, Index rs, Index, int) {
    const IndexRange r = leaf.rows();
    best = std::max(best, ++per_row[{rs + r.begin, r.size}]);
  });
  return best;
}

/// Shared machinery for the lattice-aware (composite tree) assemblies.
class LatticeAssembler {
 public:
  LatticeAssembler(const SiteSet& sites, const KernelSpec& kernel, const HParams& params)
      : sites_(sites), kernel_(kernel), params_(params),
        otree_(build_object_tree(sites.layout())), S_(sites.sites_per_unit()) {
    validate(kernel_);
    validate(params_);
    const auto local = sites.unit_template().positions();
    intra_ = build_cluster_tree(local, params_.leafsize);
    unit_box_ = sites.unit_template().bbox();
    tree_to_global_.resize(sites.size());
    for (Index c = 0; c < otree_.unit_at.size(); ++c)
      for (Index q = 0; q < S_; ++q)
        tree_to_global_[c * S_ + q] = otree_.unit_at[c] * S_ + intra_.perm[q];
  }

  const ObjectTree& object_tree() const { return otree_; }
  const ClusterTree& intra_tree() const { return intra_; }
  const std::vector<Index>& tree_to_global() const { return tree_to_global_; }
  Index sites_per_unit() const { return S_; }

  /// Bounding box of an object cluster's sites relative to its origin cell.
  Box object_box(const ObjectNode& nd) const {
    const Point3 ext = sites_.lattice_shift(static_cast<long>(nd.mi) - 1,
                                            static_cast<long>(nd.nj) - 1);
    return {unit_box_.lo, unit_box_.hi + ext};
  }

  Point3 relative_shift(const ObjectNode& obs, const ObjectNode& src) const {
    const PatternKey k = pattern_key(src, obs);
    return sites_.lattice_shift(k.di, k.dj);
  }

  bool object_admissible(const ObjectNode& obs, const ObjectNode& src) const {
    return admissible(object_box(obs).shifted(relative_shift(obs, src)), object_box(src),
                      params_.eta);
  }

  /// Low-rank content for an admissible object block.
  std::shared_ptr<PatternContent> make_lowrank(const ObjectNode& obs, const ObjectNode& src) {
    auto c = std::make_shared<PatternContent>();
    c->kind = PatternKind::lowrank;
    c->rows = obs.cells() * S_;
    c->cols = src.cells() * S_;
    const Index rb = obs.first * S_;
    const Index cb = src.first * S_;
    auto entry = [&](Index a, Index b) {
      return eval_entry(kernel_, sites_, tree_to_global_[rb + a], tree_to_global_[cb + b]);
    };
    auto lr = std::make_shared<LowRankBlock>(aca_approximate(
        entry, IndexRange{0, c->rows}, IndexRange{0, c->cols}, params_.aca_eps,
        params_.aca_max_rank));
    if (lr->hit_max_rank) ++max_rank_exhausted_;
    add_tally(c->tally, 0, {1, lr->scalars(), 0, lr->rank()});
    c->leaves.push_back({nullptr, std::move(lr), 0});
    return c;
  }

  /// Intra-unit H-matrix between two single cells.
  std::shared_ptr<PatternContent> make_unit_pair(const ObjectNode& obs, const ObjectNode& src) {
    auto c = std::make_shared<PatternContent>();
    c->kind = PatternKind::unit_pair;
    c->rows = S_;
    c->cols = S_;
    const Index rb = obs.first * S_;
    const Index cb = src.first * S_;
    const BlockTree bt = build_block_tree(intra_, intra_, params_.eta, relative_shift(obs, src));
    for (const auto& nd : bt.nodes) {
      if (!nd.leaf()) {
        add_tally(c->tally, static_cast<Index>(nd.depth), {1, 0, 0, 0});
        continue;
      }
      const IndexRange rr = intra_[nd.row].range;
      const IndexRange cr = intra_[nd.col].range;
      auto entry = [&](Index a, Index b) {
        return eval_entry(kernel_, sites_, tree_to_global_[rb + rr.begin + a],
                          tree_to_global_[cb + cr.begin + b]);
      };
      if (nd.kind == BlockKind::admissible_leaf) {
        auto lr = std::make_shared<LowRankBlock>(
            aca_approximate(entry, rr, cr, params_.aca_eps, params_.aca_max_rank));
        if (lr->hit_max_rank) ++max_rank_exhausted_;
        add_tally(c->tally, static_cast<Index>(nd.depth), {1, lr->scalars(), 0, lr->rank()});
        c->leaves.push_back({nullptr, std::move(lr), nd.depth});
      } else {
        auto d = std::make_shared<DenseBlock>(assemble_dense(entry, rr, cr));
        add_tally(c->tally, static_cast<Index>(nd.depth), {1, 0, d->scalars(), 0});
        c->leaves.push_back({std::move(d), nullptr, nd.depth});
      }
    }
    return c;
  }

  Index max_rank_exhausted() const { return max_rank_exhausted_; }

 protected:
  const SiteSet& sites_;
  KernelSpec kernel_;
  HParams params_;
  ObjectTree otree_;
  ClusterTree intra_;
  Box unit_box_;
  Index S_;
  std::vector<Index> tree_to_global_;
  Index max_rank_exhausted_ = 0;
};

class VirtualAssembler : public LatticeAssembler {
 public:
  using LatticeAssembler::LatticeAssembler;

  VirtualHMatrix run(StorageReport& report) {
    const PatternKey root = build(0, 0, 0);
    report = make_report(root);
    VirtualHMatrix H(sites_.size(), report.levels.size(), tree_to_global_, root, std::move(dict_));
    report.c_sp = count_c_sp([&](const LeafVisitor& f) { H.for_each_leaf(f); });
    return H;
  }

 private:
  PatternKey build(int obs_id, int src_id, int depth) {
    const ObjectNode& obs = otree_[obs_id];
    const ObjectNode& src = otree_[src_id];
    const PatternKey key = pattern_key(src, obs);
    add_tally(visited_, static_cast<Index>(depth), {1, 0, 0, 0});
    if (dict_.count(key)) return key;

    std::shared_ptr<PatternContent> c;
    if (object_admissible(obs, src)) {
      c = make_lowrank(obs, src);
    } else if (obs.leaf() && src.leaf()) {
      c = make_unit_pair(obs, src);
    } else {
      c = std::make_shared<PatternContent>();
      c->kind = PatternKind::subdivided;
      c->rows = obs.cells() * S_;
      c->cols = src.cells() * S_;
      add_tally(c->tally, 0, {1, 0, 0, 0});
      std::vector<int> obs_kids, src_kids;
      if (obs.leaf())
        obs_kids = {obs_id};
      else
        obs_kids = {obs.children[0], obs.children[1]};
      if (src.leaf())
        src_kids = {src_id};
      else
        src_kids = {src.children[0], src.children[1]};
      for (int a : obs_kids)
        for (int b : src_kids) {
          const PatternKey ck = build(a, b, depth + 1);
          c->children.push_back({ck, (otree_[a].first - obs.first) * S_,
                                 (otree_[b].first - src.first) * S_, dict_.at(ck)});
        }
    }
    // First occurrence: its own nodes are distinct; intra-unit nodes are
    // built exactly once per distinct unit pair, so they count as visited too.
    for (Index r = 0; r < c->tally.size(); ++r) {
      add_tally(distinct_, depth + r, c->tally[r]);
      if (r > 0) add_tally(visited_, depth + r, {c->tally[r].nodes, 0, 0, 0});
    }
    dict_.emplace(key, std::move(c));
    return key;
  }

  const std::vector<LevelTally>& classical_tally(const PatternKey& key) {
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const auto& c = *dict_.at(key);
    std::vector<LevelTally> t = c.tally;
    for (const auto& ch : c.children) {
      const auto& sub = classical_tally(ch.key);
      for (Index r = 0; r < sub.size(); ++r) add_tally(t, r + 1, sub[r]);
    }
    return memo_.emplace(key, std::move(t)).first->second;
  }

  StorageReport make_report(const PatternKey& root) {
    const std::vector<LevelTally> full = classical_tally(root);
    StorageReport rep;
    rep.N = sites_.size();
    const int object_depth = otree_.depth();
    for (Index d = 0; d < full.size(); ++d) {
      LevelStats s;
      s.level = d + 1;
      s.classical_blocks = full[d].nodes;
      s.classical_lowrank_scalars = full[d].lowrank_scalars;
      s.classical_dense_scalars = full[d].dense_scalars;
      const LevelTally dis = d < distinct_.size() ? distinct_[d] : LevelTally{};
      const Index vis = d < visited_.size() ? visited_[d].nodes : 0;
      s.distinct_patterns = dis.nodes;
      s.lowrank_scalars = dis.lowrank_scalars;
      s.dense_scalars = dis.dense_scalars;
      s.max_rank = dis.max_rank;
      s.reuses = s.classical_blocks - s.distinct_patterns;
      s.visited = vis;
      s.hpe_reuses = vis - s.distinct_patterns;
      s.object_level = static_cast<int>(d) < object_depth;
      rep.max_rank = std::max(rep.max_rank, s.max_rank);
      rep.levels.push_back(s);
    }
    rep.max_rank_exhausted = max_rank_exhausted_;
    return rep;
  }

  PatternDict dict_;
  std::map<PatternKey, std::vector<LevelTally>> memo_;
  std::vector<LevelTally> visited_;
  std::vector<LevelTally> distinct_;
};

class ClassicalLatticeAssembler : public LatticeAssembler {
 public:
  using LatticeAssembler::LatticeAssembler;

  HMatrix run() {
    build(0, 0, 0);
    StorageReport rep;
    rep.N = sites_.size();
    for (Index d = 0; d < tally_.size(); ++d) {
      LevelStats s;
      s.level = d + 1;
      s.classical_blocks = s.distinct_patterns = s.visited = tally_[d].nodes;
      s.lowrank_scalars = s.classical_lowrank_scalars = tally_[d].lowrank_scalars;
      s.dense_scalars = s.classical_dense_scalars = tally_[d].dense_scalars;
      s.max_rank = tally_[d].max_rank;
      s.object_level = static_cast<int>(d) < otree_.depth();
      rep.max_rank = std::max(rep.max_rank, s.max_rank);
      rep.levels.push_back(s);
    }
    rep.max_rank_exhausted = max_rank_exhausted_;
    HMatrix H(sites_.size(), tree_to_global_, std::move(leaves_), rep);
    StorageReport with_csp = H.report();
    with_csp.c_sp = count_c_sp([&](const LeafVisitor& f) { H.for_each_leaf(f); });
    return HMatrix(H.size(), H.tree_to_global(), H.leaves(), with_csp);
  }

 private:
  void place(const PatternContent& c, Index rs, Index cs, int depth) {
    for (Index r = 0; r < c.tally.size(); ++r) add_tally(tally_, depth + r, c.tally[r]);
    for (const auto& leaf : c.leaves) leaves_.push_back({leaf, rs, cs, depth + leaf.depth});
  }

  void build(int obs_id, int src_id, int depth) {
    const ObjectNode& obs = otree_[obs_id];
    const ObjectNode& src = otree_[src_id];
    const Index rs = obs.first * S_;
    const Index cs = src.first * S_;
    if (object_admissible(obs, src)) {
      place(*make_lowrank(obs, src), rs, cs, depth);
      return;
    }
    if (obs.leaf() && src.leaf()) {
      place(*make_unit_pair(obs, src), rs, cs, depth);
      return;
    }
    add_tally(tally_, static_cast<Index>(depth), {1, 0, 0, 0});
    std::vector<int> obs_kids = obs.leaf() ? std::vector<int>{obs_id}
                                           : std::vector<int>{obs.children[0], obs.children[1]};
    std::vector<int> src_kids = src.leaf() ? std::vector<int>{src_id}
                                           : std::vector<int>{src.children[0], src.children[1]};
    for (int a : obs_kids)
      for (int b : src_kids) build(a, b, depth + 1);
  }

  std::vector<HMatrix::PlacedLeaf> leaves_;
  std::vector<LevelTally> tally_;
};

}  // namespace detail

struct VirtualAssembly {
  VirtualHMatrix matrix;
  StorageReport report;
};

/// Pattern-shared assembly: every distinct (offset, src, obs) block is built
/// once and referenced everywhere else.
inline VirtualAssembly assemble_virtual(const SiteSet& sites, const KernelSpec& kernel,
                                        const HParams& params) {
  detail::VirtualAssembler asmb(sites, kernel, params);
  VirtualAssembly out;
  out.matrix = asmb.run(out.report);
  return out;
}

/// How the classical H-matrix clusters its indices.
enum class ClassicalTree {
  lattice,    // object tree over the lattice, shared intra-unit tree below it
  geometric,  // plain bisection over all N site positions
};

namespace detail {

inline HMatrix assemble_geometric(const SiteSet& sites, const KernelSpec& kernel,
                                  const HParams& params) {
  validate(kernel);
  validate(params);
  const ClusterTree ct = build_cluster_tree(sites.positions(), params.leafsize);
  const BlockTree bt = build_block_tree(ct, ct, params.eta);
  std::vector<HMatrix::PlacedLeaf> leaves;
  std::vector<LevelTally> tally;
  Index exhausted = 0;
  for (const auto& nd : bt.nodes) {
    if (!nd.leaf()) {
      add_tally(tally, static_cast<Index>(nd.depth), {1, 0, 0, 0});
      continue;
    }
    const IndexRange rr = ct[nd.row].range;
    const IndexRange cr = ct[nd.col].range;
    auto entry = [&](Index a, Index b) {
      return eval_entry(kernel, sites, ct.perm[rr.begin + a], ct.perm[cr.begin + b]);
    };
    LeafBlock leaf;
    leaf.depth = 0;
    if (nd.kind == BlockKind::admissible_leaf) {
      auto lr = std::make_shared<LowRankBlock>(
          aca_approximate(entry, rr, cr, params.aca_eps, params.aca_max_rank));
      if (lr->hit_max_rank) ++exhausted;
      add_tally(tally, static_cast<Index>(nd.depth), {1, lr->scalars(), 0, lr->rank()});
      leaf.lowrank = std::move(lr);
    } else {
      auto d = std::make_shared<DenseBlock>(assemble_dense(entry, rr, cr));
      add_tally(tally, static_cast<Index>(nd.depth), {1, 0, d->scalars(), 0});
      leaf.dense = std::move(d);
    }
    leaves.push_back({std::move(leaf), 0, 0, nd.depth});
  }
  StorageReport rep;
  rep.N = sites.size();
  for (Index d = 0; d < tally.size(); ++d) {
    LevelStats s;
    s.level = d + 1;
    s.classical_blocks = s.distinct_patterns = s.visited = tally[d].nodes;
    s.lowrank_scalars = s.classical_lowrank_scalars = tally[d].lowrank_scalars;
    s.dense_scalars = s.classical_dense_scalars = tally[d].dense_scalars;
    s.max_rank = tally[d].max_rank;
    s.object_level = false;
    rep.max_rank = std::max(rep.max_rank, s.max_rank);
    rep.levels.push_back(s);
  }
  rep.max_rank_exhausted = exhausted;
  HMatrix H(sites.size(), ct.perm, std::move(leaves), rep);
  rep.c_sp = count_c_sp([&](const LeafVisitor& f) { H.for_each_leaf(f); });
  return HMatrix(H.size(), H.tree_to_global(), H.leaves(), rep);
}

}  // namespace detail

/// H-matrix without pattern sharing. The lattice tree reproduces the virtual
/// matrix's partition exactly (same splits, same ACA on the same entries).
inline HMatrix assemble_classical(const SiteSet& sites, const KernelSpec& kernel,
                                  const HParams& params,
                                  ClassicalTree tree = ClassicalTree::lattice) {
  if (tree == ClassicalTree::geometric) return detail::assemble_geometric(sites, kernel, params);
  detail::ClassicalLatticeAssembler asmb(sites, kernel, params);
  return asmb.run();
}

/// Tree position to global index map of the lattice composite tree; needs no
/// kernel evaluations.
inline std::vector<Index> lattice_tree_to_global(const SiteSet& sites, const KernelSpec& kernel,
                                                 const HParams& params) {
  return detail::LatticeAssembler(sites, kernel, params).tree_to_global();
}

}  // namespace qphm
