// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file precond.hpp
 * @brief Near-field block incomplete LU preconditioner.
 *
 * The near field is the set of inadmissible (dense) leaves of the global
 * matrix. Their row ranges are the leaf clusters, which partition the index
 * set, so the near field is a block-sparse matrix over that partition with all
 * diagonal blocks present. Per codebook the masked near field is factorized
 * with a no-fill block ILU: fill is only kept where the block pattern already
 * has an entry, diagonal blocks are factored without pivoting.
 */

#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "qphm/compression.hpp"
#include "qphm/hpe.hpp"
#include "qphm/mask.hpp"
#include "qphm/types.hpp"

namespace qphm {

/// Block-sparse view of the dense leaves. Blocks are shared with the source
/// matrix, not copied.
class NearFieldMatrix {
 public:
  struct Block {
    Index row_begin = 0;  // tree-order position of the first row
    Index col_begin = 0;
    std::shared_ptr<const DenseBlock> content;

    Index rows() const { return content->rows.size; }
    Index cols() const { return content->cols.size; }
  };

  NearFieldMatrix() = default;

  NearFieldMatrix(Index n, std::vector<Index> tree_to_global, std::vector<Block> blocks)
      : n_(n), tree_to_global_(std::move(tree_to_global)), blocks_(std::move(blocks)) {
    require(tree_to_global_.size() == n_, Errc::dimension_mismatch,
            "near field permutation length != N");
    std::vector<std::pair<Index, Index>> diag;
    for (const auto& b : blocks_)
      if (b.row_begin == b.col_begin) {
        require(b.rows() == b.cols(), Errc::internal, "non-square diagonal near-field block");
        diag.emplace_back(b.row_begin, b.rows());
      }
    std::sort(diag.begin(), diag.end());
    Index next = 0;
    for (const auto& [start, size] : diag) {
      require(start == next, Errc::internal, "diagonal near-field blocks do not tile [0,N)");
      starts_.push_back(start);
      sizes_.push_back(size);
      next = start + size;
    }
    require(next == n_, Errc::internal, "diagonal near-field blocks do not cover [0,N)");

    pattern_.assign(starts_.size(), {});
    for (Index k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      const Index I = block_of(b.row_begin);
      const Index J = block_of(b.col_begin);
      require(starts_[I] == b.row_begin && sizes_[I] == b.rows() && starts_[J] == b.col_begin &&
                  sizes_[J] == b.cols(),
              Errc::internal, "near-field block does not align with the leaf partition");
      pattern_[I].push_back({J, k});
    }
    for (auto& row : pattern_) {
      std::sort(row.begin(), row.end());
      for (Index k = 1; k < row.size(); ++k)
        require(row[k].first != row[k - 1].first, Errc::internal, "overlapping near-field blocks");
    }
  }

  Index size() const { return n_; }
  const std::vector<Index>& tree_to_global() const { return tree_to_global_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  Index block_count() const { return starts_.size(); }
  IndexRange block_range(Index I) const { return {starts_[I], sizes_[I]}; }

  /// (column block, index into blocks()) pairs of block row I, sorted.
  const std::vector<std::pair<Index, Index>>& row_pattern(Index I) const { return pattern_[I]; }

  Index block_of(Index p) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), p);
    return static_cast<Index>(it - starts_.begin()) - 1;
  }

  Index scalars() const {
    Index s = 0;
    for (const auto& b : blocks_) s += b.rows() * b.cols();
    return s;
  }

  /// Entry for tree positions (p, q); zero outside the near field.
  Complex entry_tree(Index p, Index q) const {
    const Index I = block_of(p);
    const Index J = block_of(q);
    const auto& row = pattern_[I];
    auto it = std::lower_bound(row.begin(), row.end(), std::pair<Index, Index>{J, 0});
    if (it == row.end() || it->first != J) return {0.0, 0.0};
    const auto& b = blocks_[it->second];
    return b.content->values(static_cast<Eigen::Index>(p - b.row_begin),
                             static_cast<Eigen::Index>(q - b.col_begin));
  }

  bool contains_tree(Index p, Index q) const {
    const auto& row = pattern_[block_of(p)];
    const Index J = block_of(q);
    auto it = std::lower_bound(row.begin(), row.end(), std::pair<Index, Index>{J, 0});
    return it != row.end() && it->first == J;
  }

 private:
  Index n_ = 0;
  std::vector<Index> tree_to_global_;
  std::vector<Block> blocks_;
  std::vector<Index> starts_;
  std::vector<Index> sizes_;
  std::vector<std::vector<std::pair<Index, Index>>> pattern_;
};

/// Collects every dense leaf of an assembled matrix (HMatrix or
/// VirtualHMatrix), resolving pattern references into shared content.
template <class MatrixLike>
NearFieldMatrix extract_near_field(const MatrixLike& H) {
  std::vector<NearFieldMatrix::Block> blocks;
  H.for_each_leaf([&](const LeafBlock& leaf, Index rs, Index cs, int) {
    if (!leaf.dense) return;
    blocks.push_back({rs + leaf.dense->rows.begin, cs + leaf.dense->cols.begin, leaf.dense});
  });
  return NearFieldMatrix(H.size(), H.tree_to_global(), std::move(blocks));
}

class NearFieldPreconditioner {
 public:
  NearFieldPreconditioner() = default;

  Index size() const { return n_; }
  Index pivot_replacements() const { return pivot_replacements_; }
  const MaskVector& mask() const { return mask_; }

  /// Forward then backward substitution; r and the result in global order.
  Vector apply(const Vector& r) const {
    require(static_cast<Index>(r.size()) == n_, Errc::dimension_mismatch,
            "preconditioner input length != N");
    Vector t(r.size());
    for (Index p = 0; p < n_; ++p)
      t(static_cast<Eigen::Index>(p)) = r(static_cast<Eigen::Index>(tree_to_global_[p]));

    const Index B = rows_.size();
    for (Index I = 0; I < B; ++I) {
      const auto [s0, sz] = range(I);
      Vector acc = t.segment(s0, sz);
      for (const auto& blk : rows_[I]) {
        if (blk.col >= I) break;
        const auto [c0, csz] = range(blk.col);
        acc.noalias() -= blk.values * t.segment(c0, csz);
      }
      t.segment(s0, sz) = diag(I).triangularView<Eigen::UnitLower>().solve(acc);
    }
    for (Index I = B; I-- > 0;) {
      const auto [s0, sz] = range(I);
      Vector acc = t.segment(s0, sz);
      for (const auto& blk : rows_[I]) {
        if (blk.col <= I) continue;
        const auto [c0, csz] = range(blk.col);
        acc.noalias() -= blk.values * t.segment(c0, csz);
      }
      t.segment(s0, sz) = diag(I).triangularView<Eigen::Upper>().solve(acc);
    }

    Vector out(r.size());
    for (Index p = 0; p < n_; ++p)
      out(static_cast<Eigen::Index>(tree_to_global_[p])) = t(static_cast<Eigen::Index>(p));
    return out;
  }

 private:
  friend NearFieldPreconditioner factorize(const NearFieldMatrix& nf, const MaskVector& D);

  struct RowBlock {
    Index col = 0;
    Matrix values;
  };

  std::pair<Eigen::Index, Eigen::Index> range(Index I) const {
    return {static_cast<Eigen::Index>(starts_[I]), static_cast<Eigen::Index>(sizes_[I])};
  }
  const Matrix& diag(Index I) const { return rows_[I][diag_pos_[I]].values; }

  Index n_ = 0;
  std::vector<Index> tree_to_global_;
  std::vector<Index> starts_;
  std::vector<Index> sizes_;
  std::vector<std::vector<RowBlock>> rows_;  // sorted by column block
  std::vector<Index> diag_pos_;
  Index pivot_replacements_ = 0;
  MaskVector mask_;
};

/// Masks the near field (masked rows and columns zeroed, unit diagonal on
/// masked indices) and computes its no-fill block ILU in natural block order.
/// Pivots below 1e-12 * max|diag| are replaced by that threshold (phase
/// preserved) and counted.
inline NearFieldPreconditioner factorize(const NearFieldMatrix& nf, const MaskVector& D) {
  require(D.size() == nf.size(), Errc::dimension_mismatch, "factorize: mask length != N");
  NearFieldPreconditioner M;
  M.n_ = nf.size();
  M.tree_to_global_ = nf.tree_to_global();
  M.mask_ = D;
  const Index B = nf.block_count();
  M.starts_.resize(B);
  M.sizes_.resize(B);
  for (Index I = 0; I < B; ++I) {
    M.starts_[I] = nf.block_range(I).begin;
    M.sizes_[I] = nf.block_range(I).size;
  }

  std::vector<std::uint8_t> on(M.n_);
  for (Index p = 0; p < M.n_; ++p) on[p] = D.active(M.tree_to_global_[p]) ? 1 : 0;

  // Masked copy of the near field.
  double max_diag = 0.0;
  M.rows_.resize(B);
  M.diag_pos_.assign(B, 0);
  for (Index I = 0; I < B; ++I) {
    for (const auto& [J, k] : nf.row_pattern(I)) {
      const auto& src = nf.blocks()[k];
      Matrix v = src.content->values;
      for (Eigen::Index a = 0; a < v.rows(); ++a)
        for (Eigen::Index b = 0; b < v.cols(); ++b) {
          const Index p = src.row_begin + static_cast<Index>(a);
          const Index q = src.col_begin + static_cast<Index>(b);
          if (!on[p] || !on[q]) v(a, b) = (p == q) ? Complex{1.0, 0.0} : Complex{0.0, 0.0};
        }
      if (J == I) {
        M.diag_pos_[I] = M.rows_[I].size();
        for (Eigen::Index a = 0; a < v.rows(); ++a) max_diag = std::max(max_diag, std::abs(v(a, a)));
      }
      M.rows_[I].push_back({J, std::move(v)});
    }
  }
  const double thr = 1e-12 * max_diag;

  auto find = [&](Index K, Index J) -> Matrix* {
    auto& row = M.rows_[K];
    auto it = std::lower_bound(row.begin(), row.end(), J,
                               [](const auto& blk, Index col) { return blk.col < col; });
    return (it != row.end() && it->col == J) ? &it->values : nullptr;
  };

  for (Index I = 0; I < B; ++I) {
    auto& row = M.rows_[I];
    for (Index kk = 0; kk < row.size() && row[kk].col < I; ++kk) {
      const Index K = row[kk].col;
      const Matrix& dK = M.rows_[K][M.diag_pos_[K]].values;
      // L_IK = A_IK U_KK^{-1}
      row[kk].values =
          dK.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(row[kk].values);
      for (Index jj = kk + 1; jj < row.size(); ++jj) {
        const Matrix* UKJ = find(K, row[jj].col);
        if (UKJ) row[jj].values.noalias() -= row[kk].values * (*UKJ);
      }
    }
    // Unpivoted in-place LU of the diagonal block.
    Matrix& d = row[M.diag_pos_[I]].values;
    const Eigen::Index n = d.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
      Complex piv = d(k, k);
      if (std::abs(piv) < thr) {
        piv = (piv == Complex{0.0, 0.0}) ? Complex{thr, 0.0} : piv * (thr / std::abs(piv));
        d(k, k) = piv;
        ++M.pivot_replacements_;
      }
      for (Eigen::Index i = k + 1; i < n; ++i) {
        d(i, k) /= piv;
        const Complex lik = d(i, k);
        for (Eigen::Index j = k + 1; j < n; ++j) d(i, j) -= lik * d(k, j);
      }
    }
    // U_IJ = L_II^{-1} A_IJ for J > I.
    for (Index jj = M.diag_pos_[I] + 1; jj < row.size(); ++jj)
      row[jj].values = d.triangularView<Eigen::UnitLower>().solve(row[jj].values);
  }
  return M;
}

inline Vector apply(const NearFieldPreconditioner& M, const Vector& r) { return M.apply(r); }

}  // namespace qphm
