// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "qphm/types.hpp"

namespace qphm {

/// Activity indicator over all N unknowns of the global system. The ordered
/// list of active indices is the column selection of the retrieval map.
class MaskVector {
 public:
  MaskVector() = default;

  explicit MaskVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) {
      b = b ? 1 : 0;
      active_ += b;
    }
  }

  static MaskVector ones(Index n) { return MaskVector(std::vector<std::uint8_t>(n, 1)); }
  static MaskVector zeros(Index n) { return MaskVector(std::vector<std::uint8_t>(n, 0)); }

  Index size() const { return bits_.size(); }
  Index active_count() const { return active_; }
  bool active(Index i) const { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::vector<Index> active_indices() const {
    std::vector<Index> out;
    out.reserve(active_);
    for (Index i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(i);
    return out;
  }

  bool operator==(const MaskVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  Index active_ = 0;
};

}  // namespace qphm
