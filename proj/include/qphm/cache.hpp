// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cache.hpp
 * @brief Versioned binary container for an assembled VirtualHMatrix.
 *
 * Layout, all integers and doubles little-endian:
 *
 *   "QPHM"  u32 version  u64 N  u64 params_hash
 *   report  root key  u64 entry_count  entries...
 *
 * Each entry stores one pattern with its children by key, so shared content
 * is written once. The tree ordering is not stored; it is rebuilt from the
 * geometry on load.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "qphm/hcluster.hpp"
#include "qphm/hpe.hpp"
#include "qphm/kernel.hpp"
#include "qphm/types.hpp"

namespace qphm::cache {

inline constexpr char magic[4] = {'Q', 'P', 'H', 'M'};
inline constexpr std::uint32_t format_version = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that determines the assembled matrix. Doubles are
/// rendered in hex so equal values always hash equally.
inline std::uint64_t params_hash(const SiteSet& sites, const KernelSpec& kernel,
                                 const HParams& hp) {
  std::ostringstream os;
  os << std::hexfloat;
  const auto& tpl = sites.unit_template();
  os << "k" << tpl.k_bits() << ";p" << tpl.pitch().px << "," << tpl.pitch().py << ";";
  for (const auto& s : tpl.sites())
    os << s.pos.x << "," << s.pos.y << "," << s.pos.z << "," << s.states << "," << s.bridge_x
       << s.bridge_y << ";";
  os << "L" << sites.layout().m << "x" << sites.layout().n << ";";
  os << "K" << static_cast<int>(kernel.kind) << "," << kernel.wavenumber << ","
     << kernel.self_term.real() << "," << kernel.self_term.imag() << ";";
  os << "H" << hp.leafsize << "," << hp.eta << "," << hp.aca_eps << "," << hp.aca_max_rank;
  return fnv1a(os.str());
}

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void c128(Complex v) {
    f64(v.real());
    f64(v.imag());
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) c128(m(r, c));
  }
  void range(IndexRange r) {
    u64(r.begin);
    u64(r.size);
  }
  void key(const PatternKey& k) {
    i64(k.di);
    i64(k.dj);
    u64(k.src_mi);
    u64(k.src_nj);
    u64(k.obs_mi);
    u64(k.obs_nj);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::uint8_t u8() {
    const int c = is_.get();
    require(c != std::char_traits<char>::eof(), Errc::io_error, "cache file truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(u8()) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(u8()) << (8 * b);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Complex c128() {
    const double re = f64();
    const double im = f64();
    return {re, im};
  }
  Matrix matrix() {
    const auto rows = static_cast<Eigen::Index>(u64());
    const auto cols = static_cast<Eigen::Index>(u64());
    require(rows >= 0 && cols >= 0 && rows * cols < (Eigen::Index{1} << 40), Errc::io_error,
            "cache matrix dimensions implausible");
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = c128();
    return m;
  }
  IndexRange range() {
    const Index b = u64();
    const Index s = u64();
    return {b, s};
  }
  PatternKey key() {
    PatternKey k;
    k.di = i64();
    k.dj = i64();
    k.src_mi = u64();
    k.src_nj = u64();
    k.obs_mi = u64();
    k.obs_nj = u64();
    return k;
  }

 private:
  std::istream& is_;
};

inline void write_report(Writer& w, const StorageReport& r) {
  w.u64(r.N);
  w.u64(r.max_rank);
  w.u64(r.c_sp);
  w.u64(r.max_rank_exhausted);
  w.u64(r.levels.size());
  for (const auto& l : r.levels) {
    for (Index v : {l.level, l.classical_blocks, l.distinct_patterns, l.reuses, l.visited,
                    l.hpe_reuses, l.lowrank_scalars, l.dense_scalars, l.max_rank,
                    l.classical_lowrank_scalars, l.classical_dense_scalars})
      w.u64(v);
    w.u8(l.object_level ? 1 : 0);
  }
}

inline StorageReport read_report(Reader& rd) {
  StorageReport r;
  r.N = rd.u64();
  r.max_rank = rd.u64();
  r.c_sp = rd.u64();
  r.max_rank_exhausted = rd.u64();
  const Index n = rd.u64();
  r.levels.resize(n);
  for (auto& l : r.levels) {
    for (Index* v : {&l.level, &l.classical_blocks, &l.distinct_patterns, &l.reuses, &l.visited,
                     &l.hpe_reuses, &l.lowrank_scalars, &l.dense_scalars, &l.max_rank,
                     &l.classical_lowrank_scalars, &l.classical_dense_scalars})
      *v = rd.u64();
    l.object_level = rd.u8() != 0;
  }
  return r;
}

}  // namespace detail

struct CacheHeader {
  std::uint32_t version = 0;
  std::uint64_t N = 0;
  std::uint64_t hash = 0;
};

inline void save(const std::filesystem::path& path, const VirtualHMatrix& H,
                 const StorageReport& report, std::uint64_t hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), Errc::io_error, "cannot write " + tmp.string());
    detail::Writer w(os);
    os.write(magic, 4);
    w.u32(format_version);
    w.u64(H.size());
    w.u64(hash);
    detail::write_report(w, report);
    w.key(H.root_key());
    w.u64(H.dict().size());
    for (const auto& [key, content] : H.dict()) {
      w.key(key);
      w.u8(static_cast<std::uint8_t>(content->kind));
      w.u64(content->rows);
      w.u64(content->cols);
      w.u64(content->children.size());
      for (const auto& ch : content->children) {
        w.key(ch.key);
        w.u64(ch.row_offset);
        w.u64(ch.col_offset);
      }
      w.u64(content->leaves.size());
      for (const auto& leaf : content->leaves) {
        w.u32(static_cast<std::uint32_t>(leaf.depth));
        if (leaf.dense) {
          w.u8(0);
          w.range(leaf.dense->rows);
          w.range(leaf.dense->cols);
          w.matrix(leaf.dense->values);
        } else {
          w.u8(1);
          w.range(leaf.lowrank->rows);
          w.range(leaf.lowrank->cols);
          w.u8(leaf.lowrank->hit_max_rank ? 1 : 0);
          w.matrix(leaf.lowrank->U);
          w.matrix(leaf.lowrank->V);
        }
      }
      w.u64(content->tally.size());
      for (const auto& t : content->tally) {
        w.u64(t.nodes);
        w.u64(t.lowrank_scalars);
        w.u64(t.dense_scalars);
        w.u64(t.max_rank);
      }
    }
    os.flush();
    require(static_cast<bool>(os), Errc::io_error, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline CacheHeader read_header(std::istream& is, const std::string& name) {
  char m[4] = {};
  is.read(m, 4);
  require(is.gcount() == 4 && std::memcmp(m, magic, 4) == 0, Errc::cache_mismatch,
          name + ": not a QPHM cache file");
  detail::Reader rd(is);
  CacheHeader h;
  h.version = rd.u32();
  h.N = rd.u64();
  h.hash = rd.u64();
  return h;
}

struct Loaded {
  VirtualHMatrix matrix;
  StorageReport report;
};

/// Loads a cache and checks it against the expected geometry, kernel and
/// parameters; any mismatch raises Errc::cache_mismatch.
inline Loaded load(const std::filesystem::path& path, const SiteSet& sites,
                   const KernelSpec& kernel, const HParams& hp) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io_error, "cannot open cache " + path.string());
  const CacheHeader h = read_header(is, path.string());
  require(h.version == format_version, Errc::cache_mismatch,
          path.string() + ": cache format version " + std::to_string(h.version) +
              ", expected " + std::to_string(format_version));
  require(h.N == sites.size(), Errc::cache_mismatch,
          path.string() + ": cache holds N = " + std::to_string(h.N) + ", configuration has N = " +
              std::to_string(sites.size()));
  const std::uint64_t expect = params_hash(sites, kernel, hp);
  if (h.hash != expect) {
    std::ostringstream os;
    os << path.string() << ": params hash mismatch (cache " << std::hex << std::setw(16)
       << std::setfill('0') << h.hash << ", configuration " << std::setw(16) << expect
       << "); rerun assemble with --force to rebuild";
    throw Error(Errc::cache_mismatch, os.str());
  }

  detail::Reader rd(is);
  Loaded out;
  out.report = detail::read_report(rd);
  const PatternKey root = rd.key();
  const Index count = rd.u64();
  std::map<PatternKey, std::shared_ptr<PatternContent>> raw;
  std::vector<std::pair<PatternContent*, std::vector<PatternKey>>> links;
  for (Index e = 0; e < count; ++e) {
    const PatternKey key = rd.key();
    auto c = std::make_shared<PatternContent>();
    const auto kind = rd.u8();
    require(kind <= 2, Errc::io_error, "cache: bad pattern kind");
    c->kind = static_cast<PatternKind>(kind);
    c->rows = rd.u64();
    c->cols = rd.u64();
    std::vector<PatternKey> child_keys(rd.u64());
    c->children.resize(child_keys.size());
    for (Index k = 0; k < child_keys.size(); ++k) {
      child_keys[k] = rd.key();
      c->children[k].key = child_keys[k];
      c->children[k].row_offset = rd.u64();
      c->children[k].col_offset = rd.u64();
    }
    c->leaves.resize(rd.u64());
    for (auto& leaf : c->leaves) {
      leaf.depth = static_cast<int>(rd.u32());
      const auto type = rd.u8();
      const IndexRange rows = rd.range();
      const IndexRange cols = rd.range();
      if (type == 0) {
        auto d = std::make_shared<DenseBlock>();
        d->rows = rows;
        d->cols = cols;
        d->values = rd.matrix();
        leaf.dense = std::move(d);
      } else {
        require(type == 1, Errc::io_error, "cache: bad leaf type");
        auto l = std::make_shared<LowRankBlock>();
        l->rows = rows;
        l->cols = cols;
        l->hit_max_rank = rd.u8() != 0;
        l->U = rd.matrix();
        l->V = rd.matrix();
        leaf.lowrank = std::move(l);
      }
    }
    c->tally.resize(rd.u64());
    for (auto& t : c->tally) {
      t.nodes = rd.u64();
      t.lowrank_scalars = rd.u64();
      t.dense_scalars = rd.u64();
      t.max_rank = rd.u64();
    }
    links.emplace_back(c.get(), std::move(child_keys));
    raw.emplace(key, std::move(c));
  }
  for (auto& [content, keys] : links)
    for (Index k = 0; k < keys.size(); ++k) {
      auto it = raw.find(keys[k]);
      require(it != raw.end(), Errc::io_error, "cache: dangling pattern reference");
      content->children[k].content = it->second;
    }
  PatternDict dict(raw.begin(), raw.end());
  out.matrix = VirtualHMatrix(sites.size(), out.report.levels.size(),
                              lattice_tree_to_global(sites, kernel, hp), root, std::move(dict));
  return out;
}

}  // namespace qphm::cache
