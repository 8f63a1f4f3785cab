// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "qphm/cache.hpp"
#include "qphm/config.hpp"
#include "qphm/io.hpp"

using namespace qphm;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("qphm_app_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::internal;
}

}  // namespace

// --- io ----------------------------------------------------------------------

using Io = TempDir;

TEST_F(Io, TemplateRoundTrip) {
  const auto tpl = merge_templates(build_ground_layer(2, 2, {0.4, 0.6}, 0.0),
                                   build_stacked_state_template(2, 2, {0.4, 0.6}, 0.1, 0.05));
  io::save_template(dir_ / "t.json", tpl);
  EXPECT_EQ(io::load_template(dir_ / "t.json"), tpl);
}

TEST_F(Io, CodebookRoundTripAndLayout) {
  Codebook cb(2, 3);
  cb.at(0, 2) = 1;
  cb.at(1, 0) = 3;
  io::save_codebook(dir_ / "c.json", cb);
  EXPECT_EQ(io::load_codebook(dir_ / "c.json"), cb);
  const auto j = io::parse_json(dir_ / "c.json");
  EXPECT_EQ(j.at("states")[0][2].get<int>(), 1);
  EXPECT_EQ(j.at("states")[1][0].get<int>(), 3);
}

TEST_F(Io, RejectsMalformedInput) {
  EXPECT_EQ(code_of([&] { io::load_codebook(write("bad.json", "{not json")); }), Errc::io_error);
  EXPECT_EQ(code_of([&] { io::load_codebook(write("short.json", R"({"m":2,"n":2,"states":[[0,1]]})")); }),
            Errc::dimension_mismatch);
  EXPECT_EQ(code_of([&] { io::load_template(write("t.json", R"({"k_bits":1,"pitch":[1,1]})")); }),
            Errc::invalid_parameter);
  EXPECT_EQ(code_of([&] { io::load_codebook(dir_ / "missing.json"); }), Errc::io_error);
}

TEST_F(Io, VectorCsvAndMask) {
  Vector x(2);
  x << Complex(1.5, -2.0), Complex(0.0, 0.25);
  EXPECT_EQ(io::vector_csv(x), "index,re,im\n0,1.5,-2\n1,0,0.25\n");
  EXPECT_EQ(io::to_json(MaskVector({1, 0, 1})).dump(), "[1,0,1]");
}

// --- cache -------------------------------------------------------------------

using Cache = TempDir;

namespace {

struct Problem {
  SiteSet sites;
  KernelSpec kernel;
  HParams hp;
};

Problem problem() {
  const auto tpl = build_split_grid_template(3, {0.5, 0.5});
  return {SiteSet(tpl, {3, 2}), make_helmholtz(1.0, default_self_term(tpl)), HParams{}};
}

}  // namespace

TEST_F(Cache, RoundTripIsBitIdenticalWithoutKernelCalls) {
  const auto p = problem();
  const auto a = assemble_virtual(p.sites, p.kernel, p.hp);
  const auto path = dir_ / "a.qphm";
  cache::save(path, a.matrix, a.report, cache::params_hash(p.sites, p.kernel, p.hp));
  const auto before = kernel_eval_count();
  const auto b = cache::load(path, p.sites, p.kernel, p.hp);
  EXPECT_EQ(kernel_eval_count(), before);
  EXPECT_EQ(b.report.to_csv(), a.report.to_csv());
  EXPECT_EQ(b.report.c_sp, a.report.c_sp);
  EXPECT_EQ(b.matrix.dict().size(), a.matrix.dict().size());
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Vector x = oracle::random_vector(static_cast<Eigen::Index>(a.matrix.size()), s);
    EXPECT_EQ(b.matrix.apply(x), a.matrix.apply(x));
  }
}

TEST_F(Cache, DetectsParameterChange) {
  auto p = problem();
  const auto a = assemble_virtual(p.sites, p.kernel, p.hp);
  const auto path = dir_ / "a.qphm";
  cache::save(path, a.matrix, a.report, cache::params_hash(p.sites, p.kernel, p.hp));
  auto hp = p.hp;
  hp.eta = 1.5;
  EXPECT_EQ(code_of([&] { cache::load(path, p.sites, p.kernel, hp); }), Errc::cache_mismatch);
  auto k = p.kernel;
  k.self_term *= 2.0;
  EXPECT_EQ(code_of([&] { cache::load(path, p.sites, k, p.hp); }), Errc::cache_mismatch);
  const SiteSet bigger(p.sites.unit_template(), {3, 3});
  EXPECT_EQ(code_of([&] { cache::load(path, bigger, p.kernel, p.hp); }), Errc::cache_mismatch);
  try {
    cache::load(path, p.sites, p.kernel, hp);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
  }
}

TEST_F(Cache, HashDependsOnEveryInput) {
  const auto p = problem();
  const auto h0 = cache::params_hash(p.sites, p.kernel, p.hp);
  EXPECT_EQ(h0, cache::params_hash(p.sites, p.kernel, p.hp));
  auto hp = p.hp;
  hp.aca_eps = 1.1e-4;
  EXPECT_NE(h0, cache::params_hash(p.sites, p.kernel, hp));
  hp = p.hp;
  hp.leafsize = 16;
  EXPECT_NE(h0, cache::params_hash(p.sites, p.kernel, hp));
  auto k = make_laplace(p.kernel.self_term);
  EXPECT_NE(h0, cache::params_hash(p.sites, k, p.hp));
  const SiteSet moved(build_split_grid_template(3, {0.5, 0.5}, 0.01), {3, 2});
  EXPECT_NE(h0, cache::params_hash(moved, p.kernel, p.hp));
}

TEST_F(Cache, RejectsForeignAndTruncatedFiles) {
  const auto p = problem();
  EXPECT_EQ(code_of([&] { cache::load(write("x.qphm", "hello world"), p.sites, p.kernel, p.hp); }),
            Errc::cache_mismatch);
  EXPECT_EQ(code_of([&] { cache::load(dir_ / "none.qphm", p.sites, p.kernel, p.hp); }),
            Errc::io_error);

  const auto a = assemble_virtual(p.sites, p.kernel, p.hp);
  const auto path = dir_ / "a.qphm";
  cache::save(path, a.matrix, a.report, cache::params_hash(p.sites, p.kernel, p.hp));
  fs::resize_file(path, fs::file_size(path) / 2);
  EXPECT_EQ(code_of([&] { cache::load(path, p.sites, p.kernel, p.hp); }), Errc::io_error);

  // Bump the version field right after the magic.
  cache::save(path, a.matrix, a.report, cache::params_hash(p.sites, p.kernel, p.hp));
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(static_cast<char>(cache::format_version + 1));
  }
  EXPECT_EQ(code_of([&] { cache::load(path, p.sites, p.kernel, p.hp); }), Errc::cache_mismatch);
}

// --- config ------------------------------------------------------------------

using Config = TempDir;

TEST_F(Config, Defaults) {
  const auto c = load_config(std::nullopt, {});
  EXPECT_EQ(c.template_kind, "split_grid");
  EXPECT_EQ(c.layout.m, 8u);
  EXPECT_EQ(c.hparams, HParams{});
  EXPECT_TRUE(c.precondition);
  EXPECT_TRUE(c.targets.empty());
}

TEST_F(Config, ParsesIniAndOverrides) {
  const auto path = write("run.ini", R"([geometry]
template = stacked
g = 2
m = 16
n = 1
[kernel]
kind = laplace
self_term = 2.5,-1
[hmatrix]
eta = 1.5
[solver]
precond = none
tol = 1e-8
[targets]
azimuths = -60,-30,0,30,60
elevations = -20,-10,0,10,20
[output]
dir = results
)");
  const auto c = load_config(path, {"hmatrix.leafsize=16", "geometry.n=2"});
  EXPECT_EQ(c.template_kind, "stacked");
  EXPECT_EQ(c.g, 2);
  EXPECT_EQ(c.layout.m, 16u);
  EXPECT_EQ(c.layout.n, 2u);
  EXPECT_EQ(c.kernel, KernelKind::laplace);
  EXPECT_EQ(*c.self_term, Complex(2.5, -1.0));
  EXPECT_EQ(c.hparams.eta, 1.5);
  EXPECT_EQ(c.hparams.leafsize, 16u);
  EXPECT_FALSE(c.precondition);
  EXPECT_EQ(c.solve.tol, 1e-8);
  EXPECT_EQ(c.targets.size(), 25u);
  EXPECT_EQ(c.targets[1], (BeamTarget{-60.0, -10.0}));
  EXPECT_EQ(c.out_dir, fs::path("results"));
  const auto k = c.make_kernel(c.make_template());
  EXPECT_EQ(k.kind, KernelKind::laplace);
  EXPECT_EQ(k.self_term, Complex(2.5, -1.0));
}

TEST_F(Config, TargetList) {
  const auto c = load_config(std::nullopt, {"targets.list=-30:0; 15.5:-5"});
  ASSERT_EQ(c.targets.size(), 2u);
  EXPECT_EQ(c.targets[1], (BeamTarget{15.5, -5.0}));
}

TEST_F(Config, SelfTermScale) {
  const auto c = load_config(std::nullopt, {"kernel.self_term_scale=0.3", "geometry.g=4"});
  const auto tpl = c.make_template();
  EXPECT_NEAR(std::abs(c.make_kernel(tpl).self_term - 0.3 * default_self_term(tpl)), 0.0, 1e-12);
}

TEST_F(Config, Errors) {
  auto bad = [&](std::vector<std::string> o) {
    return code_of([&] { load_config(std::nullopt, o); });
  };
  EXPECT_EQ(bad({"geometry.colour=red"}), Errc::config_error);
  EXPECT_EQ(bad({"nosection=1"}), Errc::config_error);
  EXPECT_EQ(bad({"geometry.m"}), Errc::config_error);
  EXPECT_EQ(bad({"geometry.m=abc"}), Errc::config_error);
  EXPECT_EQ(bad({"geometry.m=0"}), Errc::config_error);
  EXPECT_EQ(bad({"hmatrix.eta=-1"}), Errc::config_error);
  EXPECT_EQ(bad({"hmatrix.aca_eps=2"}), Errc::config_error);
  EXPECT_EQ(bad({"kernel.kind=yukawa"}), Errc::config_error);
  EXPECT_EQ(bad({"solver.precond=jacobi"}), Errc::config_error);
  EXPECT_EQ(bad({"targets.list=10"}), Errc::config_error);
  EXPECT_EQ(bad({"targets.list=100:0"}), Errc::config_error);
  EXPECT_EQ(bad({"targets.azimuths=0"}), Errc::config_error);
  EXPECT_EQ(bad({"targets.codebooks=/nonexistent/cb.json"}), Errc::config_error);
  EXPECT_EQ(bad({"geometry.template=file"}), Errc::config_error);
  EXPECT_EQ(bad({"report.sizes=4by4"}), Errc::config_error);
  EXPECT_EQ(code_of([&] { load_config(dir_ / "missing.ini", {}); }), Errc::config_error);
  EXPECT_EQ(code_of([&] { load_config(write("broken.ini", "[geometry\nm=1\n"), {}); }),
            Errc::config_error);
  EXPECT_EQ(code_of([&] { load_config(std::nullopt, {"geometry.template=hexagon"}).make_template(); }),
            Errc::config_error);
}

TEST_F(Config, TemplateFromFile) {
  const auto tpl = build_split_grid_template(2, {0.5, 0.5});
  io::save_template(dir_ / "t.json", tpl);
  const auto c = load_config(std::nullopt, {"geometry.template=file",
                                            "geometry.template_file=" + (dir_ / "t.json").string()});
  EXPECT_EQ(c.make_template(), tpl);
}
