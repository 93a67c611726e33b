#include "um2n/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "um2n/ma.hpp"

using namespace um2n;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GenConfig desk_config() {
  GenConfig cfg;
  cfg.seed = 7;
  cfg.n_samples = 6;
  cfg.mesh_sizes = {10};
  cfg.n_min = 1;
  cfg.n_max = 3;
  cfg.sigma_min = 0.12;
  cfg.sigma_max = 0.3;
  return cfg;
}

}  // namespace

TEST_CASE("field evaluation oracles") {
  FieldSpec one{{{0.5, 0.5, 0.1, 0.1}}};
  CHECK(eval_field(one, {0.5, 0.5}) == 1.0);
  CHECK(eval_field(one, {0.6, 0.5}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(eval_field(one, {0.6, 0.5}) == doctest::Approx(0.36788).epsilon(1e-4));

  FieldSpec two{{{0.5, 0.5, 0.1, 0.1}, {0.5, 0.5, 0.1, 0.1}}};
  CHECK(eval_field(two, {0.5, 0.5}) == 2.0);

  // anisotropy: each axis is scaled by its own width
  FieldSpec aniso{{{0.5, 0.5, 0.1, 0.2}}};
  CHECK(eval_field(aniso, {0.6, 0.5}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(eval_field(aniso, {0.5, 0.7}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  CHECK_THROWS_AS(validate(FieldSpec{}), InvalidArgument);
  CHECK_THROWS_AS(validate(FieldSpec{{{0.5, 0.5, 0.0, 0.1}}}), InvalidArgument);
  CHECK_THROWS_AS(validate(FieldSpec{{{0.5, 0.5, 0.1, -0.2}}}), InvalidArgument);
}

TEST_CASE("field spec sampling is deterministic and in range") {
  const GenConfig cfg;  // defaults
  Rng a(99), b(99);
  const FieldSpec sa = sample_field_spec(a, cfg);
  const FieldSpec sb = sample_field_spec(b, cfg);
  REQUIRE(sa.gaussians.size() == sb.gaussians.size());
  for (size_t k = 0; k < sa.gaussians.size(); ++k) {
    CHECK(sa.gaussians[k].mux == sb.gaussians[k].mux);
    CHECK(sa.gaussians[k].sy == sb.gaussians[k].sy);
  }

  Rng rng(123);
  double sum_sx = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const FieldSpec s = sample_field_spec(rng, cfg);
    REQUIRE(s.gaussians.size() >= 1);
    REQUIRE(s.gaussians.size() <= 6);
    for (const auto& g : s.gaussians) {
      CHECK(g.mux >= 0.2);
      CHECK(g.mux <= 0.8);
      CHECK(g.muy >= 0.2);
      CHECK(g.muy <= 0.8);
      CHECK(g.sx >= 0.05);
      CHECK(g.sx <= 0.25);
      CHECK(g.sy >= 0.05);
      CHECK(g.sy <= 0.25);
    }
    sum_sx += s.gaussians[0].sx;
  }
  // mean of a uniform draw ~ midpoint; 3 standard errors of 10^4 draws
  const double se = (0.25 - 0.05) / std::sqrt(12.0) / std::sqrt(double(draws));
  CHECK(std::abs(sum_sx / draws - 0.15) < 3.0 * se);
}

TEST_CASE("gen config validation and hashing") {
  CHECK_NOTHROW(validate(GenConfig{}));

  GenConfig bad;
  bad.sigma_min = 0.3;
  bad.sigma_max = 0.1;  // reversed
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.mu_min = 0.9;
  bad.mu_max = 0.2;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.n_min = 0;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.n_min = 4;
  bad.n_max = 2;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.mesh_sizes = {};
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.mesh_sizes = {18, 1};
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = GenConfig{};
  bad.n_samples = 0;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);

  const GenConfig a, b;
  CHECK(a.hash() == b.hash());
  GenConfig c;
  c.seed = 1;
  CHECK(c.hash() != a.hash());
  GenConfig d;
  d.monitor.kind = MonitorKind::combined;
  CHECK(d.hash() != a.hash());
}

TEST_CASE("a flat field labels the identity movement") {
  auto mesh = std::make_shared<const Mesh>(generate_unit_square_mesh(8));
  const FieldSpec flat{{{0.5, 0.5, 1e7, 1e7}}};
  const DatasetSample s = build_sample(mesh, flat, MonitorConfig{});
  REQUIRE(s.ref_xy.size() == size_t(mesh->n_vertices()));
  for (double m : s.monitor) CHECK(m == 1.0);
  for (int v = 0; v < mesh->n_vertices(); ++v) {
    CHECK(s.ref_xy[v].x == mesh->xy[v].x);
    CHECK(s.ref_xy[v].y == mesh->xy[v].y);
  }
  CHECK_NOTHROW(validate(s));
}

TEST_CASE("a narrow bump concentrates the reference mesh") {
  auto mesh = std::make_shared<const Mesh>(generate_unit_square_mesh(16));
  const FieldSpec bump{{{0.5, 0.5, 0.08, 0.08}}};
  const MonitorConfig mc;  // hessian, alpha 5
  const DatasetSample s = build_sample(mesh, bump, mc);
  CHECK_NOTHROW(validate(s));
  CHECK(s.mesh.get() == mesh.get());
  CHECK(s.ma_residual > 0.0);
  CHECK(s.ma_residual < 1.0);

  double max_m = 1.0;
  for (double m : s.monitor) {
    CHECK(m >= 1.0);
    CHECK(m <= 1.0 + mc.alpha + 1e-12);
    max_m = std::max(max_m, m);
  }
  CHECK(max_m == doctest::Approx(1.0 + mc.alpha).epsilon(1e-12));

  ScalarField m{mesh, s.monitor};
  Mesh moved = *mesh;
  moved.xy = s.ref_xy;
  // the monitor lives on the computational mesh; element volumes come from
  // the moved coordinates
  const double cv_before = equidistribution_cv(*mesh, m);
  const double cv_after = equidistribution_cv(moved, m);
  CHECK(cv_after < cv_before);
}

TEST_CASE("failed label solves propagate for rejection") {
  auto mesh = std::make_shared<const Mesh>(generate_unit_square_mesh(12));
  const FieldSpec bump{{{0.5, 0.5, 0.1, 0.1}}};
  MAParams starved;
  starved.max_iters = 1;
  CHECK_THROWS_AS(build_sample(mesh, bump, MonitorConfig{}, starved), MANotConverged);
  CHECK_THROWS_AS(build_sample(nullptr, bump, MonitorConfig{}), InvalidArgument);
}

TEST_CASE("dataset generation is byte-identical across reruns and worker counts") {
  const GenConfig cfg = desk_config();
  const GenSummary s1 = generate_dataset(cfg, "ds_a.txt");
  const GenSummary s2 = generate_dataset(cfg, "ds_b.txt");
  const GenSummary s3 = generate_dataset(cfg, "ds_c.txt", MAParams{}, 3);
  CHECK(s1.accepted == cfg.n_samples);
  CHECK(s2.accepted == cfg.n_samples);
  CHECK(s3.accepted == cfg.n_samples);
  CHECK(s1.rejection_rate <= 0.5);

  const std::string a = slurp("ds_a.txt");
  CHECK(a == slurp("ds_b.txt"));
  CHECK(a == slurp("ds_c.txt"));
  CHECK(a.substr(0, 11) == "UM2N-DATA 1");

  const Dataset ds = load_dataset("ds_a.txt");
  CHECK(ds.config_hash == cfg.hash());
  REQUIRE(static_cast<int>(ds.samples.size()) == cfg.n_samples);
  for (const DatasetSample& s : ds.samples) {
    CHECK_NOTHROW(validate(s));  // includes untangled reference
    CHECK(s.mesh->n_vertices() == 11 * 11);
    CHECK(s.seed != 0);
    for (double m : s.monitor) CHECK(m <= 1.0 + cfg.monitor.alpha + 1e-12);
  }

  // loading and re-writing reproduces the file byte for byte
  std::ostringstream out;
  write_dataset(out, ds);
  CHECK(out.str() == a);

  std::remove("ds_a.txt");
  std::remove("ds_b.txt");
  std::remove("ds_c.txt");
}

TEST_CASE("excessive rejections abort without output") {
  const GenConfig cfg = desk_config();
  MAParams starved;
  starved.max_iters = 1;  // every nontrivial candidate fails to converge
  CHECK_THROWS_AS(generate_dataset(cfg, "ds_abort.txt", starved), DatagenAborted);
  std::ifstream f("ds_abort.txt");
  CHECK(!f.good());
}

TEST_CASE("dataset reader rejects malformed input") {
  std::stringstream empty;
  CHECK_THROWS_AS(read_dataset(empty), ParseError);

  std::stringstream wrong("UM2N-MESH 1\n");
  CHECK_THROWS_AS(read_dataset(wrong), ParseError);

  std::stringstream version("UM2N-DATA 9 00 1\n");
  CHECK_THROWS_AS(read_dataset(version), ParseError);

  std::stringstream truncated("UM2N-DATA 1 00ff 1\nS 9 8\n");
  CHECK_THROWS_AS(read_dataset(truncated), ParseError);

  CHECK_THROWS_AS(load_dataset("no_such_dataset.txt"), Error);
}
