#include "um2n/ma.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "doctest.h"
#include "um2n/mesh.hpp"
#include "um2n/monitor.hpp"

using namespace um2n;

namespace {

MeshPtr square(int n) { return std::make_shared<Mesh>(generate_unit_square_mesh(n)); }

ScalarField ramp_monitor(const MeshPtr& mesh) {
  ScalarField m{mesh, std::vector<double>(mesh->n_vertices())};
  for (int v = 0; v < mesh->n_vertices(); ++v) m.values[v] = 1.0 + 5.0 * mesh->xy[v].x;
  return m;
}

// Equidistributing m = 1 + 5x in 1d: x + 2.5 x^2 = 3.5 xi.
double ramp_map(double xi) { return (std::sqrt(1.0 + 35.0 * xi) - 1.0) / 5.0; }

double interior_map_error(const Mesh& ref, const Mesh& moved) {
  double err = 0.0;
  for (int v = 0; v < ref.n_vertices(); ++v) {
    if (ref.tag[v] != 0) continue;
    err = std::max(err, std::fabs(moved.xy[v].x - ramp_map(ref.xy[v].x)));
  }
  return err;
}

double min_signed_volume(const Mesh& mesh) {
  const auto sv = signed_volumes(mesh);
  return *std::min_element(sv.begin(), sv.end());
}

// [0,2]x[0,1] with [0,1]x[1,2] on top: six corners, reflex at (1,1).
MeshPtr l_shaped_mesh(int n) {
  Mesh m;
  m.domain.corners = {{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
  const double h = 1.0 / n;
  const int s = 2 * n + 1;
  std::map<std::pair<int, int>, int> id;
  const auto keep = [&](int i, int j) { return !(i > n && j > n); };
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i) {
      if (!keep(i, j)) continue;
      id[{i, j}] = static_cast<int>(m.xy.size());
      m.xy.push_back({i * h, j * h});
      int t = 0;
      if (i == 0 && j == 0) t = -1;
      else if (i == 2 * n && j == 0) t = -2;
      else if (i == 2 * n && j == n) t = -3;
      else if (i == n && j == n) t = -4;
      else if (i == n && j == 2 * n) t = -5;
      else if (i == 0 && j == 2 * n) t = -6;
      else if (j == 0) t = 1;
      else if (i == 2 * n) t = 2;
      else if (j == n && i > n) t = 3;
      else if (i == n && j > n) t = 4;
      else if (j == 2 * n) t = 5;
      else if (i == 0) t = 6;
      m.tag.push_back(t);
    }
  for (int j = 0; j < 2 * n; ++j)
    for (int i = 0; i < 2 * n; ++i) {
      if (!(keep(i, j) && keep(i + 1, j) && keep(i, j + 1) && keep(i + 1, j + 1))) continue;
      const int ll = id[{i, j}], lr = id[{i + 1, j}], ul = id[{i, j + 1}], ur = id[{i + 1, j + 1}];
      m.tri.push_back({ll, lr, ur});
      m.tri.push_back({ll, ur, ul});
    }
  return std::make_shared<Mesh>(m);
}

}  // namespace

TEST_CASE("compute_theta averages the monitor over the domain") {
  auto mesh = square(8);
  ScalarField one{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
  CHECK(compute_theta(*mesh, one) == doctest::Approx(1.0).epsilon(1e-12));

  ScalarField c{mesh, std::vector<double>(mesh->n_vertices(), 3.5)};
  CHECK(compute_theta(*mesh, c) == doctest::Approx(3.5).epsilon(1e-12));

  // Linear monitor: element means are exact, so theta = integral(1 + x) = 1.5.
  ScalarField lin{mesh, std::vector<double>(mesh->n_vertices())};
  for (int v = 0; v < mesh->n_vertices(); ++v) lin.values[v] = 1.0 + mesh->xy[v].x;
  CHECK(compute_theta(*mesh, lin) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("compute_theta rejects bad monitors") {
  auto mesh = square(4);
  ScalarField m{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
  m.values[3] = 0.0;
  CHECK_THROWS_AS(compute_theta(*mesh, m), InvalidArgument);

  auto other = square(6);
  ScalarField wrong{other, std::vector<double>(other->n_vertices(), 1.0)};
  CHECK_THROWS_AS(compute_theta(*mesh, wrong), InvalidArgument);
}

TEST_CASE("equidistribution_cv is zero for a uniform weighting") {
  auto mesh = square(6);
  ScalarField one{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
  CHECK(equidistribution_cv(*mesh, one) <= 1e-12);
}

TEST_CASE("equidistribution_cv matches a two-element hand computation") {
  // Unit square split along the diagonal; monitor 1,2,3,4 at the corners.
  // Weights: (1+2+3)/3 * 1/2 = 1 and (1+3+4)/3 * 1/2 = 4/3, so the
  // coefficient of variation is (1/6) / (7/6) = 1/7.
  Mesh m;
  m.domain = Domain::unit_square();
  m.xy = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.tag = {-1, -2, -3, -4};
  m.tri = {{0, 1, 2}, {0, 2, 3}};
  auto mesh = std::make_shared<Mesh>(m);
  ScalarField f{mesh, {1.0, 2.0, 3.0, 4.0}};
  CHECK(equidistribution_cv(*mesh, f) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("equidistribution_cv rejects a tangled mesh") {
  Mesh raw = generate_unit_square_mesh(2);
  raw.xy[4] = {2.0, 2.0};  // center vertex pushed far outside
  auto mesh = std::make_shared<Mesh>(raw);
  ScalarField one{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
  CHECK_THROWS_AS(equidistribution_cv(*mesh, one), InvalidArgument);
}

TEST_CASE("solve_ma validates its inputs") {
  auto mesh = square(6);
  ScalarField one{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};

  CHECK_THROWS_AS(solve_ma(nullptr, one), InvalidArgument);

  MAParams bad;
  bad.pseudo_dt = 0.0;
  CHECK_THROWS_AS(solve_ma(mesh, one, bad), InvalidArgument);
  bad = MAParams{};
  bad.max_iters = 0;
  CHECK_THROWS_AS(solve_ma(mesh, one, bad), InvalidArgument);
  bad = MAParams{};
  bad.rel_tol = 0.0;
  CHECK_THROWS_AS(solve_ma(mesh, one, bad), InvalidArgument);

  ScalarField below{mesh, std::vector<double>(mesh->n_vertices(), 0.5)};
  CHECK_THROWS_AS(solve_ma(mesh, below), InvalidArgument);

  auto other = square(4);
  ScalarField wrong{other, std::vector<double>(other->n_vertices(), 1.0)};
  CHECK_THROWS_AS(solve_ma(mesh, wrong), InvalidArgument);

  Mesh raw = generate_unit_square_mesh(3);
  raw.xy[5] = {3.0, 3.0};
  auto tangled = std::make_shared<Mesh>(raw);
  ScalarField t1{tangled, std::vector<double>(tangled->n_vertices(), 1.0)};
  CHECK_THROWS_AS(solve_ma(tangled, t1), InvalidArgument);
}

TEST_CASE("solve_ma with a uniform monitor is an immediate fixed point") {
  auto mesh = square(12);
  ScalarField one{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
  const MAState st = solve_ma(mesh, one);
  CHECK(st.converged);
  CHECK(st.residual_history.size() == 1);
  CHECK(st.residual_history[0] <= 1e-12);
  CHECK(st.theta == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(st.moved);
  // No movement at all: the state still points at the input coordinates.
  for (int v = 0; v < mesh->n_vertices(); ++v) {
    CHECK(st.moved->xy[v].x == mesh->xy[v].x);
    CHECK(st.moved->xy[v].y == mesh->xy[v].y);
  }
  REQUIRE(st.phi.size() == static_cast<size_t>(mesh->n_vertices()));
  REQUIRE(st.hessian.size() == st.phi.size());
  for (double p : st.phi) CHECK(p == 0.0);
}

TEST_CASE("solve_ma reproduces the 1d equidistributed map for a linear ramp") {
  auto mesh = square(20);
  const ScalarField m = ramp_monitor(mesh);
  const double cv_before = equidistribution_cv(*mesh, m);

  const MAState st = solve_ma(mesh, m);
  CHECK(st.converged);
  CHECK(st.residual_history.size() <= 50);
  CHECK(st.residual_history.back() < st.residual_history.front());
  REQUIRE(st.moved);
  CHECK(st.moved->tri == mesh->tri);  // connectivity untouched
  CHECK(min_signed_volume(*st.moved) > 0.0);

  // Against the exact map x(xi) = (sqrt(1 + 35 xi) - 1) / 5.
  CHECK(interior_map_error(*mesh, *st.moved) < 1e-2);
  const int center = 10 * 21 + 10;  // xi = (0.5, 0.5)
  CHECK(st.moved->xy[center].x == doctest::Approx(0.660232).epsilon(5e-4));

  // Boundary vertices stay on their segments, corners stay put.
  for (int v = 0; v < mesh->n_vertices(); ++v) {
    const int tag = mesh->tag[v];
    const Vec2 p = st.moved->xy[v];
    if (is_corner(tag)) {
      CHECK(p.x == mesh->xy[v].x);
      CHECK(p.y == mesh->xy[v].y);
    } else if (tag == 1) {
      CHECK(std::fabs(p.y) <= 1e-10);
    } else if (tag == 2) {
      CHECK(std::fabs(p.x - 1.0) <= 1e-10);
    } else if (tag == 3) {
      CHECK(std::fabs(p.y - 1.0) <= 1e-10);
    } else if (tag == 4) {
      CHECK(std::fabs(p.x) <= 1e-10);
    }
  }
  CHECK(total_volume(*st.moved) == doctest::Approx(1.0).epsilon(1e-10));

  // Movement must improve the equidistribution of the monitor it targeted.
  const ScalarField m_after = interpolate(m, st.moved);
  CHECK(equidistribution_cv(*st.moved, m_after) < cv_before);
}

TEST_CASE("solve_ma map error tightens under refinement") {
  auto coarse = square(20);
  auto fine = square(40);
  const MAState a = solve_ma(coarse, ramp_monitor(coarse));
  const MAState b = solve_ma(fine, ramp_monitor(fine));
  CHECK(a.converged);
  CHECK(b.converged);
  const double ea = interior_map_error(*coarse, *a.moved);
  const double eb = interior_map_error(*fine, *b.moved);
  CHECK(eb < 3e-3);
  CHECK(eb <= 0.55 * ea);
}

TEST_CASE("solve_ma concentrates vertices on a ring feature") {
  auto mesh = square(20);
  const int nv = mesh->n_vertices();
  ScalarField u{mesh, std::vector<double>(nv)};
  const double r0 = 0.2, cx = 0.30, cy = 0.30, sg = 0.05 / 3.0;
  for (int v = 0; v < nv; ++v) {
    const double dx = mesh->xy[v].x - cx, dy = mesh->xy[v].y - cy;
    const double rr = std::sqrt(dx * dx + dy * dy);
    u.values[v] = std::exp(-(rr - r0) * (rr - r0) / (2.0 * sg * sg));
  }
  MonitorConfig mc;
  mc.kind = MonitorKind::combined;
  mc.alpha = 5.0;
  mc.beta = 10.0;
  const ScalarField m = compute_monitor(u, mc);
  const double cv_before = equidistribution_cv(*mesh, m);

  const MAState st = solve_ma(mesh, m);
  CHECK(st.converged);
  REQUIRE(st.moved);
  CHECK(min_signed_volume(*st.moved) > 0.0);

  const ScalarField m_after = interpolate(m, st.moved);
  const double cv_after = equidistribution_cv(*st.moved, m_after);
  CHECK(cv_after * 5.0 <= cv_before);  // measured: ~12x
}

TEST_CASE("solve_ma reports the best iterate when the budget runs out") {
  auto mesh = square(20);
  const ScalarField m = ramp_monitor(mesh);
  MAParams p;
  p.max_iters = 3;
  bool thrown = false;
  try {
    solve_ma(mesh, m, p);
  } catch (const MANotConverged& e) {
    thrown = true;
    CHECK(e.state.residual_history.size() == 3);
    CHECK_FALSE(e.state.converged);
    REQUIRE(e.state.moved);
    CHECK(min_signed_volume(*e.state.moved) > 0.0);
    CHECK(e.state.phi.size() == static_cast<size_t>(mesh->n_vertices()));
    CHECK(e.state.hessian.size() == e.state.phi.size());
    // Best iterate: its residual is the smallest seen.
    const auto& h = e.state.residual_history;
    CHECK(*std::min_element(h.begin(), h.end()) == h.back());
  }
  CHECK(thrown);
}

TEST_CASE("solve_ma surfaces unrecoverable tangling with the offending iterate") {
  // A needle-sharp monitor spike on a coarse non-convex domain collapses the
  // one-ring around the spike faster than step halving can recover.
  auto mesh = l_shaped_mesh(8);
  const int nv = mesh->n_vertices();
  ScalarField m{mesh, std::vector<double>(nv)};
  for (int v = 0; v < nv; ++v) {
    const double dx = mesh->xy[v].x - 0.98, dy = mesh->xy[v].y - 0.98;
    m.values[v] = 1.0 + 1000.0 * std::exp(-(dx * dx + dy * dy) / (0.02 * 0.02));
  }
  bool thrown = false;
  try {
    solve_ma(mesh, m);
  } catch (const MATangled& e) {
    thrown = true;
    REQUIRE(e.state.moved);
    CHECK(e.state.moved->n_vertices() == nv);
    CHECK_FALSE(e.state.converged);
    CHECK(e.state.residual_history.size() >= 1);
    CHECK(min_signed_volume(*e.state.moved) <= 0.0);  // the offending iterate
    // The input mesh itself is untouched.
    CHECK(mesh->xy[0].x == 0.0);
    CHECK(min_signed_volume(*mesh) > 0.0);
  }
  CHECK(thrown);
}

TEST_CASE("solve_ma on a valid non-convex domain keeps boundary structure") {
  auto mesh = l_shaped_mesh(6);
  const int nv = mesh->n_vertices();
  ScalarField m{mesh, std::vector<double>(nv)};
  for (int v = 0; v < nv; ++v) {
    const double dx = mesh->xy[v].x - 0.5, dy = mesh->xy[v].y - 0.5;
    m.values[v] = 1.0 + 3.0 * std::exp(-(dx * dx + dy * dy) / 0.08);
  }
  // The reflex corner leaves more unreachable misfit than a convex domain,
  // so the smoothed residual floors near 3e-4 here.
  MAParams p;
  p.rel_tol = 1e-3;
  const MAState st = solve_ma(mesh, m, p);
  CHECK(st.converged);
  CHECK(min_signed_volume(*st.moved) > 0.0);
  CHECK(total_volume(*st.moved) == doctest::Approx(3.0).epsilon(1e-10));
  for (int v = 0; v < nv; ++v)
    if (is_corner(mesh->tag[v])) {
      CHECK(st.moved->xy[v].x == mesh->xy[v].x);
      CHECK(st.moved->xy[v].y == mesh->xy[v].y);
    }
}
