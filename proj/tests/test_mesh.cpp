#include "um2n/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "um2n/errors.hpp"
#include "um2n/mesh_io.hpp"
#include "um2n/rng.hpp"

using namespace um2n;

namespace {

Mesh single_triangle(Vec2 a, Vec2 b, Vec2 c) {
  Mesh m;
  m.xy = {a, b, c};
  m.tri = {{0, 1, 2}};
  m.tag = {-1, -2, -3};
  m.domain.corners = {a, b, c};
  return m;
}

// Unit square as two triangles split along the (0,0)-(1,1) diagonal.
Mesh two_triangle_square() {
  Mesh m;
  m.xy = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.tri = {{0, 1, 2}, {0, 2, 3}};
  m.tag = {-1, -2, -3, -4};
  m.domain = Domain::unit_square();
  return m;
}

}  // namespace

TEST_CASE("unit square generator: counts, tags, orientation") {
  CHECK_THROWS_AS(generate_unit_square_mesh(1), InvalidArgument);
  CHECK_THROWS_AS(generate_unit_square_mesh(0), InvalidArgument);

  const Mesh m2 = generate_unit_square_mesh(2);
  CHECK(m2.n_vertices() == 9);
  CHECK(m2.n_elements() == 8);
  CHECK(generate_unit_square_mesh(18).n_vertices() == 361);

  for (int n : {2, 5, 18}) {
    const Mesh m = generate_unit_square_mesh(n);
    CHECK(detect_tangling(m).empty());
    CHECK(total_volume(m) == doctest::Approx(1.0).epsilon(1e-12));
    int corners = 0;
    for (int t : m.tag)
      if (is_corner(t)) ++corners;
    CHECK(corners == 4);
  }

  // Corner tags match Domain::corners within 1e-12.
  const Mesh m = generate_unit_square_mesh(5);
  for (int v = 0; v < m.n_vertices(); ++v) {
    if (!is_corner(m.tag[v])) continue;
    const Vec2 c = m.domain.corners[corner_id(m.tag[v]) - 1];
    CHECK(norm(m.xy[v] - c) <= 1e-12);
  }
}

TEST_CASE("signed volume of canonical triangles") {
  CHECK(signed_volume(single_triangle({0, 0}, {1, 0}, {0, 1}), 0) == doctest::Approx(0.5));
  CHECK(signed_volume(single_triangle({0, 0}, {0, 1}, {1, 0}), 0) == doctest::Approx(-0.5));
  CHECK(signed_volume(single_triangle({0, 0}, {2, 0}, {0, 2}), 0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(signed_volume(two_triangle_square(), 2), InvalidArgument);
  CHECK_THROWS_AS(signed_volume(two_triangle_square(), -1), InvalidArgument);
}

TEST_CASE("tangling detection") {
  Mesh m = two_triangle_square();
  CHECK(detect_tangling(m).empty());

  // Drag the far diagonal vertex across the other diagonal: the upper
  // triangle (0,0),(1,1),(0,1) inverts, area -0.25 by direct evaluation.
  m.xy[2] = {-0.5, 0.5};
  const auto bad = detect_tangling(m);
  REQUIRE(bad.size() == 1);
  CHECK(bad[0] == 1);
  CHECK(signed_volume(m, 1) == doctest::Approx(-0.25));
  CHECK(signed_volume(m, 0) > 0.0);

  Mesh degen = single_triangle({0, 0}, {1, 1}, {2, 2});
  CHECK(detect_tangling(degen) == std::vector<int>{0});
}

TEST_CASE("adjacency: edge counts and one-rings") {
  CHECK(build_adjacency(single_triangle({0, 0}, {1, 0}, {0, 1})).edges.size() == 3);

  const Mesh m = generate_unit_square_mesh(2);
  const Adjacency adj = build_adjacency(m);
  // Euler: V - E + F = 1 for a disk; 9 - E + 8 = 1.
  CHECK(adj.edges.size() == 16);
  // Center vertex 4 picks up both diagonal neighbors under the ll->ur split:
  // enumerating incident triangles gives {0,1,3,5,7,8}.
  CHECK(adj.one_ring[4] == std::vector<int>{0, 1, 3, 5, 7, 8});

  for (size_t i = 0; i + 1 < adj.edges.size(); ++i) CHECK(adj.edges[i] < adj.edges[i + 1]);
  for (const auto& e : adj.edges) CHECK(e[0] < e[1]);

  // one_ring symmetry and vertex_elements consistency.
  for (int v = 0; v < m.n_vertices(); ++v) {
    for (int u : adj.one_ring[v]) {
      const auto& r = adj.one_ring[u];
      CHECK(std::find(r.begin(), r.end(), v) != r.end());
    }
    for (int e : adj.vertex_elements[v]) {
      const auto& t = m.tri[e];
      CHECK((t[0] == v || t[1] == v || t[2] == v));
    }
  }
}

TEST_CASE("point location") {
  const Mesh tri = single_triangle({0, 0}, {1, 0}, {0, 1});
  PointLocator loc(tri);
  const auto hit = loc.locate({0.25, 0.25});
  REQUIRE(hit.has_value());
  CHECK(hit->element == 0);
  CHECK(hit->lambda[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hit->lambda[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(hit->lambda[2] == doctest::Approx(0.25).epsilon(1e-12));

  const Mesh m = generate_unit_square_mesh(5);
  PointLocator mloc(m);

  // Vertex hit: all weight on that vertex.
  const auto vhit = mloc.locate(m.xy[7]);
  REQUIRE(vhit.has_value());
  double w = 0.0;
  for (int k = 0; k < 3; ++k)
    if (m.tri[vhit->element][k] == 7) w = vhit->lambda[k];
  CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_FALSE(mloc.locate({2.0, 2.0}).has_value());
  CHECK_FALSE(mloc.locate({-0.01, 0.5}).has_value());

  // Convex-combination property on random interior points.
  Rng rng(1234);
  for (int i = 0; i < 200; ++i) {
    const Vec2 p{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    const auto r = mloc.locate(p);
    REQUIRE(r.has_value());
    Vec2 q{0, 0};
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      CHECK(r->lambda[k] >= -1e-10);
      q += r->lambda[k] * m.xy[m.tri[r->element][k]];
      s += r->lambda[k];
    }
    CHECK(norm(q - p) <= 1e-10);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Boundary points within tolerance still resolve.
  CHECK(mloc.locate({0.5, 1.0 + 5e-11}).has_value());
}

TEST_CASE("boundary projection") {
  const Mesh m = generate_unit_square_mesh(2);
  auto xy = m.xy;
  xy[1] = {0.5, -0.05};   // bottom-edge vertex pushed outside
  xy[8] = {1.1, 0.93};    // corner 3 drifted
  xy[4] = {0.47, 0.52};   // interior vertex, must stay put
  xy[3] = {-0.2, 1.4};    // left-edge vertex beyond the far corner: clamps
  project_boundary(xy, m.tag, m.domain);
  CHECK(xy[1].x == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(xy[1].y == 0.0);
  CHECK(xy[8].x == 1.0);
  CHECK(xy[8].y == 1.0);
  CHECK(xy[4].x == 0.47);
  CHECK(xy[4].y == 0.52);
  // Left segment runs (0,1)->(0,0); clamping lands on its start corner.
  CHECK(xy[3].x == 0.0);
  CHECK(xy[3].y == 1.0);
}

TEST_CASE("native mesh format round-trips bit-exactly") {
  Mesh m = generate_unit_square_mesh(4);
  Rng rng(99);
  for (int v = 0; v < m.n_vertices(); ++v) {
    if (m.tag[v] != 0) continue;
    m.xy[v] += Vec2{rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
  }

  std::stringstream buf;
  write_mesh(buf, m);
  const Mesh r = read_mesh(buf, "buf");

  REQUIRE(r.n_vertices() == m.n_vertices());
  REQUIRE(r.n_elements() == m.n_elements());
  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(r.xy[v].x == m.xy[v].x);
    CHECK(r.xy[v].y == m.xy[v].y);
    CHECK(r.tag[v] == m.tag[v]);
  }
  CHECK(r.tri == m.tri);
  REQUIRE(r.domain.n_segments() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(r.domain.corners[k].x == m.domain.corners[k].x);
    CHECK(r.domain.corners[k].y == m.domain.corners[k].y);
  }

  const std::string path = "tmp_roundtrip.mesh";
  save_mesh(m, path);
  const Mesh f = load_mesh(path);
  CHECK(f.xy[5].x == m.xy[5].x);
  CHECK(f.tri == m.tri);
  std::remove(path.c_str());
}

TEST_CASE("native mesh format rejects malformed input") {
  CHECK_THROWS_AS(load_mesh("does_not_exist.mesh"), Error);

  {
    std::istringstream in("BOGUS 1\n3 1\n");
    CHECK_THROWS_AS(read_mesh(in), ParseError);
  }
  {
    std::istringstream in("UM2N-MESH 2\n3 1\n");
    CHECK_THROWS_AS(read_mesh(in), ParseError);
  }
  {
    // Element references vertex 7 of 4: parse error carrying the line number.
    std::istringstream in(
        "UM2N-MESH 1\n4 1\n0 0 -1\n1 0 -2\n1 1 -3\n0 1 -4\n0 1 7\n");
    try {
      read_mesh(in, "bad");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 7);
      CHECK(std::string(e.what()).find("out of range") != std::string::npos);
    }
  }
  {
    // Truncated: promises 2 elements, provides 1.
    std::istringstream in(
        "UM2N-MESH 1\n4 2\n0 0 -1\n1 0 -2\n1 1 -3\n0 1 -4\n0 1 2\n");
    CHECK_THROWS_AS(read_mesh(in), ParseError);
  }
  {
    // Only two corner tags: domain cannot be reconstructed.
    std::istringstream in("UM2N-MESH 1\n3 1\n0 0 -1\n1 0 -2\n0 1 1\n0 1 2\n");
    CHECK_THROWS_AS(read_mesh(in), ParseError);
  }
}

TEST_CASE("msh 2.2 export/import round-trip") {
  const Mesh m = generate_unit_square_mesh(3);
  const std::string path = "tmp_roundtrip.msh";
  export_msh(m, path);
  const Mesh r = import_msh(path);
  std::remove(path.c_str());

  REQUIRE(r.n_vertices() == m.n_vertices());
  REQUIRE(r.n_elements() == m.n_elements());
  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(r.xy[v].x == m.xy[v].x);
    CHECK(r.xy[v].y == m.xy[v].y);
    CHECK(r.tag[v] == m.tag[v]);
  }
  CHECK(r.tri == m.tri);
  REQUIRE(r.domain.n_segments() == 4);
  CHECK(r.domain.corners[1].x == 1.0);
  CHECK(r.domain.corners[1].y == 0.0);
}

TEST_CASE("msh import: reorientation, skipped and rejected elements") {
  // One CW triangle plus a boundary line element and a point element.
  const char* cw =
      "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
      "$Comment\nanything\n$EndComment\n"
      "$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n"
      "$Elements\n3\n1 15 2 0 1 1\n2 1 2 0 1 1 2\n3 2 2 0 0 1 3 2\n$EndElements\n";
  std::istringstream in(cw);
  const Mesh m = read_msh(in);
  REQUIRE(m.n_elements() == 1);
  CHECK(signed_volume(m, 0) == doctest::Approx(0.5));
  CHECK(detect_tangling(m).empty());
  CHECK(m.domain.n_segments() == 3);

  const char* quad =
      "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
      "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n"
      "$Elements\n1\n1 3 2 0 0 1 2 3 4\n$EndElements\n";
  std::istringstream qin(quad);
  CHECK_THROWS_AS(read_msh(qin), UnsupportedElement);

  const char* missing_end =
      "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
      "$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n"
      "$Elements\n1\n1 2 2 0 0 1 2 3\n$EndElements\n";
  std::istringstream min(missing_end);
  try {
    read_msh(min);
    FAIL("expected ParseError");
  } catch (const UnsupportedElement&) {
    FAIL("wrong error type");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("$EndNodes") != std::string::npos);
  }
}

TEST_CASE("msh import derives boundary tags from the hull loop") {
  // n=2 grid exported without tags: import must recover segment/corner tags.
  const Mesh m = generate_unit_square_mesh(2);
  std::stringstream buf;
  {
    const std::string path = "tmp_tags.msh";
    export_msh(m, path);
    std::ifstream f(path);
    buf << f.rdbuf();
    std::remove(path.c_str());
  }
  const Mesh r = read_msh(buf);
  CHECK(r.tag == m.tag);
  CHECK(r.tag[4] == 0);   // center stays interior
  CHECK(r.tag[0] == -1);  // lexicographically smallest corner starts the loop
  CHECK(r.tag[1] == 1);
  CHECK(r.tag[5] == 2);
}
