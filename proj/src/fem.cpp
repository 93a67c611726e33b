#include "um2n/fem.hpp"

namespace um2n {

namespace {
inline Vec2 perp(Vec2 v) { return {v.y, -v.x}; }
}  // namespace

CsrMatrix assemble_stiffness(const Mesh& mesh) {
  MatrixBuilder b(mesh.n_vertices());
  for (const auto& t : mesh.tri) {
    const Vec2 p0 = mesh.xy[t[0]], p1 = mesh.xy[t[1]], p2 = mesh.xy[t[2]];
    const double area = triangle_area(p0, p1, p2);
    // Shape-function gradients: perp of the opposite edge over 2A.
    const Vec2 g[3] = {(1.0 / (2.0 * area)) * perp(p1 - p2),
                       (1.0 / (2.0 * area)) * perp(p2 - p0),
                       (1.0 / (2.0 * area)) * perp(p0 - p1)};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b.add(t[i], t[j], area * dot(g[i], g[j]));
  }
  return b.build();
}

CsrMatrix assemble_mass(const Mesh& mesh) {
  MatrixBuilder b(mesh.n_vertices());
  for (const auto& t : mesh.tri) {
    const double area = triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b.add(t[i], t[j], area / (i == j ? 6.0 : 12.0));
  }
  return b.build();
}

std::vector<double> lumped_mass(const Mesh& mesh) {
  std::vector<double> m(mesh.n_vertices(), 0.0);
  for (const auto& t : mesh.tri) {
    const double area = triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]);
    for (int v : t) m[v] += area / 3.0;
  }
  return m;
}

}  // namespace um2n
