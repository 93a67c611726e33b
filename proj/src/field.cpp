#include "um2n/field.hpp"

#include <cmath>
#include <string>

#include "um2n/errors.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

void check_field(const ScalarField& f) {
  if (!f.mesh) throw InvalidArgument("field has no mesh");
  if (static_cast<int>(f.values.size()) != f.mesh->n_vertices())
    throw InvalidArgument("field has " + std::to_string(f.values.size()) + " values for " +
                          std::to_string(f.mesh->n_vertices()) + " vertices");
  for (double v : f.values)
    if (!std::isfinite(v)) throw InvalidArgument("field contains a non-finite value");
}

namespace {

// 90-degree clockwise rotation; perp(b - c) scaled by 1/(2A) is the P1
// shape-function gradient of the vertex opposite edge (b, c).
inline Vec2 perp(Vec2 v) { return {v.y, -v.x}; }

Vec2 element_gradient(const Mesh& m, int e, const std::vector<double>& u) {
  const auto& t = m.tri[e];
  const Vec2 a = m.xy[t[0]], b = m.xy[t[1]], c = m.xy[t[2]];
  const double inv2a = 1.0 / cross(b - a, c - a);
  return inv2a * (u[t[0]] * perp(b - c) + u[t[1]] * perp(c - a) + u[t[2]] * perp(a - b));
}

std::vector<Vec2> vertex_gradients(const Mesh& m, const std::vector<double>& u) {
  std::vector<Vec2> acc(m.n_vertices(), Vec2{});
  std::vector<double> wsum(m.n_vertices(), 0.0);
  for (int e = 0; e < m.n_elements(); ++e) {
    const auto& t = m.tri[e];
    const double area = triangle_area(m.xy[t[0]], m.xy[t[1]], m.xy[t[2]]);
    const Vec2 g = element_gradient(m, e, u);
    for (int v : t) {
      acc[v] += area * g;
      wsum[v] += area;
    }
  }
  for (int v = 0; v < m.n_vertices(); ++v) acc[v] = (1.0 / wsum[v]) * acc[v];
  return acc;
}

}  // namespace

VectorField recover_gradient(const ScalarField& f) {
  check_field(f);
  return {f.mesh, vertex_gradients(*f.mesh, f.values)};
}

TensorField recover_hessian(const ScalarField& f) {
  check_field(f);
  const Mesh& m = *f.mesh;
  const auto g = vertex_gradients(m, f.values);
  std::vector<double> gx(m.n_vertices()), gy(m.n_vertices());
  for (int v = 0; v < m.n_vertices(); ++v) {
    gx[v] = g[v].x;
    gy[v] = g[v].y;
  }
  const auto hx = vertex_gradients(m, gx);  // (u_xx, u_xy)
  const auto hy = vertex_gradients(m, gy);  // (u_yx, u_yy)
  TensorField h{f.mesh, std::vector<Sym2>(m.n_vertices())};
  for (int v = 0; v < m.n_vertices(); ++v)
    h.values[v] = {hx[v].x, 0.5 * (hx[v].y + hy[v].x), hy[v].y};
  return h;
}

ScalarField interpolate(const ScalarField& source, const MeshPtr& target) {
  check_field(source);
  if (!target) throw InvalidArgument("interpolate: no target mesh");
  PointLocator loc(*source.mesh);
  ScalarField out{target, std::vector<double>(target->n_vertices())};
  for (int v = 0; v < target->n_vertices(); ++v) {
    const Vec2 p = target->xy[v];
    const auto hit = loc.locate(p);
    if (!hit)
      throw PointNotFound("target vertex " + std::to_string(v) + " at (" + fmt_g17(p.x) + ", " +
                          fmt_g17(p.y) + ") lies outside the source mesh");
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += hit->lambda[k] * source.values[source.mesh->tri[hit->element][k]];
    out.values[v] = s;
  }
  return out;
}

double integral(const ScalarField& f) {
  check_field(f);
  const Mesh& m = *f.mesh;
  double s = 0.0;
  for (int e = 0; e < m.n_elements(); ++e) {
    const auto& t = m.tri[e];
    const double area = triangle_area(m.xy[t[0]], m.xy[t[1]], m.xy[t[2]]);
    s += area * (f.values[t[0]] + f.values[t[1]] + f.values[t[2]]) / 3.0;
  }
  return s;
}

double l2_norm_diff(const ScalarField& a, const ScalarField& b) {
  check_field(a);
  check_field(b);
  const Mesh& m = *a.mesh;
  bool same = a.mesh == b.mesh;
  if (!same && b.mesh && b.mesh->n_vertices() == m.n_vertices() &&
      b.mesh->tri == m.tri) {
    same = true;
    for (int v = 0; v < m.n_vertices(); ++v)
      if (b.mesh->xy[v].x != m.xy[v].x || b.mesh->xy[v].y != m.xy[v].y) {
        same = false;
        break;
      }
  }
  if (!same) throw InvalidArgument("l2_norm_diff: fields live on different meshes");

  // Exact integral of a squared P1 function on a triangle:
  // (A/6) * (w1^2 + w2^2 + w3^2 + w1 w2 + w1 w3 + w2 w3).
  double s = 0.0;
  for (int e = 0; e < m.n_elements(); ++e) {
    const auto& t = m.tri[e];
    const double area = triangle_area(m.xy[t[0]], m.xy[t[1]], m.xy[t[2]]);
    const double w1 = a.values[t[0]] - b.values[t[0]];
    const double w2 = a.values[t[1]] - b.values[t[1]];
    const double w3 = a.values[t[2]] - b.values[t[2]];
    s += (area / 6.0) * (w1 * w1 + w2 * w2 + w3 * w3 + w1 * w2 + w1 * w3 + w2 * w3);
  }
  return std::sqrt(std::max(s, 0.0));
}

}  // namespace um2n
