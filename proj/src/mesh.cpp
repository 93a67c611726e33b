#include "um2n/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "um2n/errors.hpp"

namespace um2n {

Domain Domain::unit_square() {
  return Domain{{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}};
}

Mesh generate_unit_square_mesh(int n) {
  if (n < 2) throw InvalidArgument("mesh subdivisions must be >= 2, got " + std::to_string(n));
  Mesh m;
  m.domain = Domain::unit_square();
  const int s = n + 1;
  m.xy.resize(static_cast<size_t>(s) * s);
  m.tag.resize(m.xy.size());
  const double h = 1.0 / n;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      const int v = j * s + i;
      m.xy[v] = {i * h, j * h};
      int t = 0;
      if (i == 0 && j == 0) t = -1;
      else if (i == n && j == 0) t = -2;
      else if (i == n && j == n) t = -3;
      else if (i == 0 && j == n) t = -4;
      else if (j == 0) t = 1;
      else if (i == n) t = 2;
      else if (j == n) t = 3;
      else if (i == 0) t = 4;
      m.tag[v] = t;
    }
  }
  m.tri.reserve(static_cast<size_t>(2) * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int ll = j * s + i, lr = ll + 1, ul = ll + s, ur = ul + 1;
      m.tri.push_back({ll, lr, ur});
      m.tri.push_back({ll, ur, ul});
    }
  }
  return m;
}

Mesh refine_uniform(const Mesh& mesh) {
  if (mesh.n_elements() == 0) throw InvalidArgument("refine_uniform: empty mesh");

  Mesh out;
  out.domain = mesh.domain;
  out.xy = mesh.xy;
  out.tag = mesh.tag;
  out.tri.reserve(static_cast<size_t>(4) * mesh.tri.size());

  auto on_segment = [&](Vec2 p, int k) {
    const Vec2 a = mesh.domain.segment_a(k), b = mesh.domain.segment_b(k);
    const Vec2 d = b - a;
    if (std::abs(cross(d, p - a)) > 1e-12) return false;
    const double t = dot(p - a, d) / norm2(d);
    return t >= -1e-12 && t <= 1.0 + 1e-12;
  };

  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const std::pair<int, int> key = std::minmax(a, b);
    const auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Vec2 p = 0.5 * (mesh.xy[a] + mesh.xy[b]);
    int tag = 0;
    if (mesh.tag[a] != 0 && mesh.tag[b] != 0)
      for (int k = 1; k <= mesh.domain.n_segments(); ++k)
        if (on_segment(p, k)) {
          tag = k;
          break;
        }
    const int v = static_cast<int>(out.xy.size());
    out.xy.push_back(p);
    out.tag.push_back(tag);
    midpoint.emplace(key, v);
    return v;
  };

  for (const auto& t : mesh.tri) {
    const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
    out.tri.push_back({t[0], ab, ca});
    out.tri.push_back({ab, t[1], bc});
    out.tri.push_back({ca, bc, t[2]});
    out.tri.push_back({ab, bc, ca});
  }
  return out;
}

double signed_volume(const Mesh& mesh, int e) {
  if (e < 0 || e >= mesh.n_elements())
    throw InvalidArgument("element index " + std::to_string(e) + " out of range");
  const auto& t = mesh.tri[e];
  return triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]);
}

std::vector<double> signed_volumes(const Mesh& mesh) {
  std::vector<double> v(mesh.n_elements());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& t = mesh.tri[e];
    v[e] = triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]);
  }
  return v;
}

double total_volume(const Mesh& mesh) {
  double s = 0.0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& t = mesh.tri[e];
    s += triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]);
  }
  return s;
}

std::vector<int> detect_tangling(const Mesh& mesh) {
  std::vector<int> bad;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& t = mesh.tri[e];
    if (triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]) <= 0.0) bad.push_back(e);
  }
  return bad;
}

Adjacency build_adjacency(const Mesh& mesh) {
  Adjacency adj;
  adj.edges.reserve(static_cast<size_t>(mesh.n_elements()) * 3 / 2);
  for (const auto& t : mesh.tri) {
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      adj.edges.push_back({a, b});
    }
  }
  std::sort(adj.edges.begin(), adj.edges.end());
  adj.edges.erase(std::unique(adj.edges.begin(), adj.edges.end()), adj.edges.end());

  adj.one_ring.resize(mesh.n_vertices());
  for (const auto& e : adj.edges) {
    adj.one_ring[e[0]].push_back(e[1]);
    adj.one_ring[e[1]].push_back(e[0]);
  }
  for (auto& ring : adj.one_ring) std::sort(ring.begin(), ring.end());

  adj.vertex_elements.resize(mesh.n_vertices());
  for (int e = 0; e < mesh.n_elements(); ++e)
    for (int v : mesh.tri[e]) adj.vertex_elements[v].push_back(e);
  return adj;
}

namespace {

std::array<double, 3> barycentric(const Mesh& mesh, int e, Vec2 p) {
  const auto& t = mesh.tri[e];
  const Vec2 a = mesh.xy[t[0]], b = mesh.xy[t[1]], c = mesh.xy[t[2]];
  const double area = cross(b - a, c - a);
  if (area == 0.0) return {-1.0, -1.0, -1.0};
  const double la = cross(b - p, c - p) / area;
  const double lb = cross(c - p, a - p) / area;
  return {la, lb, 1.0 - la - lb};
}

Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double len2 = norm2(d);
  if (len2 == 0.0) return a;
  const double s = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
  return a + s * d;
}

Vec2 closest_point_on_triangle(const Mesh& mesh, int e, Vec2 p) {
  const auto& t = mesh.tri[e];
  Vec2 best{};
  double best_d = 1e300;
  for (int k = 0; k < 3; ++k) {
    const Vec2 q = closest_point_on_segment(p, mesh.xy[t[k]], mesh.xy[t[(k + 1) % 3]]);
    const double d = norm2(q - p);
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

}  // namespace

PointLocator::PointLocator(const Mesh& mesh) : mesh_(mesh) {
  neighbor_.assign(mesh.n_elements(), {-1, -1, -1});
  // Edge (min,max) -> (element, local index of the opposite vertex).
  std::unordered_map<std::uint64_t, std::pair<int, int>> seen;
  seen.reserve(static_cast<size_t>(mesh.n_elements()) * 2);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& t = mesh.tri[e];
    for (int k = 0; k < 3; ++k) {
      int a = t[(k + 1) % 3], b = t[(k + 2) % 3];
      if (a > b) std::swap(a, b);
      const std::uint64_t key =
          (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen.emplace(key, std::make_pair(e, k));
      } else {
        neighbor_[e][k] = it->second.first;
        neighbor_[it->second.first][it->second.second] = e;
      }
    }
  }
}

std::optional<BaryCoord> PointLocator::locate(Vec2 p, int hint) const {
  constexpr double kTol = 1e-10;
  const int ne = mesh_.n_elements();
  if (ne == 0) return std::nullopt;
  int e = (hint >= 0 && hint < ne) ? hint : last_;
  for (int steps = 0; steps < 2 * ne + 4; ++steps) {
    const auto l = barycentric(mesh_, e, p);
    int worst = 0;
    for (int k = 1; k < 3; ++k)
      if (l[k] < l[worst]) worst = k;
    if (l[worst] >= -kTol) {
      last_ = e;
      return BaryCoord{e, l};
    }
    const int next = neighbor_[e][worst];
    if (next < 0) break;  // left the mesh through a boundary edge
    e = next;
  }
  // Fallback: scan everything, keep the best enclosure.
  int best_e = -1;
  double best_min = -1e300;
  for (int i = 0; i < ne; ++i) {
    const auto l = barycentric(mesh_, i, p);
    const double mn = std::min({l[0], l[1], l[2]});
    if (mn > best_min) {
      best_min = mn;
      best_e = i;
    }
  }
  if (best_e >= 0 && best_min >= -kTol) {
    last_ = best_e;
    return BaryCoord{best_e, barycentric(mesh_, best_e, p)};
  }
  // The best cell excludes p in barycentric terms, which is scale-relative:
  // a point hugging the boundary from outside still counts as inside when
  // its Euclidean distance to some cell is below the same tolerance.
  int near_e = -1;
  double near_d2 = kTol * kTol;
  Vec2 near_q{};
  for (int i = 0; i < ne; ++i) {
    const Vec2 q = closest_point_on_triangle(mesh_, i, p);
    const double d2 = norm2(q - p);
    if (d2 <= near_d2) {
      near_d2 = d2;
      near_e = i;
      near_q = q;
    }
  }
  if (near_e >= 0) {
    auto l = barycentric(mesh_, near_e, near_q);
    double s = 0.0;
    for (double& lk : l) {
      lk = std::max(lk, 0.0);
      s += lk;
    }
    for (double& lk : l) lk /= s;
    last_ = near_e;
    return BaryCoord{near_e, l};
  }
  return std::nullopt;
}

void project_boundary(std::vector<Vec2>& xy, const std::vector<int>& tag,
                      const Domain& domain) {
  for (size_t v = 0; v < xy.size(); ++v) {
    const int t = tag[v];
    if (t == 0) continue;
    if (is_corner(t)) {
      xy[v] = domain.corners[corner_id(t) - 1];
      continue;
    }
    const Vec2 a = domain.segment_a(t), b = domain.segment_b(t);
    const Vec2 d = b - a;
    const double len2 = norm2(d);
    double s = len2 > 0.0 ? dot(xy[v] - a, d) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    xy[v] = a + s * d;
  }
}

}  // namespace um2n
