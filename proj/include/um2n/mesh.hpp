#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "um2n/geometry.hpp"

namespace um2n {

/// Boundary polygon of the meshed domain, corners listed CCW.
/// Segment k (1-based) runs from corners[k-1] to corners[k % size].
struct Domain {
  std::vector<Vec2> corners;

  static Domain unit_square();

  int n_segments() const { return static_cast<int>(corners.size()); }
  Vec2 segment_a(int k) const { return corners[k - 1]; }
  Vec2 segment_b(int k) const { return corners[k % corners.size()]; }
};

// Per-vertex boundary tag: 0 = interior, k >= 1 = interior of boundary
// segment k, -k = corner k (the vertex coincides with Domain::corners[k-1]).
inline bool is_boundary(int tag) { return tag != 0; }
inline bool is_corner(int tag) { return tag < 0; }
inline int corner_id(int tag) { return -tag; }

struct Mesh {
  std::vector<Vec2> xy;
  std::vector<std::array<int, 3>> tri;
  std::vector<int> tag;
  Domain domain;

  int n_vertices() const { return static_cast<int>(xy.size()); }
  int n_elements() const { return static_cast<int>(tri.size()); }
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Structured triangulation of the unit square: (n+1)^2 vertices,
/// each grid cell split along its lower-left -> upper-right diagonal.
Mesh generate_unit_square_mesh(int n);

/// Midpoint refinement: every triangle splits into four, halving the edge
/// lengths. New vertices on a domain segment get that segment's tag.
Mesh refine_uniform(const Mesh& mesh);

double signed_volume(const Mesh& mesh, int element_index);
std::vector<double> signed_volumes(const Mesh& mesh);
double total_volume(const Mesh& mesh);

/// Indices of elements with signed volume <= 0; empty means the mesh is valid.
std::vector<int> detect_tangling(const Mesh& mesh);

struct Adjacency {
  std::vector<std::array<int, 2>> edges;          // i < j, sorted lexicographically
  std::vector<std::vector<int>> one_ring;         // sorted neighbor vertices
  std::vector<std::vector<int>> vertex_elements;  // sorted incident elements
};

Adjacency build_adjacency(const Mesh& mesh);

struct BaryCoord {
  int element = -1;
  std::array<double, 3> lambda{};
};

/// Point location by walking across element neighbors from the last hit,
/// with a brute-force fallback. Not thread-safe (mutable walk start).
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  /// Returns nullopt if the point lies outside every element (beyond 1e-10).
  std::optional<BaryCoord> locate(Vec2 p, int hint = -1) const;

  const Mesh& mesh() const { return mesh_; }

 private:
  const Mesh& mesh_;
  std::vector<std::array<int, 3>> neighbor_;  // across edge opposite local vertex
  mutable int last_ = 0;
};

/// Moves corner vertices back to their corners and projects boundary
/// vertices orthogonally onto their segment (clamped to the segment).
/// Interior vertices are untouched.
void project_boundary(std::vector<Vec2>& xy, const std::vector<int>& tag,
                      const Domain& domain);

}  // namespace um2n
