#pragma once

#include <vector>

#include "um2n/mesh.hpp"

namespace um2n {

struct ScalarField {
  MeshPtr mesh;
  std::vector<double> values;
};

struct VectorField {
  MeshPtr mesh;
  std::vector<Vec2> values;
};

/// Symmetric 2x2 matrix, upper triangle stored.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;
};

inline double frobenius(Sym2 h) {
  return std::sqrt(h.xx * h.xx + 2.0 * h.xy * h.xy + h.yy * h.yy);
}

struct TensorField {
  MeshPtr mesh;
  std::vector<Sym2> values;
};

/// Validates the field invariants (length matches vertex count, all finite).
void check_field(const ScalarField& f);

/// Per-vertex gradient: volume-weighted average of incident P1 element
/// gradients. Exact for globally linear fields.
VectorField recover_gradient(const ScalarField& f);

/// Double recovery: recover_gradient applied to each component of the
/// recovered gradient, then symmetrized. Boundary rows carry O(h) bias.
TensorField recover_hessian(const ScalarField& f);

/// Barycentric P1 interpolation of `source` onto the vertices of `target`.
/// A target vertex outside the source mesh (beyond 1e-10) raises
/// PointNotFound naming the vertex.
ScalarField interpolate(const ScalarField& source, const MeshPtr& target);

/// Integral of the P1 interpolant over the mesh (exact for P1 data).
double integral(const ScalarField& f);

/// sqrt(integral of (a-b)^2), element-wise exact quadrature for P1 data.
/// The fields must live on the same mesh.
double l2_norm_diff(const ScalarField& a, const ScalarField& b);

}  // namespace um2n
